//! Whole-model gradient verification on a synthetic batch.

use crate::attention::SubjectIndexSet;
use crate::encoders::{Bound, Model, ModelConfig, SentimentDistribution};
use crate::error::Result;
use crate::loss::{reweight_matrix, total_loss_from_logits};
use crate::tensor::{finite_diff_check, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Check every parameter of a model built from `cfg` against central
/// differences, on a random B=2 batch through the full contrastive loss.
/// Returns the max relative error.
pub fn full_model_gradcheck(cfg: &ModelConfig, seed: u64, beta: f64) -> Result<f64> {
    let mut cfg = cfg.clone();
    if cfg.vocab_size == 0 {
        cfg.vocab_size = 16;
    }
    let model = Model::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);

    let b = 2usize;
    let groups = b * cfg.t;
    let (m, dp) = (cfg.m(), cfg.patch_dim());
    let patch_data: Vec<f64> = (0..groups * m * dp).map(|_| rng.random::<f64>()).collect();
    let patches = Tensor::new(&[groups, m, dp], patch_data)?;
    let subjects: Vec<SubjectIndexSet> = (0..groups)
        .map(|_| {
            let k = rng.random_range(0..=m);
            let mut idx: Vec<usize> = (0..m).collect();
            for i in (1..idx.len()).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            SubjectIndexSet::new(idx[..k].to_vec())
        })
        .collect();
    let texts: Vec<Vec<u32>> = (0..b)
        .map(|_| {
            let len = rng.random_range(1..=cfg.max_text_len.min(6));
            (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect()
        })
        .collect();
    let sentiments: Vec<SentimentDistribution> = (0..b)
        .map(|_| {
            let mut v = [0.0; 7];
            for x in v.iter_mut() {
                *x = rng.random::<f64>().max(1e-6);
            }
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            SentimentDistribution::new(v).expect("simplex")
        })
        .collect();
    let rw = reweight_matrix(&sentiments, beta)?;

    let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
    let tensors: Vec<Tensor> = model.params.iter().map(|p| p.tensor.clone()).collect();
    let build = |g: &mut Graph, vars: &[Var]| {
        let bound = Bound::from_parts(
            names.iter().cloned().zip(0..names.len()).collect(),
            vars.to_vec(),
        );
        let v = model.forward_video(g, &bound, &patches, &subjects, b)?;
        let t = model.forward_text(g, &bound, &texts)?;
        let tt = g.transpose(t)?;
        let sims = g.matmul(v, tt)?;
        let inv_tau = model.inv_tau(g, &bound);
        let logits = g.mul_scalar(sims, inv_tau)?;
        total_loss_from_logits(g, logits, &rw)
    };
    finite_diff_check(&build, &tensors, 1e-5)
}
