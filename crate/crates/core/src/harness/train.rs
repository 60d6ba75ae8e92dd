//! Contrastive training loop.

use super::optim::{AdamW, OptimizerParams};
use crate::data::{make_batches, Batch, BatchStrategy, ClipRecord};
use crate::encoders::{
    LexiconScorer, Model, ModelConfig, SentimentDistribution, SentimentScorer, Tokenizer,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::loss::{reweight_matrix, total_loss_from_logits};
use crate::tensor::{Graph, Tensor};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_strategy")]
    pub batch_strategy: BatchStrategy,
    /// Subject-pixel fraction a patch needs to join P.
    #[serde(default)]
    pub mask_threshold: f64,
}

fn default_beta() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    3e-4
}
fn default_batch_size() -> usize {
    16
}
fn default_epochs() -> usize {
    10
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.98
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_strategy() -> BatchStrategy {
    BatchStrategy::Shuffle
}

impl Default for TrainParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// Full training configuration: architecture plus optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainParams,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.lr <= 0.0 || t.lr.is_nan() {
            return Err(Error::validation("lr must be positive"));
        }
        if t.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if t.batch_size < 1 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if t.beta < 0.0 {
            return Err(Error::validation("beta must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub steps: usize,
    pub epoch_mean_loss: Vec<f64>,
    pub vocab_size: usize,
}

/// Preprocessed per-record training inputs.
struct Prepared {
    tokens: Vec<Vec<u32>>,
    sentiments: Vec<SentimentDistribution>,
    subjects: Vec<Vec<crate::attention::SubjectIndexSet>>,
}

fn prepare(
    records: &[ClipRecord],
    tokenizer: &Tokenizer,
    cfg: &ModelConfig,
    mask_threshold: f64,
) -> Result<Prepared> {
    let scorer = LexiconScorer;
    let tokens = records
        .iter()
        .map(|r| tokenizer.encode(&r.caption, cfg.max_text_len))
        .collect();
    let sentiments = records
        .iter()
        .map(|r| match &r.sentiment {
            Some(s) => s.clone(),
            None => scorer.score(&r.caption),
        })
        .collect();
    let subjects = records
        .iter()
        .map(|r| r.subjects(cfg.patch_size, mask_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        tokens,
        sentiments,
        subjects,
    })
}

/// Assemble the `[b·t, m, patch²·3]` patch tensor for a batch.
fn batch_patches(model: &Model, records: &[ClipRecord], batch: &Batch) -> Result<Tensor> {
    let cfg = &model.config;
    let (m, dp) = (cfg.m(), cfg.patch_dim());
    let per_clip = cfg.t * m * dp;
    let mut data = vec![0.0; batch.indices.len() * per_clip];
    for (bi, &ri) in batch.indices.iter().enumerate() {
        let clip = records[ri].frame_input();
        clip.validate()?;
        if clip.h != cfg.image_size || clip.w != cfg.image_size || clip.t != cfg.t {
            return Err(Error::validation(format!(
                "record {} is {}×{}×{}, model expects {}×{}×{}",
                records[ri].id, clip.t, clip.h, clip.w, cfg.t, cfg.image_size, cfg.image_size
            )));
        }
        let patches = model.clip_patches(&clip)?;
        data[bi * per_clip..(bi + 1) * per_clip].copy_from_slice(patches.data());
    }
    Tensor::new(&[batch.indices.len() * cfg.t, m, dp], data)
}

/// Train a model on `records`, logging one JSON line per step to `log`.
///
/// Deterministic for a fixed (config, records, seed). The sentiment scorer
/// is frozen and owns no parameters; captions with precomputed sentiment use
/// it verbatim. Returns the trained model plus per-epoch mean losses.
pub fn train(
    config: &TrainConfig,
    records: &[ClipRecord],
    log: &mut dyn Write,
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::validation("training needs a non-empty dataset"));
    }

    let tokenizer = Tokenizer::from_corpus(records.iter().map(|r| r.caption.as_str()));
    let mut model_cfg = config.model.clone();
    if model_cfg.vocab_size == 0 {
        model_cfg.vocab_size = tokenizer.vocab_size();
    } else if model_cfg.vocab_size != tokenizer.vocab_size() {
        return Err(Error::validation(format!(
            "config vocab_size {} disagrees with corpus vocabulary {}",
            model_cfg.vocab_size,
            tokenizer.vocab_size()
        )));
    }

    let tp = &config.train;
    let mut model = Model::from_config(&model_cfg, tp.seed)?;
    let prep = prepare(records, &tokenizer, &model.config, tp.mask_threshold)?;

    let mut opt = AdamW::new(
        OptimizerParams {
            lr: tp.lr,
            beta1: tp.beta1,
            beta2: tp.beta2,
            eps: tp.eps,
            weight_decay: tp.weight_decay,
        },
        &model.params,
    );

    let mut epoch_mean_loss = Vec::with_capacity(tp.epochs);
    let mut steps = 0usize;
    for epoch in 0..tp.epochs {
        let batches = make_batches(
            records,
            tp.batch_size,
            exec::mix_seed(tp.seed ^ exec::mix_seed(epoch as u64)),
            tp.batch_strategy,
        )?;
        let mut loss_sum = 0.0;
        for (step, batch) in batches.iter().enumerate() {
            let loss = train_step(&mut model, &mut opt, records, &prep, batch, tp.beta)?;
            loss_sum += loss;
            steps += 1;
            writeln!(
                log,
                "{}",
                serde_json::json!({
                    "epoch": epoch,
                    "step": step,
                    "loss": loss,
                })
            )?;
        }
        epoch_mean_loss.push(loss_sum / batches.len() as f64);
    }

    Ok((
        model,
        TrainReport {
            steps,
            epoch_mean_loss,
            vocab_size: tokenizer.vocab_size(),
        },
    ))
}

fn train_step(
    model: &mut Model,
    opt: &mut AdamW,
    records: &[ClipRecord],
    prep: &Prepared,
    batch: &Batch,
    beta: f64,
) -> Result<f64> {
    let b = batch.indices.len();
    let patches = batch_patches(model, records, batch)?;
    let subjects: Vec<crate::attention::SubjectIndexSet> = batch
        .indices
        .iter()
        .flat_map(|&ri| prep.subjects[ri].iter().cloned())
        .collect();
    let tokens: Vec<Vec<u32>> = batch.indices.iter().map(|&ri| prep.tokens[ri].clone()).collect();
    let sentiments: Vec<SentimentDistribution> = batch
        .indices
        .iter()
        .map(|&ri| prep.sentiments[ri].clone())
        .collect();

    let rw = reweight_matrix(&sentiments, beta)?;

    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let v = model.forward_video(&mut g, &bound, &patches, &subjects, b)?;
    let t = model.forward_text(&mut g, &bound, &tokens)?;
    let tt = g.transpose(t)?;
    let sims = g.matmul(v, tt)?;
    let inv_tau = model.inv_tau(&mut g, &bound);
    let logits = g.mul_scalar(sims, inv_tau)?;
    let loss_var = total_loss_from_logits(&mut g, logits, &rw)?;
    let loss = g.value(loss_var).data()[0];
    if !loss.is_finite() {
        let ids: Vec<&str> = batch.indices.iter().map(|&ri| records[ri].id.as_str()).collect();
        return Err(Error::NonFiniteLoss {
            batch: ids.join(","),
            detail: format!("loss = {loss}"),
        });
    }
    g.backward(loss_var)?;
    let grads = model.grads(&g, &bound);
    opt.step(&mut model.params, &grads);
    Ok(loss)
}
