//! Sentiment-guided contrastive objective.
//!
//! Batch pairs whose texts carry near-identical sentiment are false
//! negatives: the reweight matrix turns each pairwise sentiment divergence
//! into a logit offset `w[i][j] = β / KL(s_i ‖ s_j)`, and pairs below the KL
//! floor are removed from the denominator outright. At `β = 0` the objective
//! is exactly the vanilla InfoNCE loss.

use crate::encoders::sentiment::SentimentDistribution;
use crate::error::{Error, Result};
use crate::tensor::{kl_divergence, Graph, Tensor, Var};

/// KL below this is treated as a duplicate pair (w = ∞, full removal).
pub const KL_EPSILON: f64 = 1e-8;

/// Pairwise logit offsets for a batch, with explicit removal flags standing
/// in for infinite weights. The diagonal is always zero and never removed.
#[derive(Debug, Clone)]
pub struct ReweightMatrix {
    b: usize,
    w: Vec<f64>,
    removed: Vec<bool>,
}

impl ReweightMatrix {
    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.b + j]
    }

    pub fn is_removed(&self, i: usize, j: usize) -> bool {
        self.removed[i * self.b + j]
    }

    /// Negated offsets as a dense tensor (removed entries are zero; they are
    /// excluded from the denominator index set instead of offset).
    fn neg_offsets(&self) -> Tensor {
        let data = self.w.iter().map(|&w| -w).collect();
        Tensor::new(&[self.b, self.b], data).expect("square")
    }

    /// Denominator membership: kept entries participate in the log-sum-exp.
    fn keep_flags(&self) -> Vec<bool> {
        self.removed.iter().map(|&r| !r).collect()
    }
}

/// Build the reweight matrix from batch sentiments (Eq. w[i][j] = β/KL).
///
/// `beta = 0` forces every weight to zero and suppresses removal flags, so
/// the loss is exactly InfoNCE even on duplicate sentiments.
pub fn reweight_matrix(sentiments: &[SentimentDistribution], beta: f64) -> Result<ReweightMatrix> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::validation(format!(
            "beta must be finite and non-negative, got {beta}"
        )));
    }
    let b = sentiments.len();
    let mut w = vec![0.0; b * b];
    let mut removed = vec![false; b * b];
    if beta > 0.0 {
        for i in 0..b {
            for j in 0..b {
                if i == j {
                    continue;
                }
                let kl = kl_divergence(sentiments[i].values(), sentiments[j].values())?;
                if kl < KL_EPSILON {
                    removed[i * b + j] = true;
                } else {
                    w[i * b + j] = beta / kl;
                }
            }
        }
    }
    Ok(ReweightMatrix { b, w, removed })
}

/// One direction of the contrastive loss from a precomputed logit matrix
/// (`logits[i][j] = v_i · t_j / τ`):
///
/// `Σ_i ( logsumexp_{j kept} (logits[i][j] − w[i][j]) − logits[i][i] )`.
pub fn snce_from_logits(g: &mut Graph, logits: Var, rw: &ReweightMatrix) -> Result<Var> {
    let dims = g.value(logits).dims().to_vec();
    if dims.len() != 2 || dims[0] != dims[1] || dims[0] != rw.batch_size() {
        return Err(Error::shape(format!(
            "snce expects [{b}, {b}] logits, got {dims:?}",
            b = rw.batch_size()
        )));
    }
    let shifted = g.add_const(logits, &rw.neg_offsets())?;
    let lse = g.masked_lse_rows(shifted, &rw.keep_flags())?;
    let diag = g.take_diag(shifted)?;
    let per_row = g.sub(lse, diag)?;
    Ok(g.sum_all(per_row))
}

/// The sentiment-guided contrastive loss for one direction.
///
/// `v` and `t` are [B, d] unit-norm embeddings bound in `g`; positives pair
/// by index. Differentiable w.r.t. `v` and `t`; the reweighting is
/// gradient-free because the sentiment scorer is frozen.
pub fn snce(
    g: &mut Graph,
    v: Var,
    t: Var,
    sentiments: &[SentimentDistribution],
    tau: f64,
    beta: f64,
) -> Result<Var> {
    let rw = reweight_matrix(sentiments, beta)?;
    let logits = pair_logits(g, v, t, tau, sentiments.len())?;
    snce_from_logits(g, logits, &rw)
}

/// Symmetric total: `(SNCE(v,t,s) + SNCE(t,v,s)) / (2B)`. The same sentiment
/// matrix reweights both directions.
pub fn total_loss(
    g: &mut Graph,
    v: Var,
    t: Var,
    sentiments: &[SentimentDistribution],
    tau: f64,
    beta: f64,
) -> Result<Var> {
    let rw = reweight_matrix(sentiments, beta)?;
    let logits = pair_logits(g, v, t, tau, sentiments.len())?;
    total_loss_from_logits(g, logits, &rw)
}

/// Symmetric total from a precomputed logit matrix; the transpose drives the
/// text → video direction.
pub fn total_loss_from_logits(g: &mut Graph, logits: Var, rw: &ReweightMatrix) -> Result<Var> {
    let b = rw.batch_size();
    let fwd = snce_from_logits(g, logits, rw)?;
    let logits_t = g.transpose(logits)?;
    let bwd = snce_from_logits(g, logits_t, rw)?;
    let sum = g.add(fwd, bwd)?;
    Ok(g.scale(sum, 1.0 / (2.0 * b as f64)))
}

fn pair_logits(g: &mut Graph, v: Var, t: Var, tau: f64, batch: usize) -> Result<Var> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::validation(format!("tau must be positive, got {tau}")));
    }
    for (name, var) in [("v", v), ("t", t)] {
        let tv = g.value(var);
        if tv.rank() != 2 || tv.dims()[0] != batch {
            return Err(Error::shape(format!(
                "{name} must be [{batch}, d], got {:?}",
                tv.dims()
            )));
        }
        let d = tv.last_dim();
        for (r, row) in tv.data().chunks(d).enumerate() {
            let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err(Error::validation(format!(
                    "{name} row {r} has (near-)zero norm"
                )));
            }
        }
    }
    let tt = g.transpose(t)?;
    let sims = g.matmul(v, tt)?;
    Ok(g.scale(sims, 1.0 / tau))
}
