//! Linear-probe evaluation on frozen embeddings.
//!
//! The encoder never updates here: features are extracted forward-only, a
//! single linear layer is fit on a seeded 80/20 split (logistic regression
//! by full-batch gradient descent for classification, ridge-stabilized least
//! squares for regression), and metrics come from the held-out split.

use super::metrics::{compute_metrics, MetricReport, ProbeTask, TaskLabels};
use crate::data::ClipRecord;
use crate::encoders::{Model, SENTIMENT_CLASSES};
use crate::error::{Error, Result};
use crate::exec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fixed valence/arousal/dominance coordinates per class, the regression
/// targets for probing.
pub const VAD_TARGETS: [[f64; 3]; SENTIMENT_CLASSES] = [
    [0.15, 0.85, 0.70], // anger
    [0.20, 0.50, 0.40], // disgust
    [0.10, 0.80, 0.20], // fear
    [0.95, 0.70, 0.60], // joy
    [0.50, 0.30, 0.50], // neutral
    [0.15, 0.30, 0.25], // sadness
    [0.70, 0.85, 0.45], // surprise
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub task: ProbeTask,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_probe_lr")]
    pub lr: f64,
    #[serde(default)]
    pub mask_threshold: f64,
}

fn default_train_frac() -> f64 {
    0.8
}
fn default_max_steps() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_probe_lr() -> f64 {
    1.0
}

impl ProbeOptions {
    pub fn new(task: ProbeTask, seed: u64) -> Self {
        ProbeOptions {
            task,
            seed,
            train_frac: default_train_frac(),
            max_steps: default_max_steps(),
            grad_tol: default_tol(),
            lr: default_probe_lr(),
            mask_threshold: 0.0,
        }
    }
}

/// Extract frozen video embeddings for every record, in order.
pub fn extract_features(model: &Model, records: &[ClipRecord], mask_threshold: f64) -> Result<Vec<Vec<f64>>> {
    let results = exec::map_indexed(records.len(), |i| -> Result<Vec<f64>> {
        let clip = records[i].frame_input();
        let subjects = records[i].subjects(model.config.patch_size, mask_threshold)?;
        model.encode_video(&clip, &subjects)
    });
    results.into_iter().collect()
}

/// Train/eval split by seeded shuffle; both sides non-empty.
fn split(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(exec::mix_seed(seed ^ 0x51EED_u64));
    idx.shuffle(&mut rng);
    let cut = ((n as f64) * frac).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::validation(format!(
            "split {frac} leaves an empty side for {n} records"
        )));
    }
    Ok((idx[..cut].to_vec(), idx[cut..].to_vec()))
}

/// Probe a frozen model. The encoder weights are read-only throughout.
pub fn linear_probe(model: &Model, records: &[ClipRecord], opts: &ProbeOptions) -> Result<MetricReport> {
    if records.len() < 5 {
        return Err(Error::validation("probing needs at least 5 records"));
    }
    let labels: Vec<usize> = records
        .iter()
        .map(|r| {
            r.label
                .map(|l| l as usize)
                .ok_or_else(|| Error::validation(format!("record {} has no label", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= SENTIMENT_CLASSES) {
        return Err(Error::validation(format!("label {bad} out of range")));
    }

    let features = extract_features(model, records, opts.mask_threshold)?;
    probe_features(&features, &labels, opts)
}

/// Fit and evaluate the probe given precomputed features.
pub fn probe_features(features: &[Vec<f64>], labels: &[usize], opts: &ProbeOptions) -> Result<MetricReport> {
    let n = features.len();
    if n != labels.len() {
        return Err(Error::validation("features and labels must align"));
    }
    let d = features[0].len();
    let (train_idx, eval_idx) = split(n, opts.train_frac, opts.seed)?;

    // design matrix with a trailing bias column
    let design = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| {
                let mut row = features[i].clone();
                row.push(1.0);
                row
            })
            .collect()
    };
    let x_train = design(&train_idx);
    let x_eval = design(&eval_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let y_eval: Vec<usize> = eval_idx.iter().map(|&i| labels[i]).collect();

    match opts.task {
        ProbeTask::Multiclass => {
            let w = fit_logistic(&x_train, &y_train, SENTIMENT_CLASSES, opts, Link::Softmax);
            let scores = matvec_all(&x_eval, &w, d + 1, SENTIMENT_CLASSES);
            compute_metrics(&scores, &TaskLabels::Multiclass(y_eval))
        }
        ProbeTask::Multilabel => {
            let w = fit_logistic(&x_train, &y_train, SENTIMENT_CLASSES, opts, Link::Sigmoid);
            let scores = matvec_all(&x_eval, &w, d + 1, SENTIMENT_CLASSES);
            let onehot: Vec<Vec<bool>> = y_eval
                .iter()
                .map(|&l| (0..SENTIMENT_CLASSES).map(|c| c == l).collect())
                .collect();
            compute_metrics(&scores, &TaskLabels::Multilabel(onehot))
        }
        ProbeTask::Regression => {
            let targets: Vec<Vec<f64>> = y_train.iter().map(|&l| VAD_TARGETS[l].to_vec()).collect();
            let w = fit_least_squares(&x_train, &targets, d + 1, 3)?;
            let preds = matvec_all(&x_eval, &w, d + 1, 3);
            let eval_targets: Vec<Vec<f64>> = y_eval.iter().map(|&l| VAD_TARGETS[l].to_vec()).collect();
            compute_metrics(&preds, &TaskLabels::Regression(eval_targets))
        }
    }
}

enum Link {
    Softmax,
    Sigmoid,
}

/// Full-batch gradient descent on (multinomial or per-class) logistic loss.
/// Runs until the gradient norm drops below `grad_tol` or `max_steps`.
fn fit_logistic(x: &[Vec<f64>], y: &[usize], classes: usize, opts: &ProbeOptions, link: Link) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let mut w = vec![0.0; d * classes];
    let inv_n = 1.0 / n as f64;
    for _ in 0..opts.max_steps {
        let mut grad = vec![0.0; d * classes];
        for (row, &label) in x.iter().zip(y) {
            let mut z = vec![0.0; classes];
            for c in 0..classes {
                for (j, &xv) in row.iter().enumerate() {
                    z[c] += xv * w[j * classes + c];
                }
            }
            let p = match link {
                Link::Softmax => {
                    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut e: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
                    let s: f64 = e.iter().sum();
                    for v in e.iter_mut() {
                        *v /= s;
                    }
                    e
                }
                Link::Sigmoid => z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            };
            for c in 0..classes {
                let target = if c == label { 1.0 } else { 0.0 };
                let delta = (p[c] - target) * inv_n;
                for (j, &xv) in row.iter().enumerate() {
                    grad[j * classes + c] += delta * xv;
                }
            }
        }
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= opts.lr * gi;
        }
        if norm < opts.grad_tol {
            break;
        }
    }
    w
}

/// Ridge-stabilized normal equations solved by Gaussian elimination with
/// partial pivoting.
fn fit_least_squares(x: &[Vec<f64>], y: &[Vec<f64>], d: usize, outs: usize) -> Result<Vec<f64>> {
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d * outs];
    for (row, target) in x.iter().zip(y) {
        for i in 0..d {
            for j in 0..d {
                xtx[i * d + j] += row[i] * row[j];
            }
            for k in 0..outs {
                xty[i * outs + k] += row[i] * target[k];
            }
        }
    }
    for i in 0..d {
        xtx[i * d + i] += 1e-9;
    }
    // augmented elimination
    let mut a = xtx;
    let mut b = xty;
    for col in 0..d {
        let mut pivot = col;
        for r in col + 1..d {
            if a[r * d + col].abs() > a[pivot * d + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * d + col].abs() < 1e-300 {
            return Err(Error::validation("singular normal equations"));
        }
        if pivot != col {
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            for k in 0..outs {
                b.swap(col * outs + k, pivot * outs + k);
            }
        }
        let diag = a[col * d + col];
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = a[r * d + col] / diag;
            if f == 0.0 {
                continue;
            }
            for j in col..d {
                a[r * d + j] -= f * a[col * d + j];
            }
            for k in 0..outs {
                b[r * outs + k] -= f * b[col * outs + k];
            }
        }
    }
    let mut w = vec![0.0; d * outs];
    for i in 0..d {
        for k in 0..outs {
            w[i * outs + k] = b[i * outs + k] / a[i * d + i];
        }
    }
    Ok(w)
}

fn matvec_all(x: &[Vec<f64>], w: &[f64], d: usize, outs: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..outs)
                .map(|c| (0..d).map(|j| row[j] * w[j * outs + c]).sum())
                .collect()
        })
        .collect()
}
