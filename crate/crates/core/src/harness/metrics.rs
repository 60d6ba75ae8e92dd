//! Evaluation metrics: mAP, ROC AUC, R², top-1 accuracy, weighted F1, MSE.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTask {
    Multilabel,
    Multiclass,
    Regression,
}

/// Labels for one evaluation; the variant selects which metrics apply.
#[derive(Debug, Clone)]
pub enum TaskLabels {
    Multiclass(Vec<usize>),
    Multilabel(Vec<Vec<bool>>),
    Regression(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    /// Classes skipped in mAP/AUC for lack of positives (or negatives).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_classes: Vec<usize>,
}

/// Compute the metrics appropriate to the label type. `scores` has one row
/// per sample; width is class count (classification) or output dim
/// (regression).
pub fn compute_metrics(scores: &[Vec<f64>], labels: &TaskLabels) -> Result<MetricReport> {
    match labels {
        TaskLabels::Multiclass(y) => multiclass_metrics(scores, y),
        TaskLabels::Multilabel(y) => multilabel_metrics(scores, y),
        TaskLabels::Regression(y) => regression_metrics(scores, y),
    }
}

fn check_aligned(scores: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    if scores.is_empty() || scores.len() != n_labels {
        return Err(Error::validation(format!(
            "scores ({}) and labels ({n_labels}) must align and be non-empty",
            scores.len()
        )));
    }
    let w = scores[0].len();
    if w == 0 || scores.iter().any(|r| r.len() != w) {
        return Err(Error::validation("score rows must share a positive width"));
    }
    if scores.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::validation("scores must not contain NaN"));
    }
    Ok(w)
}

fn multiclass_metrics(scores: &[Vec<f64>], labels: &[usize]) -> Result<MetricReport> {
    let classes = check_aligned(scores, labels.len())?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {classes} score columns"
        )));
    }
    let n = labels.len();
    let predict = |row: &Vec<f64>| -> usize {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        best
    };
    let preds: Vec<usize> = scores.iter().map(predict).collect();
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();

    // support-weighted F1
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let support = labels.iter().filter(|&&l| l == c).count();
        if support == 0 {
            continue;
        }
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == c && l == c)
            .count() as f64;
        let fp = preds
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == c && l != c)
            .count() as f64;
        let missed = support as f64 - tp; // false negatives
        let denom = 2.0 * tp + fp + missed;
        let f1 = if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
        f1_sum += f1 * support as f64 / n as f64;
    }

    Ok(MetricReport {
        accuracy: Some(correct as f64 / n as f64),
        weighted_f1: Some(f1_sum),
        ..MetricReport::default()
    })
}

fn multilabel_metrics(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MetricReport> {
    let classes = check_aligned(scores, labels.len())?;
    if labels.iter().any(|r| r.len() != classes) {
        return Err(Error::validation("label rows must match score width"));
    }
    let mut aps = Vec::new();
    let mut aucs = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..classes {
        let col: Vec<(f64, bool)> = scores
            .iter()
            .zip(labels)
            .map(|(s, l)| (s[c], l[c]))
            .collect();
        let pos = col.iter().filter(|(_, y)| *y).count();
        let neg = col.len() - pos;
        if pos == 0 || neg == 0 {
            skipped.push(c);
            continue;
        }
        aps.push(average_precision(&col));
        aucs.push(roc_auc(&col));
    }
    if aps.is_empty() {
        return Err(Error::validation(
            "every class was skipped; nothing to evaluate",
        ));
    }
    Ok(MetricReport {
        map: Some(aps.iter().sum::<f64>() / aps.len() as f64),
        auc: Some(aucs.iter().sum::<f64>() / aucs.len() as f64),
        skipped_classes: skipped,
        ..MetricReport::default()
    })
}

/// Unsmoothed average precision: mean of precision at each positive rank.
/// Tied scores are processed as one block so the result does not depend on
/// sample order.
pub fn average_precision(col: &[(f64, bool)]) -> f64 {
    let mut sorted: Vec<&(f64, bool)> = col.iter().collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let total_pos = sorted.iter().filter(|(_, y)| *y).count() as f64;
    let mut ap = 0.0;
    let mut tp = 0.0;
    let mut seen = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut block_tp = 0.0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                block_tp += 1.0;
            }
            j += 1;
        }
        tp += block_tp;
        seen += (j - i) as f64;
        ap += block_tp * (tp / seen);
        i = j;
    }
    ap / total_pos
}

/// Mann-Whitney AUC with ties counted one half.
pub fn roc_auc(col: &[(f64, bool)]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (sp, _) in col.iter().filter(|(_, y)| *y) {
        for (sn, _) in col.iter().filter(|(_, y)| !*y) {
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn regression_metrics(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<MetricReport> {
    let dims = check_aligned(preds, targets.len())?;
    if targets.iter().any(|r| r.len() != dims) {
        return Err(Error::validation("target rows must match prediction width"));
    }
    let n = preds.len() as f64;
    let mut mse = 0.0;
    let mut r2_sum = 0.0;
    for k in 0..dims {
        let mean: f64 = targets.iter().map(|t| t[k]).sum::<f64>() / n;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (p, t) in preds.iter().zip(targets) {
            ss_res += (p[k] - t[k]) * (p[k] - t[k]);
            ss_tot += (t[k] - mean) * (t[k] - mean);
        }
        mse += ss_res / n;
        r2_sum += if ss_tot == 0.0 {
            if ss_res == 0.0 { 1.0 } else { 0.0 }
        } else {
            1.0 - ss_res / ss_tot
        };
    }
    Ok(MetricReport {
        r2: Some(r2_sum / dims as f64),
        mse: Some(mse / dims as f64),
        ..MetricReport::default()
    })
}
