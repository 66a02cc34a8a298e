//! Rank AUC, accuracy and F1 with the positive class = unfavorable.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Midranks (1-based) of `values`, ties sharing the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC: `(sum of positive ranks - n+(n+ + 1)/2) / (n+ n-)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&p| p).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::OneClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// `(accuracy, F1 of the positive class)`; F1 is 0 when precision + recall is 0.
pub fn accuracy_f1(predicted: &[bool], labels: &[bool]) -> Result<(f64, f64), EvalError> {
    if predicted.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: predicted.len(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predicted.iter().zip(labels) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / labels.len() as f64;
    let denom = 2 * tp + fp + fn_;
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok((accuracy, f1))
}

pub fn metrics(scores: &[f64], predicted: &[bool], labels: &[bool]) -> Result<Metrics, EvalError> {
    let (accuracy, f1) = accuracy_f1(predicted, labels)?;
    Ok(Metrics { auc: auc(scores, labels)?, accuracy, f1 })
}
