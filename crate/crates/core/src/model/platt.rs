//! Platt sigmoid calibration, fitted by Newton's method with backtracking
//! on the smoothed-target log-likelihood.

use serde::{Deserialize, Serialize};

use super::ModelError;

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;

/// `P(positive | f) = 1 / (1 + exp(a * f + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
}

impl PlattModel {
    pub fn probability(&self, score: f64) -> f64 {
        let t = self.a * score + self.b;
        if t >= 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        }
    }
}

/// Targets `(N+ + 1) / (N+ + 2)` for positives and `1 / (N- + 2)` for negatives.
pub fn smoothed_targets(labels: &[bool]) -> Vec<f64> {
    let n_pos = labels.iter().filter(|&&p| p).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    labels.iter().map(|&p| if p { hi } else { lo }).collect()
}

/// Negative log-likelihood of `(a, b)` against soft targets.
pub fn platt_objective(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = a * f + b;
            if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

pub fn platt_fit(scores: &[f64], labels: &[bool]) -> Result<PlattModel, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::DimMismatch { expected: scores.len(), got: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&p| p).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(ModelError::OneClass);
    }
    let t = smoothed_targets(labels);
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = platt_objective(scores, &t, a, b);

    for _ in 0..MAX_ITERATIONS {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0, 0.0, 0.0);
        for (&f, &ti) in scores.iter().zip(&t) {
            let p = PlattModel { a, b }.probability(f);
            let q = 1.0 - p;
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < GRADIENT_TOLERANCE && g2.abs() < GRADIENT_TOLERANCE {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(scores, &t, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            // no further decrease is representable
            break;
        }
    }
    Ok(PlattModel { a, b })
}
