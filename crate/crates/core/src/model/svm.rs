//! Class-weighted linear SVM trained by dual coordinate descent.
//!
//! Solves `min 1/2 |w~|^2 + sum_i C_i max(0, 1 - y_i w~ . x~_i)` where
//! `x~ = [x, 1]`, so the bias is the last (regularized) coordinate of `w~`.
//! The dual is `max sum a_i - 1/2 |sum a_i y_i x~_i|^2` with `0 <= a_i <= C_i`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const DEFAULT_C: f64 = 0.1;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub balanced: bool,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: DEFAULT_C, balanced: true, tolerance: DEFAULT_TOLERANCE, max_epochs: DEFAULT_MAX_EPOCHS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Multipliers on C for the negative and positive class.
    pub class_weights: [f64; 2],
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    pub fn decision_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter().map(|r| self.w.iter().zip(r.iter()).map(|(w, v)| w * v).sum::<f64>() + self.b).collect()
    }
}

/// A fitted model together with its dual solution and convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
    /// Per-sample upper bounds `C_i`.
    pub bounds: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// Largest projected-gradient magnitude seen in the last epoch.
    pub max_violation: f64,
}

/// `[C * n / (2 n_neg), C * n / (2 n_pos)]` when balanced, else `[C, C]`.
pub fn class_bounds(labels: &[bool], c: f64, balanced: bool) -> Result<[f64; 2], ModelError> {
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::OneClass);
    }
    if !balanced {
        return Ok([c, c]);
    }
    Ok([c * n as f64 / (2.0 * n_neg as f64), c * n as f64 / (2.0 * n_pos as f64)])
}

fn augmented_dot(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// Rows of `x` are samples; `labels[i]` is true for the positive class.
pub fn svm_fit(x: &DMatrix<f64>, labels: &[bool], params: &SvmParams) -> Result<SvmSolution, ModelError> {
    let (n, d) = x.shape();
    if labels.len() != n {
        return Err(ModelError::DimMismatch { expected: n, got: labels.len() });
    }
    let cw = class_bounds(labels, params.c, params.balanced)?;
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let y: Vec<f64> = labels.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let bounds: Vec<f64> = labels.iter().map(|&p| cw[p as usize]).collect();
    let q_diag: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut epochs = 0;
    let mut converged = false;
    let mut max_violation = f64::INFINITY;

    while epochs < params.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        max_violation = 0.0;
        for &i in &order {
            let g = y[i] * augmented_dot(&w, &rows[i]) - 1.0;
            let pg = projected_gradient(g, alpha[i], bounds[i]);
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, bounds[i]);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&rows[i]) {
                    *wj += step * xj;
                }
                w[d] += step;
            }
        }
        if max_violation < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("svm: no convergence after {epochs} epochs (violation {max_violation:.3e})");
    }
    let b = w.pop().expect("bias coordinate");
    Ok(SvmSolution {
        model: SvmModel { w, b, c: params.c, class_weights: [cw[0] / params.c, cw[1] / params.c] },
        alpha,
        bounds,
        epochs,
        converged,
        max_violation,
    })
}

fn projected_gradient(g: f64, a: f64, upper: f64) -> f64 {
    if a <= 0.0 {
        g.min(0.0)
    } else if a >= upper {
        g.max(0.0)
    } else {
        g
    }
}

/// Largest KKT violation of `alpha` against the hyperplane it induces.
pub fn kkt_violation(x: &DMatrix<f64>, labels: &[bool], solution: &SvmSolution) -> f64 {
    let d = x.ncols();
    let mut w = vec![0.0; d + 1];
    for (i, row) in x.row_iter().enumerate() {
        let s = solution.alpha[i] * if labels[i] { 1.0 } else { -1.0 };
        for (j, v) in row.iter().enumerate() {
            w[j] += s * v;
        }
        w[d] += s;
    }
    x.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let r: Vec<f64> = row.iter().copied().collect();
            let y = if labels[i] { 1.0 } else { -1.0 };
            let g = y * augmented_dot(&w, &r) - 1.0;
            projected_gradient(g, solution.alpha[i], solution.bounds[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Primal objective of a model under per-sample bounds.
pub fn primal_objective(x: &DMatrix<f64>, labels: &[bool], model: &SvmModel, bounds: &[f64]) -> f64 {
    let reg = 0.5 * (model.w.iter().map(|v| v * v).sum::<f64>() + model.b * model.b);
    let loss: f64 = model
        .decision_rows(x)
        .iter()
        .zip(labels)
        .zip(bounds)
        .map(|((&f, &p), c)| c * (1.0_f64 - if p { f } else { -f }).max(0.0))
        .sum();
    reg + loss
}
