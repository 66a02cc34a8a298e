use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const DEFAULT_MAX_COMPONENTS: usize = 12;
pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaParams {
    pub max_components: usize,
    pub variance_target: f64,
}

impl Default for PcaParams {
    fn default() -> Self {
        Self { max_components: DEFAULT_MAX_COMPONENTS, variance_target: DEFAULT_VARIANCE_TARGET }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k x D, rows are principal directions.
    pub components: DMatrix<f64>,
    /// Variance along each component (`s^2 / (n - 1)`), nonincreasing.
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(X - mean) * components^T`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        if x.ncols() != self.dim() {
            return Err(ModelError::DimMismatch { expected: self.dim(), got: x.ncols() });
        }
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.mean[j]);
        Ok(centered * self.components.transpose())
    }

    /// `scores * components + mean`.
    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = scores * &self.components;
        for mut row in x.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        x
    }

    /// The same model restricted to its first `k` components.
    pub fn truncated(&self, k: usize) -> PcaModel {
        let k = k.min(self.n_components());
        PcaModel {
            mean: self.mean.clone(),
            components: self.components.rows(0, k).into_owned(),
            explained_variance: self.explained_variance[..k].to_vec(),
            explained_ratio: self.explained_ratio[..k].to_vec(),
        }
    }
}

/// PCA through the SVD of the centred data matrix (rows are samples).
///
/// Keeps `k = min(max_components, smallest k with cumulative ratio > target,
/// rank, n - 1)` components. Each component is signed so that its
/// largest-magnitude entry is positive.
pub fn pca_fit(x: &DMatrix<f64>, params: &PcaParams) -> Result<PcaModel, ModelError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(ModelError::TooFewSamples(n));
    }
    let mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let s_max = sv.first().copied().unwrap_or(0.0);
    let tol = s_max * n.max(d) as f64 * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank == 0 {
        return Err(ModelError::NoVariance);
    }
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let ratios: Vec<f64> = sv.iter().map(|s| s * s / total).collect();
    let mut cum = 0.0;
    let mut k_var = ratios.len();
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum > params.variance_target {
            k_var = i + 1;
            break;
        }
    }
    let k = params.max_components.min(k_var).min(rank).min(n - 1).max(1);

    let mut components = DMatrix::zeros(k, d);
    for (r, &src) in order.iter().take(k).enumerate() {
        let row = v_t.row(src);
        let pivot = row.iter().enumerate().fold(0, |best, (j, v)| if v.abs() > row[best].abs() { j } else { best });
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(r, j)] = sign * row[j];
        }
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: sv[..k].iter().map(|s| s * s / (n - 1) as f64).collect(),
        explained_ratio: ratios[..k].to_vec(),
    })
}
