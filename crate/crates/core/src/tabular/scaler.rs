//! Per-feature z-scoring with training statistics.

use nalgebra::{DMatrix, RowDVector};

use super::TabularError;

pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation, with near-constant features set to 1.
    pub std: Vec<f64>,
}

impl Scaler {
    /// Rows are samples.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self, TabularError> {
        let n = x.nrows();
        if n < 2 {
            return Err(TabularError::TooFewSamples(n));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s < MIN_STD { 1.0 } else { s });
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, TabularError> {
        if x.ncols() != self.dim() {
            return Err(TabularError::DimMismatch { expected: self.dim(), got: x.ncols() });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j]))
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<RowDVector<f64>, TabularError> {
        if row.len() != self.dim() {
            return Err(TabularError::DimMismatch { expected: self.dim(), got: row.len() });
        }
        Ok(RowDVector::from_iterator(row.len(), row.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.std[j])))
    }
}
