//! Fixed seeded orthonormal projection from the pooled embedding to the MRI feature block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::network::InferenceError;

pub const MIN_PROJECTION_DIM: usize = 32;
pub const MAX_PROJECTION_DIM: usize = 256;
pub const DEFAULT_PROJECTION_DIM: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    input_dim: usize,
    target_dim: usize,
    seed: u64,
    /// (target_dim, input_dim) row-major, rows orthonormal.
    matrix: Vec<f64>,
}

impl ProjectionHead {
    /// Gram-Schmidt (two passes) on seeded Gaussian rows.
    pub fn new(input_dim: usize, target_dim: usize, seed: u64) -> Result<Self, InferenceError> {
        if !(MIN_PROJECTION_DIM..=MAX_PROJECTION_DIM).contains(&target_dim) || target_dim > input_dim {
            return Err(InferenceError::DimOutOfRange(target_dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(target_dim);
        while rows.len() < target_dim {
            let mut v: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for r in &rows {
                    let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(r).for_each(|(x, a)| *x -= d * a);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                rows.push(v);
            }
        }
        Ok(Self { input_dim, target_dim, seed, matrix: rows.concat() })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn project(&self, embedding: &[f32]) -> Result<Vec<f64>, InferenceError> {
        if embedding.len() != self.input_dim {
            return Err(InferenceError::EmbeddingLength { expected: self.input_dim, got: embedding.len() });
        }
        Ok((0..self.target_dim)
            .map(|i| self.row(i).iter().zip(embedding).map(|(&m, &x)| m * x as f64).sum())
            .collect())
    }

    pub fn feature_names(&self) -> Vec<String> {
        mri_feature_names(self.target_dim)
    }
}

pub fn mri_feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("MRI_feat_{i}")).collect()
}
