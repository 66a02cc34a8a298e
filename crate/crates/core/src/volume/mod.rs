//! Volumetric data types and on-disk formats.
//!
//! [`Volume3D`] is the unit of imaging work throughout the crate. Volumes
//! enter through [`read_nifti`] and intermediate tensors (network weights,
//! cached embeddings, masks, fitted models) travel in the "ADCT" container
//! implemented in [`container`].

pub mod container;
pub mod nifti;

pub use container::{read_container, write_container, ContainerError, TensorData, TensorRecord};
pub use nifti::{read_nifti, NiftiError};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("shape {0:?} has a zero axis")]
    DegenerateShape([usize; 3]),
    #[error("data length {got} does not match shape product {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("spacing {0:?} must be finite and positive")]
    InvalidSpacing([f64; 3]),
    #[error("non-finite voxel value at index {0}")]
    NonFinite(usize),
}

/// A 3D scalar field stored row-major as (depth, height, width), width fastest.
///
/// `spacing` is (sz, sy, sx) in mm. `affine` maps NIfTI voxel indices
/// (i, j, k) = (x, y, z) to scanner mm and is carried as metadata only.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    shape: [usize; 3],
    spacing: [f64; 3],
    affine: [[f64; 4]; 4],
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self, VolumeError> {
        let affine = diagonal_affine(spacing);
        Self::with_affine(shape, spacing, affine, data)
    }

    pub fn with_affine(
        shape: [usize; 3],
        spacing: [f64; 3],
        affine: [[f64; 4]; 4],
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        if shape.contains(&0) {
            return Err(VolumeError::DegenerateShape(shape));
        }
        let expected = shape[0] * shape[1] * shape[2];
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch { expected, got: data.len() });
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self { shape, spacing, affine, data })
    }

    /// A volume filled with `value` at unit spacing.
    pub fn filled(shape: [usize; 3], value: f32) -> Result<Self, VolumeError> {
        let n = shape.iter().product();
        Self::new(shape, [1.0; 3], vec![value; n])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &[[f64; 4]; 4] {
        &self.affine
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(z, y, x)]
    }

    /// Physical extent per axis in mm.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.shape[0] as f64 * self.spacing[0],
            self.shape[1] as f64 * self.spacing[1],
            self.shape[2] as f64 * self.spacing[2],
        ]
    }

    /// Applies `f` to every voxel, keeping geometry. Non-finite results are rejected.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self, VolumeError> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::with_affine(self.shape, self.spacing, self.affine, data)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_record(&self, name: &str) -> TensorRecord {
        TensorRecord::f32(name, self.shape.to_vec(), self.data.clone())
    }
}

pub(crate) fn diagonal_affine(spacing: [f64; 3]) -> [[f64; 4]; 4] {
    // index order (i, j, k) = (x, y, z)
    [
        [spacing[2], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[0], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}
