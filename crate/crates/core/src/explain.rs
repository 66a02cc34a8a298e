//! Coefficient importance and occlusion saliency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{FrozenNetwork, InferenceError, ProjectionHead};
use crate::model::{ModelBundle, ModelError};
use crate::tabular::FeatureBlock;
use crate::volume::{TensorRecord, Volume3D};

pub const DEFAULT_WINDOW: [usize; 3] = [4, 32, 32];

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("window {window:?} does not fit volume {shape:?}")]
    WindowTooLarge { window: [usize; 3], shape: [usize; 3] },
    #[error("stride components must be positive")]
    ZeroStride,
    #[error("bundle has no {0} features")]
    MissingBlock(String),
    #[error("{0}")]
    Score(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// (feature name, signed weight), sorted by |weight| descending then name.
    pub entries: Vec<(String, f64)>,
}

impl ImportanceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,weight\n");
        for (n, w) in &self.entries {
            out.push_str(&format!("{n},{w}\n"));
        }
        out
    }

    pub fn weight(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, w)| *w)
    }
}

/// `beta = components^T w`: the hyperplane in standardized feature space.
/// Positive weights push toward the unfavorable class.
pub fn importance(bundle: &ModelBundle) -> ImportanceTable {
    let c = &bundle.pca.components;
    let mut entries: Vec<(String, f64)> = bundle
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), (0..c.nrows()).map(|r| c[(r, j)] * bundle.svm.w[r]).sum()))
        .collect();
    entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    ImportanceTable { entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyVolume {
    pub grid: [usize; 3],
    pub window: [usize; 3],
    pub stride: [usize; 3],
    pub fill: f32,
    pub base_score: f64,
    /// `score(occluded) - score(original)` per placement, row-major over `grid`.
    pub deltas: Vec<f64>,
}

impl SaliencyVolume {
    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        self.deltas[(z * self.grid[1] + y) * self.grid[2] + x]
    }

    /// Grid cell with the largest |delta| (first in raster order on ties).
    pub fn argmax_abs(&self) -> [usize; 3] {
        let i = self.deltas.iter().enumerate().fold(0, |b, (i, d)| if d.abs() > self.deltas[b].abs() { i } else { b });
        let plane = self.grid[1] * self.grid[2];
        [i / plane, (i % plane) / self.grid[2], i % self.grid[2]]
    }

    pub fn to_record(&self, name: &str) -> TensorRecord {
        TensorRecord::f64(name, self.grid.to_vec(), self.deltas.clone())
    }

    /// `slice,z_start,max_delta,min_delta,max_abs_delta` per grid slice.
    pub fn slice_maxima_csv(&self) -> String {
        let mut out = String::from("slice,z_start,max_delta,min_delta,max_abs_delta\n");
        let plane = self.grid[1] * self.grid[2];
        for (s, chunk) in self.deltas.chunks(plane).enumerate() {
            let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = chunk.iter().copied().fold(f64::INFINITY, f64::min);
            let abs = chunk.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            out.push_str(&format!("{s},{},{max},{min},{abs}\n", s * self.stride[0]));
        }
        out
    }
}

/// Placements per axis: `floor((dim - window) / stride) + 1`.
pub fn saliency_grid(shape: [usize; 3], window: [usize; 3], stride: [usize; 3]) -> Result<[usize; 3], ExplainError> {
    if stride.contains(&0) {
        return Err(ExplainError::ZeroStride);
    }
    if window.iter().zip(&shape).any(|(w, d)| *w == 0 || w > d) {
        return Err(ExplainError::WindowTooLarge { window, shape });
    }
    Ok([0, 1, 2].map(|a| (shape[a] - window[a]) / stride[a] + 1))
}

/// Copy of `vol` with the box at `origin` of size `window` set to `fill`.
pub fn occlude(vol: &Volume3D, origin: [usize; 3], window: [usize; 3], fill: f32) -> Volume3D {
    let [_, h, w] = vol.shape();
    let mut data = vol.data().to_vec();
    for z in origin[0]..origin[0] + window[0] {
        for y in origin[1]..origin[1] + window[1] {
            let row = (z * h + y) * w;
            data[row + origin[2]..row + origin[2] + window[2]].fill(fill);
        }
    }
    Volume3D::with_affine(vol.shape(), vol.spacing(), *vol.affine(), data).expect("occlusion keeps the volume valid")
}

/// Occlusion sensitivity of an arbitrary volume score. Placements are scored
/// in parallel; results do not depend on the worker count.
pub fn occlusion_saliency<F>(
    vol: &Volume3D,
    window: [usize; 3],
    stride: [usize; 3],
    fill: f32,
    score: F,
) -> Result<SaliencyVolume, ExplainError>
where
    F: Fn(&Volume3D) -> Result<f64, ExplainError> + Sync,
{
    let grid = saliency_grid(vol.shape(), window, stride)?;
    let base_score = score(vol)?;
    let cells = grid[0] * grid[1] * grid[2];
    let deltas = (0..cells)
        .into_par_iter()
        .map(|i| {
            let (z, y, x) = (i / (grid[1] * grid[2]), (i / grid[2]) % grid[1], i % grid[2]);
            let origin = [z * stride[0], y * stride[1], x * stride[2]];
            Ok(score(&occlude(vol, origin, window, fill))? - base_score)
        })
        .collect::<Result<Vec<_>, ExplainError>>()?;
    Ok(SaliencyVolume { grid, window, stride, fill, base_score, deltas })
}

/// Indices of the bundle features fed by one MRI block.
pub fn mri_feature_indices(bundle: &ModelBundle, block: FeatureBlock) -> Result<Vec<usize>, ExplainError> {
    let prefix = match block {
        FeatureBlock::MriJ0 => "J0_MRI_feat_",
        FeatureBlock::MriJ1 => "J1_MRI_feat_",
        other => return Err(ExplainError::MissingBlock(other.as_str().to_string())),
    };
    let names = &bundle.feature_names;
    let prefixed: Vec<usize> = (0..names.len()).filter(|&i| names[i].starts_with(prefix)).collect();
    if !prefixed.is_empty() {
        return Ok(prefixed);
    }
    let plain: Vec<usize> = (0..names.len()).filter(|&i| names[i].starts_with("MRI_feat_")).collect();
    if plain.is_empty() {
        return Err(ExplainError::MissingBlock(block.as_str().to_string()));
    }
    Ok(plain)
}

/// Occlusion saliency of the bundle's decision score for one patient. The
/// non-MRI features stay at `features`; the given MRI block is recomputed
/// from each occluded volume through `net` and `head`.
#[allow(clippy::too_many_arguments)]
pub fn bundle_occlusion_saliency(
    net: &FrozenNetwork,
    head: &ProjectionHead,
    bundle: &ModelBundle,
    features: &[f64],
    block: FeatureBlock,
    vol: &Volume3D,
    window: [usize; 3],
    stride: [usize; 3],
    fill: f32,
) -> Result<SaliencyVolume, ExplainError> {
    let idx = mri_feature_indices(bundle, block)?;
    if idx.len() != head.target_dim() {
        return Err(ExplainError::Model(ModelError::DimMismatch { expected: idx.len(), got: head.target_dim() }));
    }
    occlusion_saliency(vol, window, stride, fill, |v| {
        let projected = head.project(&net.embed(v)?)?;
        let mut row = features.to_vec();
        for (&i, p) in idx.iter().zip(projected) {
            row[i] = p;
        }
        Ok(bundle.score_row(&row)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_law() {
        assert_eq!(saliency_grid([24, 256, 256], DEFAULT_WINDOW, DEFAULT_WINDOW).unwrap(), [6, 8, 8]);
        assert_eq!(saliency_grid([10, 10, 10], [3, 3, 3], [2, 4, 7]).unwrap(), [4, 2, 2]);
        assert!(matches!(saliency_grid([2, 8, 8], [4, 4, 4], [1, 1, 1]), Err(ExplainError::WindowTooLarge { .. })));
    }

    #[test]
    fn constant_score_gives_zero_deltas() {
        let v = Volume3D::filled([4, 8, 8], 1.0).unwrap();
        let s = occlusion_saliency(&v, [2, 4, 4], [2, 4, 4], 0.0, |_| Ok(3.5)).unwrap();
        assert!(s.deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn sum_score_locates_region() {
        let mut data = vec![0.0f32; 4 * 8 * 8];
        data[(2 * 8 + 5) * 8 + 6] = 10.0;
        let v = Volume3D::new([4, 8, 8], [1.0; 3], data).unwrap();
        let s = occlusion_saliency(&v, [2, 4, 4], [2, 4, 4], 0.0, |v| Ok(v.data().iter().map(|&x| x as f64).sum())).unwrap();
        assert_eq!(s.argmax_abs(), [1, 1, 1]);
        assert_eq!(s.get(1, 1, 1), -10.0);
    }
}
