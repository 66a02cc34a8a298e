//! Resampling onto the canonical grid and intensity normalization.

use rayon::prelude::*;
use thiserror::Error;

use crate::volume::Volume3D;

/// Default canonical grid (depth, height, width).
pub const CANONICAL_SHAPE: [usize; 3] = [24, 256, 256];

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("degenerate axis: source {source_shape:?}, target {target:?}")]
    DegenerateAxis { source_shape: [usize; 3], target: [usize; 3] },
}

/// A volume resampled onto a fixed grid, with the geometry it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalVolume {
    pub volume: Volume3D,
    pub source_id: String,
    pub source_shape: [usize; 3],
    pub source_spacing: [f64; 3],
}

impl CanonicalVolume {
    pub fn shape(&self) -> [usize; 3] {
        self.volume.shape()
    }
}

/// Per-axis sampling plan: lower index, upper index, and weight of the upper sample.
struct AxisPlan {
    lo: Vec<usize>,
    hi: Vec<usize>,
    t: Vec<f64>,
}

impl AxisPlan {
    fn new(src: usize, tgt: usize) -> Self {
        let scale = src as f64 / tgt as f64;
        let max = (src - 1) as f64;
        let mut plan = AxisPlan { lo: Vec::with_capacity(tgt), hi: Vec::with_capacity(tgt), t: Vec::with_capacity(tgt) };
        for i in 0..tgt {
            // voxel-centre mapping, clamped to the edge voxels
            let c = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = c.floor() as usize;
            plan.lo.push(lo);
            plan.hi.push((lo + 1).min(src - 1));
            plan.t.push(c - lo as f64);
        }
        plan
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Trilinear resampling with voxel-centre alignment and edge clamping.
///
/// Output spacing is `spacing * src / tgt` per axis so the physical extent is
/// unchanged. Slices are computed in parallel; each output voxel is produced by
/// the same arithmetic regardless of thread count.
pub fn resample_trilinear(
    vol: &Volume3D,
    target: [usize; 3],
    source_id: &str,
) -> Result<CanonicalVolume, PreprocessError> {
    let src = vol.shape();
    if src.iter().chain(target.iter()).any(|&d| d == 0) {
        return Err(PreprocessError::DegenerateAxis { source_shape: src, target });
    }
    let [pz, py, px] = [0, 1, 2].map(|a| AxisPlan::new(src[a], target[a]));
    let data = vol.data();
    let (sh, sw) = (src[1], src[2]);
    let plane = target[1] * target[2];
    let mut out = vec![0f32; target[0] * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(z, slice)| {
        let (z0, z1, tz) = (pz.lo[z], pz.hi[z], pz.t[z]);
        for y in 0..target[1] {
            let (y0, y1, ty) = (py.lo[y], py.hi[y], py.t[y]);
            let r00 = &data[(z0 * sh + y0) * sw..][..sw];
            let r01 = &data[(z0 * sh + y1) * sw..][..sw];
            let r10 = &data[(z1 * sh + y0) * sw..][..sw];
            let r11 = &data[(z1 * sh + y1) * sw..][..sw];
            let row = &mut slice[y * target[2]..][..target[2]];
            for (x, o) in row.iter_mut().enumerate() {
                let (x0, x1, tx) = (px.lo[x], px.hi[x], px.t[x]);
                let c00 = lerp(r00[x0] as f64, r00[x1] as f64, tx);
                let c01 = lerp(r01[x0] as f64, r01[x1] as f64, tx);
                let c10 = lerp(r10[x0] as f64, r10[x1] as f64, tx);
                let c11 = lerp(r11[x0] as f64, r11[x1] as f64, tx);
                let c0 = lerp(c00, c01, ty);
                let c1 = lerp(c10, c11, ty);
                *o = lerp(c0, c1, tz) as f32;
            }
        }
    });

    let sp = vol.spacing();
    let spacing = [0, 1, 2].map(|a| sp[a] * src[a] as f64 / target[a] as f64);
    let volume = Volume3D::new(target, spacing, out).expect("convex combinations of finite values are finite");
    Ok(CanonicalVolume {
        volume,
        source_id: source_id.to_owned(),
        source_shape: src,
        source_spacing: sp,
    })
}

/// Z-scores the foreground (non-zero) voxels; background stays 0.
///
/// Uses the population standard deviation. A foreground with standard
/// deviation below 1e-6 (or no foreground at all) maps to all zeros.
pub fn normalize_intensity(vol: &CanonicalVolume) -> CanonicalVolume {
    let data = vol.volume.data();
    let (mut n, mut sum) = (0usize, 0f64);
    for &v in data.iter().filter(|v| **v != 0.0) {
        n += 1;
        sum += v as f64;
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    let var = if n > 0 {
        data.iter()
            .filter(|v| **v != 0.0)
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64
    } else {
        0.0
    };
    let sd = var.sqrt();
    let volume = if sd < 1e-6 {
        vol.volume.map(|_| 0.0)
    } else {
        vol.volume.map(|v| if v == 0.0 { 0.0 } else { ((v as f64 - mean) / sd) as f32 })
    }
    .expect("z-scores of finite values are finite");
    CanonicalVolume { volume, ..vol.clone() }
}
