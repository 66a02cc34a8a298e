//! Lesion segmentation on raw ADC volumes.
//!
//! The pipeline is threshold -> binary opening -> connected components ->
//! small-component pruning, followed by volumetric statistics. Thresholds are
//! in physical ADC units (10^-6 mm^2/s), so this runs on the resampled but
//! un-normalized volume.

use serde::{Deserialize, Serialize};

use crate::volume::{TensorRecord, Volume3D};

/// Default threshold feeding the lesion-volume feature.
pub const DEFAULT_THRESHOLD: f32 = 620.0;
/// Secondary, stricter threshold.
pub const STRICT_THRESHOLD: f32 = 480.0;
pub const DEFAULT_MIN_VOXELS: usize = 150;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    shape: [usize; 3],
    data: Vec<bool>,
}

impl Mask3D {
    pub fn empty(shape: [usize; 3]) -> Self {
        Self { shape, data: vec![false; shape.iter().product()] }
    }

    /// Panics if `data.len()` is not the product of `shape`.
    pub fn from_vec(shape: [usize; 3], data: Vec<bool>) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "mask length must match shape");
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[self.index(z, y, x)]
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, v: bool) {
        let i = self.index(z, y, x);
        self.data[i] = v;
    }

    pub fn is_subset_of(&self, other: &Mask3D) -> bool {
        self.shape == other.shape && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_record(&self, name: &str) -> TensorRecord {
        TensorRecord::f32(name, self.shape.to_vec(), self.data.iter().map(|&b| b as u8 as f32).collect())
    }
}

/// `mask[i] = 0 < vol[i] < thr`. Zero-valued background never enters the mask.
pub fn threshold_mask(vol: &Volume3D, thr: f32) -> Mask3D {
    assert!(thr > 0.0, "threshold must be positive");
    Mask3D {
        shape: vol.shape(),
        data: vol.data().iter().map(|&v| v > 0.0 && v < thr).collect(),
    }
}

// One pass of a 3-wide min (erode) or max (dilate) filter along `axis`,
// with out-of-bounds samples treated as background.
fn filter_axis(src: &[bool], shape: [usize; 3], axis: usize, erode: bool) -> Vec<bool> {
    let strides = [shape[1] * shape[2], shape[2], 1];
    let stride = strides[axis];
    let len = shape[axis];
    let mut out = vec![false; src.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = (i / stride) % len;
        let prev = if pos > 0 { src[i - stride] } else { false };
        let next = if pos + 1 < len { src[i + stride] } else { false };
        *o = if erode { prev && src[i] && next } else { prev || src[i] || next };
    }
    out
}

fn cube_filter(mask: &Mask3D, erode: bool) -> Mask3D {
    // the 3x3x3 cube is the Minkowski sum of three axis segments
    let mut d = mask.data.clone();
    for axis in 0..3 {
        d = filter_axis(&d, mask.shape, axis, erode);
    }
    Mask3D { shape: mask.shape, data: d }
}

pub fn erode(mask: &Mask3D) -> Mask3D {
    cube_filter(mask, true)
}

pub fn dilate(mask: &Mask3D) -> Mask3D {
    cube_filter(mask, false)
}

/// Binary opening with a full 3x3x3 structuring element, `iterations` erosions
/// followed by as many dilations.
pub fn morph_open_n(mask: &Mask3D, iterations: usize) -> Mask3D {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = erode(&m);
    }
    for _ in 0..iterations {
        m = dilate(&m);
    }
    m
}

pub fn morph_open(mask: &Mask3D) -> Mask3D {
    morph_open_n(mask, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets that precede the current voxel in raster order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut v = Vec::new();
        for dz in -1isize..=0 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                    if !before {
                        continue;
                    }
                    let manhattan = dz.abs() + dy.abs() + dx.abs();
                    if self == Connectivity::Six && manhattan != 1 {
                        continue;
                    }
                    v.push([dz, dy, dx]);
                }
            }
        }
        v
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller provisional label as root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Component labels (0 = background, 1.. in raster order of first voxel) and sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub shape: [usize; 3],
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the voxel count of label `l`.
    pub sizes: Vec<usize>,
}

impl Labeling {
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }
}

/// Two-pass union-find labeling.
pub fn connected_components(mask: &Mask3D, connectivity: Connectivity) -> Labeling {
    let [d, h, w] = mask.shape;
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; mask.data.len()];
    let mut uf = UnionFind { parent: vec![0] };

    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = mask.index(z, y, x);
                if !mask.data[i] {
                    continue;
                }
                let mut current = 0u32;
                for off in &offsets {
                    let (nz, ny, nx) = (z as isize + off[0], y as isize + off[1], x as isize + off[2]);
                    if nz < 0 || ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let l = provisional[mask.index(nz as usize, ny as usize, nx as usize)];
                    if l == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = l;
                    } else {
                        uf.union(current, l);
                    }
                }
                if current == 0 {
                    current = uf.parent.len() as u32;
                    uf.parent.push(current);
                }
                provisional[i] = current;
            }
        }
    }

    let mut final_of_root = vec![0u32; uf.parent.len()];
    let mut sizes = Vec::new();
    let mut labels = provisional;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = uf.find(*l) as usize;
        if final_of_root[root] == 0 {
            sizes.push(0);
            final_of_root[root] = sizes.len() as u32;
        }
        *l = final_of_root[root];
        sizes[*l as usize - 1] += 1;
    }
    Labeling { shape: mask.shape, labels, sizes }
}

/// Keeps the voxels of components with at least `min_voxels` voxels.
pub fn prune_small(labeling: &Labeling, min_voxels: usize) -> Mask3D {
    let keep: Vec<bool> = labeling.sizes.iter().map(|&s| s >= min_voxels).collect();
    Mask3D {
        shape: labeling.shape,
        data: labeling.labels.iter().map(|&l| l != 0 && keep[l as usize - 1]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionStats {
    pub n_voxels: usize,
    pub voxel_volume_mm3: f64,
    pub volume_mm3: f64,
    /// `ln(1 + volume_mm3)`.
    pub log_volume: f64,
    pub threshold_used: f32,
}

pub fn lesion_stats(mask: &Mask3D, spacing: [f64; 3], threshold: f32) -> LesionStats {
    let n_voxels = mask.count();
    let voxel_volume_mm3 = spacing[0] * spacing[1] * spacing[2];
    let volume_mm3 = n_voxels as f64 * voxel_volume_mm3;
    LesionStats {
        n_voxels,
        voxel_volume_mm3,
        volume_mm3,
        log_volume: volume_mm3.ln_1p(),
        threshold_used: threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub threshold: f32,
    pub open_iterations: usize,
    pub connectivity: Connectivity,
    pub min_voxels: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            open_iterations: 1,
            connectivity: Connectivity::TwentySix,
            min_voxels: DEFAULT_MIN_VOXELS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub mask: Mask3D,
    pub stats: LesionStats,
    pub components_before_pruning: usize,
}

/// threshold -> open -> components -> prune -> stats.
pub fn segment(vol: &Volume3D, params: &SegmentParams) -> Segmentation {
    let raw = threshold_mask(vol, params.threshold);
    let opened = morph_open_n(&raw, params.open_iterations);
    let labeling = connected_components(&opened, params.connectivity);
    let mask = prune_small(&labeling, params.min_voxels);
    let stats = lesion_stats(&mask, vol.spacing(), params.threshold);
    Segmentation { mask, stats, components_before_pruning: labeling.num_components() }
}
