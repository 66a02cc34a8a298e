//! Per-volume feature extraction and cohort assembly.
//!
//! For each scan: resample to the canonical grid, segment the raw resampled
//! intensities, z-score the foreground, embed with the frozen network and
//! project.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{CohortEntry, CohortTable};
use crate::hash::{hex64, Fnv1a};
use crate::inference::{CachedEmbedding, EmbeddingCache, FrozenNetwork, InferenceError, ProjectionHead};
use crate::lesion::{segment, LesionStats, SegmentParams, STRICT_THRESHOLD};
use crate::preprocess::{normalize_intensity, resample_trilinear, PreprocessError, CANONICAL_SHAPE};
use crate::tabular::ClinicalRecord;
use crate::volume::{read_nifti, NiftiError, Volume3D};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Nifti { path: String, source: NiftiError },
    #[error("{id}: {source}")]
    Preprocess { id: String, source: PreprocessError },
    #[error("{id}: {source}")]
    Inference { id: String, source: InferenceError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub canonical_shape: [usize; 3],
    pub segment: SegmentParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { canonical_shape: CANONICAL_SHAPE, segment: SegmentParams::default() }
    }
}

/// Lesion statistics at the configured threshold and at the strict one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionChannels {
    pub primary: LesionStats,
    pub strict: LesionStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFeatures {
    pub id: String,
    pub lesion: LesionChannels,
    pub embedding: Vec<f32>,
    pub projected: Vec<f64>,
    pub cache_hit: bool,
}

/// Hash of the voxel payload and grid, used in cache keys.
///
/// The grid goes through FNV-1a; voxels are mixed eight bytes per step so a
/// canonical volume hashes in a few milliseconds.
pub fn volume_digest(vol: &Volume3D) -> String {
    const K: u64 = 0x517c_c1b7_2722_0a95;
    let mut header = Fnv1a::default();
    for s in vol.shape() {
        header.update(&(s as u64).to_le_bytes());
    }
    for s in vol.spacing() {
        header.update(&s.to_le_bytes());
    }
    let mix = |h: u64, w: u64| (h.rotate_left(5) ^ w).wrapping_mul(K);
    let data = vol.data();
    let pairs = data.chunks_exact(2);
    let tail = pairs.remainder().first().map(|v| v.to_bits() as u64);
    let mut h = pairs.fold(header.finish(), |h, p| mix(h, p[0].to_bits() as u64 | (p[1].to_bits() as u64) << 32));
    if let Some(t) = tail {
        h = mix(h, t);
    }
    hex64(mix(h, data.len() as u64))
}

pub fn segment_channels(raw_canonical: &Volume3D, params: &SegmentParams) -> LesionChannels {
    let primary = segment(raw_canonical, params).stats;
    let strict = segment(raw_canonical, &SegmentParams { threshold: params.threshold.min(STRICT_THRESHOLD), ..*params }).stats;
    LesionChannels { primary, strict }
}

pub fn process_volume(
    id: &str,
    vol: &Volume3D,
    net: &FrozenNetwork,
    head: &ProjectionHead,
    cache: Option<&EmbeddingCache>,
    config: &PipelineConfig,
) -> Result<VolumeFeatures, PipelineError> {
    let canonical = resample_trilinear(vol, config.canonical_shape, id)
        .map_err(|source| PipelineError::Preprocess { id: id.to_string(), source })?;
    let lesion = segment_channels(&canonical.volume, &config.segment);
    let key = EmbeddingCache::key(
        &format!("{id}-{}", volume_digest(&canonical.volume)),
        net.weight_hash(),
        head.seed(),
        head.target_dim(),
    );
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        if hit.embedding.len() == net.embedding_dim() && hit.projected.len() == head.target_dim() {
            log::info!("{id}: embedding cache hit");
            return Ok(VolumeFeatures { id: id.to_string(), lesion, embedding: hit.embedding, projected: hit.projected, cache_hit: true });
        }
    }
    let inference = |source| PipelineError::Inference { id: id.to_string(), source };
    let normalized = normalize_intensity(&canonical);
    let embedding = net.embed(&normalized.volume).map_err(inference)?;
    let projected = head.project(&embedding).map_err(inference)?;
    log::info!("{id}: forward pass");
    if let Some(c) = cache {
        let entry = CachedEmbedding { embedding: embedding.clone(), projected: projected.clone() };
        c.put(&key, &entry).map_err(|source| PipelineError::Io { path: c.dir().display().to_string(), source })?;
    }
    Ok(VolumeFeatures { id: id.to_string(), lesion, embedding, projected, cache_hit: false })
}

/// `<dir>/<patient>_<J0|J1>.nii` or `.nii.gz`, if present.
pub fn locate_volume(dir: &Path, patient_id: &str, timepoint: &str) -> Option<PathBuf> {
    ["nii", "nii.gz"].iter().map(|ext| dir.join(format!("{patient_id}_{timepoint}.{ext}"))).find(|p| p.is_file())
}

pub fn read_volume_file(path: &Path) -> Result<Volume3D, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    read_nifti(&bytes).map_err(|source| PipelineError::Nifti { path: path.display().to_string(), source })
}

/// Where the volumes for a cohort come from.
pub enum VolumeSource<'a> {
    Directory(&'a Path),
    /// `(patient id, J0, J1)` volumes held in memory.
    Memory(&'a [(String, Option<Volume3D>, Option<Volume3D>)]),
}

/// Extracts MRI and lesion features for every record, in parallel across
/// scans. Scans that are absent leave their blocks empty.
pub fn build_cohort_table(
    records: &[ClinicalRecord],
    source: &VolumeSource,
    net: &FrozenNetwork,
    head: &ProjectionHead,
    cache: Option<&EmbeddingCache>,
    config: &PipelineConfig,
) -> Result<(CohortTable, Vec<VolumeFeatures>), PipelineError> {
    let jobs: Vec<(usize, &str)> = (0..records.len()).flat_map(|i| [(i, "J0"), (i, "J1")]).collect();
    let results: Vec<Option<VolumeFeatures>> = jobs
        .par_iter()
        .map(|&(i, tp)| {
            let pid = &records[i].patient_id;
            let vol = match source {
                VolumeSource::Directory(dir) => match locate_volume(dir, pid, tp) {
                    Some(p) => read_volume_file(&p)?,
                    None => return Ok(None),
                },
                VolumeSource::Memory(vols) => {
                    let found = vols.iter().find(|(id, _, _)| id == pid);
                    match found.and_then(|(_, j0, j1)| if tp == "J0" { j0.clone() } else { j1.clone() }) {
                        Some(v) => v,
                        None => return Ok(None),
                    }
                }
            };
            process_volume(&format!("{pid}_{tp}"), &vol, net, head, cache, config).map(Some)
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut entries = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let (j0, j1) = (&results[2 * i], &results[2 * i + 1]);
        entries.push(CohortEntry {
            record: r.clone(),
            mri_j0: j0.as_ref().map(|f| f.projected.clone()),
            mri_j1: j1.as_ref().map(|f| f.projected.clone()),
            lesion_j0: j0.as_ref().map(|f| f.lesion.primary),
            lesion_j1: j1.as_ref().map(|f| f.lesion.primary),
        });
    }
    let table = CohortTable { entries, weight_hash: hex64(net.weight_hash()), projection_seed: head.seed() };
    Ok((table, results.into_iter().flatten().collect()))
}
