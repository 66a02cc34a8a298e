//! Synthetic cohort with planted outcome signal.
//!
//! Each patient has a latent severity `s ~ U(0, 1)`. The outcome is
//! unfavorable for the `n - round(prevalence * n)` patients with the largest
//! `s + label_noise * N(0, 1)`. Every observed quantity `q` is driven by a
//! standard-normal score `rho * z(s) + sqrt(1 - rho^2) * e` where `z(s)` is
//! `s` standardized and `rho` is the quantity's signal strength.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::tabular::clinical::{NIHSS_ITEMS, NIHSS_LEN};
use crate::tabular::{write_clinical_csv, ClinicalRecord, Sex};
use crate::volume::nifti::NiftiBuilder;
use crate::volume::Volume3D;

/// NIHSS items that follow severity: 1a, 4, 5a, 5b, 6a, 6b, 9.
pub const SIGNAL_ITEMS: [usize; 7] = [0, 5, 6, 7, 8, 9, 12];
pub const MIN_LESION_VOXELS: f64 = 250.0;
pub const MAX_LESION_VOXELS: f64 = 4000.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    pub seed: u64,
    /// Fraction with favorable outcome.
    pub prevalence: f64,
    /// Age and Day-0 NIHSS signal items.
    pub clinical_strength: f64,
    /// Day-1 NIHSS signal items.
    pub clinical_j1_strength: f64,
    pub lesion_j0_strength: f64,
    pub lesion_j1_strength: f64,
    /// Standard deviation of the noise added to `s` before labelling.
    pub label_noise: f64,
    /// Probability that any one clinical field is left empty.
    pub missing_rate: f64,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n: 74,
            seed: 1,
            prevalence: 0.554,
            clinical_strength: 0.3,
            clinical_j1_strength: 0.8,
            lesion_j0_strength: 0.35,
            lesion_j1_strength: 0.85,
            label_noise: 0.08,
            missing_rate: 0.03,
            shape: [24, 64, 64],
            spacing: [5.0, 3.5, 3.5],
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n < 16 {
            return bad(format!("n must be at least 16, got {}", self.n));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence must lie in (0, 1), got {}", self.prevalence));
        }
        let fav = self.n_favorable();
        if fav == 0 || fav == self.n {
            return bad("prevalence leaves a single class".into());
        }
        for (name, v) in [
            ("clinical_strength", self.clinical_strength),
            ("clinical_j1_strength", self.clinical_j1_strength),
            ("lesion_j0_strength", self.lesion_j0_strength),
            ("lesion_j1_strength", self.lesion_j1_strength),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
            return bad(format!("label_noise must be finite and nonnegative, got {}", self.label_noise));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if self.shape.iter().any(|&d| d < 8) {
            return bad(format!("every volume axis needs at least 8 voxels, got {:?}", self.shape));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad(format!("invalid spacing {:?}", self.spacing));
        }
        Ok(())
    }

    pub fn n_favorable(&self) -> usize {
        (self.prevalence * self.n as f64).round() as usize
    }

    /// The same spec with every signal strength set to zero.
    pub fn null_signal(&self) -> Self {
        Self { clinical_strength: 0.0, clinical_j1_strength: 0.0, lesion_j0_strength: 0.0, lesion_j1_strength: 0.0, ..self.clone() }
    }
}

/// An axis-aligned ellipsoid in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let p = [z as f64, y as f64, x as f64];
        (0..3).map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Brain phantom: smooth ADC field in [700, 900] inside an ellipsoid, zero
/// outside. Lesion voxels take values in [300, 550]. Returns the volume and
/// the number of lesion voxels painted.
pub fn phantom_volume(shape: [usize; 3], spacing: [f64; 3], lesion: Option<&Ellipsoid>, rng: &mut ChaCha8Rng) -> (Volume3D, usize) {
    let [d, h, w] = shape;
    let brain = brain_ellipsoid(shape);
    let phase: [f64; 3] = [rng.random_range(0.0..6.3), rng.random_range(0.0..6.3), rng.random_range(0.0..6.3)];
    let lesion_base: f64 = rng.random_range(340.0..480.0);
    let mut data = vec![0.0f32; d * h * w];
    let mut painted = 0;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                let (fz, fy, fx) = (z as f64 / d as f64, y as f64 / h as f64, x as f64 / w as f64);
                if let Some(l) = lesion.filter(|l| l.contains(z, y, x)) {
                    let r = (0..3).map(|a| ([z, y, x][a] as f64 - l.center[a]) / l.semi_axes[a]).map(|t| t * t).sum::<f64>();
                    data[i] = (lesion_base + 60.0 * r + 10.0 * (6.0 * fx + phase[0]).sin()).clamp(300.0, 550.0) as f32;
                    painted += 1;
                } else if brain.contains(z, y, x) {
                    let v = 800.0
                        + 55.0 * (3.0 * fz + phase[0]).sin() * (2.0 * fy + phase[1]).cos()
                        + 35.0 * (4.0 * fx + phase[2]).sin();
                    data[i] = v.clamp(700.0, 900.0) as f32;
                }
            }
        }
    }
    (Volume3D::new(shape, spacing, data).expect("phantom is a valid volume"), painted)
}

pub fn brain_ellipsoid(shape: [usize; 3]) -> Ellipsoid {
    let c = shape.map(|s| (s as f64 - 1.0) / 2.0);
    Ellipsoid { center: c, semi_axes: [0.46 * shape[0] as f64, 0.43 * shape[1] as f64, 0.41 * shape[2] as f64] }
}

/// Lesion with roughly `voxels` voxels, semi-axes `(r/3, r, r)`, placed so it
/// stays inside the brain ellipsoid.
fn lesion_ellipsoid(shape: [usize; 3], voxels: f64, rng: &mut ChaCha8Rng) -> Ellipsoid {
    let r = (9.0 * voxels / (4.0 * std::f64::consts::PI)).cbrt();
    let semi = [r / 3.0, r, r];
    let brain = brain_ellipsoid(shape);
    let mut center = [0.0; 3];
    for a in 0..3 {
        let room = ((brain.semi_axes[a] - semi[a]) * 0.55).max(0.0);
        center[a] = brain.center[a] + rng.random_range(-1.0..=1.0) * room;
    }
    Ellipsoid { center, semi_axes: semi }
}

/// Ground truth for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub severity: f64,
    pub unfavorable: bool,
    pub lesion_voxels_j0: usize,
    pub lesion_voxels_j1: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub record: ClinicalRecord,
    pub volume_j0: Volume3D,
    pub volume_j1: Volume3D,
    pub truth: TruthRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub spec: CohortSpec,
    pub patients: Vec<SyntheticPatient>,
}

pub fn patient_id(i: usize) -> String {
    format!("P{:03}", i + 1)
}

fn patient_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn driven(rho: f64, z: f64, rng: &mut ChaCha8Rng) -> f64 {
    rho * z + (1.0 - rho * rho).sqrt() * normal(rng)
}

/// Maps a standard-normal score to an integer in `0..=max`.
fn ordinal(score: f64, max: u8) -> u8 {
    let u = Normal::standard().cdf(score);
    ((u * (max as f64 + 1.0)).floor() as u8).min(max)
}

pub fn generate(spec: &CohortSpec) -> Result<SyntheticCohort, SynthError> {
    spec.validate()?;
    let n = spec.n;
    // stream 0 is reserved for severity and labelling; patients use 1..=n
    let mut rng0 = ChaCha8Rng::seed_from_u64(spec.seed);
    let severity: Vec<f64> = (0..n).map(|_| rng0.random::<f64>()).collect();
    let noisy: Vec<f64> = severity.iter().map(|s| s + spec.label_noise * normal(&mut rng0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| noisy[a].total_cmp(&noisy[b]).then(a.cmp(&b)));
    let mut unfavorable = vec![false; n];
    for &i in &order[spec.n_favorable()..] {
        unfavorable[i] = true;
    }

    let patients = (0..n)
        .into_par_iter()
        .map(|i| make_patient(spec, i, severity[i], unfavorable[i]))
        .collect();
    Ok(SyntheticCohort { spec: spec.clone(), patients })
}

fn make_patient(spec: &CohortSpec, i: usize, s: f64, unfavorable: bool) -> SyntheticPatient {
    let mut rng = patient_rng(spec.seed, i);
    let z = (s - 0.5) * 12f64.sqrt();
    let pid = patient_id(i);

    let missing = |rng: &mut ChaCha8Rng| rng.random::<f64>() < spec.missing_rate;
    let age = (68.0 + 11.0 * driven(spec.clinical_strength, z, &mut rng)).clamp(25.0, 99.0).round();
    let sex = if rng.random::<bool>() { Sex::M } else { Sex::F };
    let flags: [bool; 4] = [rng.random_bool(0.55), rng.random_bool(0.2), rng.random_bool(0.25), rng.random_bool(0.3)];
    let pre_mrs = ordinal(normal(&mut rng) - 0.8, 3);
    let nihss = |rho: f64, rng: &mut ChaCha8Rng| -> [u8; NIHSS_LEN] {
        let mut v = [0u8; NIHSS_LEN];
        for (k, item) in NIHSS_ITEMS.iter().enumerate() {
            let score = if SIGNAL_ITEMS.contains(&k) { driven(rho, z, rng) } else { normal(rng) - 0.7 };
            v[k] = ordinal(score, item.2);
        }
        v
    };
    let j0 = nihss(spec.clinical_strength, &mut rng);
    let j1 = nihss(spec.clinical_j1_strength, &mut rng);
    let mrs_90 = if unfavorable { rng.random_range(2..=6) } else { rng.random_range(0..=1) };

    let mut record = ClinicalRecord {
        patient_id: pid.clone(),
        group_id: pid.clone(),
        age: (!missing(&mut rng)).then_some(age),
        sex: (!missing(&mut rng)).then_some(sex),
        risk_flags: [None; 4],
        pre_mrs: (!missing(&mut rng)).then_some(pre_mrs),
        nihss_j0: [None; NIHSS_LEN],
        nihss_j1: [None; NIHSS_LEN],
        mrs_90: Some(mrs_90),
    };
    for (k, f) in flags.iter().enumerate() {
        record.risk_flags[k] = (!missing(&mut rng)).then_some(*f);
    }
    for k in 0..NIHSS_LEN {
        record.nihss_j0[k] = (!missing(&mut rng)).then_some(j0[k]);
        record.nihss_j1[k] = (!missing(&mut rng)).then_some(j1[k]);
    }

    let log_range = (MIN_LESION_VOXELS.ln(), MAX_LESION_VOXELS.ln());
    let size = |score: f64| (log_range.0 + Normal::standard().cdf(score) * (log_range.1 - log_range.0)).exp();
    let v0 = size(driven(spec.lesion_j0_strength, z, &mut rng));
    let v1 = size(driven(spec.lesion_j1_strength, z, &mut rng));
    let l0 = lesion_ellipsoid(spec.shape, v0, &mut rng);
    let l1 = Ellipsoid { center: l0.center, semi_axes: lesion_ellipsoid(spec.shape, v1, &mut rng).semi_axes };
    let (volume_j0, n0) = phantom_volume(spec.shape, spec.spacing, Some(&l0), &mut rng);
    let (volume_j1, n1) = phantom_volume(spec.shape, spec.spacing, Some(&l1), &mut rng);

    SyntheticPatient {
        record,
        volume_j0,
        volume_j1,
        truth: TruthRow { patient_id: pid, severity: s, unfavorable, lesion_voxels_j0: n0, lesion_voxels_j1: n1 },
    }
}

impl SyntheticCohort {
    pub fn records(&self) -> Vec<ClinicalRecord> {
        self.patients.iter().map(|p| p.record.clone()).collect()
    }

    pub fn clinical_csv(&self) -> String {
        write_clinical_csv(&self.records())
    }

    /// `patient_id,severity,unfavorable,lesion_voxels_j0,lesion_voxels_j1`.
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("patient_id,severity,unfavorable,lesion_voxels_j0,lesion_voxels_j1\n");
        for p in &self.patients {
            let t = &p.truth;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.patient_id, t.severity, t.unfavorable as u8, t.lesion_voxels_j0, t.lesion_voxels_j1
            ));
        }
        out
    }

    pub fn nifti_bytes(&self, volume: &Volume3D) -> Vec<u8> {
        NiftiBuilder::new(volume.shape(), self.spec.spacing.map(|s| s as f32)).encode_f32(volume.data())
    }

    /// Writes `volumes/<id>_J0.nii`, `volumes/<id>_J1.nii`, `clinical.csv` and `truth.csv`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let vols = dir.join("volumes");
        fs::create_dir_all(&vols)?;
        for p in &self.patients {
            let id = &p.record.patient_id;
            fs::write(vols.join(format!("{id}_J0.nii")), self.nifti_bytes(&p.volume_j0))?;
            fs::write(vols.join(format!("{id}_J1.nii")), self.nifti_bytes(&p.volume_j1))?;
        }
        fs::write(dir.join("clinical.csv"), self.clinical_csv())?;
        fs::write(dir.join("truth.csv"), self.truth_csv())?;
        Ok(())
    }
}
