//! Cross-validation reports, paired comparison and the standard grid.

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentConfig;
use super::metrics::Metrics;
use super::wilcoxon::{wilcoxon_signed_rank, Alternative, PMethod};
use super::EvalError;
use crate::tabular::BlockSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_features: usize,
    pub n_components: usize,
    pub svm_epochs: usize,
    pub svm_converged: bool,
    pub train: Metrics,
    pub val: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub patient_id: String,
    pub fold: usize,
    /// True for the unfavorable class.
    pub label: bool,
    pub score: f64,
    pub probability: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub svm: u64,
    pub projection: u64,
    pub permutation: Option<u64>,
}

/// Mean and sample (n - 1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc: MeanSd,
    pub accuracy: MeanSd,
    pub f1: MeanSd,
}

impl MetricSummary {
    pub fn of(metrics: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> f64| MeanSd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        Self { auc: col(|m| m.auc), accuracy: col(|m| m.accuracy), f1: col(|m| m.f1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub train: MetricSummary,
    pub val: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub config_id: String,
    pub blocks: String,
    pub n_patients: usize,
    pub k: usize,
    pub fold_plan_hash: String,
    pub seeds: Seeds,
    pub weight_hash: String,
    pub folds: Vec<FoldReport>,
    pub aggregates: Aggregates,
    pub predictions: Vec<PredictionRow>,
}

impl CVReport {
    pub fn assemble(
        config: &ExperimentConfig,
        n_patients: usize,
        fold_plan_hash: String,
        seeds: Seeds,
        weight_hash: String,
        folds: Vec<FoldReport>,
        predictions: Vec<PredictionRow>,
    ) -> Self {
        let aggregates = aggregate(&folds);
        Self {
            config_id: config.id.clone(),
            blocks: config.blocks.to_string(),
            n_patients,
            k: folds.len(),
            fold_plan_hash,
            seeds,
            weight_hash,
            folds,
            aggregates,
            predictions,
        }
    }

    pub fn val_aucs(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.val.auc).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        serde_json::from_str(s).map_err(|e| EvalError::Parse(e.to_string()))
    }

    /// One row per fold and split: `config_id,fold,split,auc,accuracy,f1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_id,fold,split,auc,accuracy,f1\n");
        for f in &self.folds {
            for (split, m) in [("train", &f.train), ("val", &f.val)] {
                out.push_str(&format!("{},{},{},{},{},{}\n", self.config_id, f.fold, split, m.auc, m.accuracy, m.f1));
            }
        }
        out
    }
}

pub fn aggregate(folds: &[FoldReport]) -> Aggregates {
    Aggregates {
        train: MetricSummary::of(&folds.iter().map(|f| f.train).collect::<Vec<_>>()),
        val: MetricSummary::of(&folds.iter().map(|f| f.val).collect::<Vec<_>>()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonStatus {
    Tested,
    /// Every paired difference was zero.
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config_a: String,
    pub config_b: String,
    pub alternative: Alternative,
    pub status: ComparisonStatus,
    pub n: usize,
    pub w: Option<f64>,
    pub p: Option<f64>,
    pub method: Option<PMethod>,
    pub mean_difference: f64,
}

/// Wilcoxon signed-rank over per-fold validation AUCs of two runs on the same fold plan.
pub fn compare_runs(a: &CVReport, b: &CVReport, alternative: Alternative) -> Result<Comparison, EvalError> {
    if a.fold_plan_hash != b.fold_plan_hash || a.folds.len() != b.folds.len() {
        return Err(EvalError::FoldPlanMismatch { a: a.fold_plan_hash.clone(), b: b.fold_plan_hash.clone() });
    }
    let (xa, xb) = (a.val_aucs(), b.val_aucs());
    let mean_difference = xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / xa.len() as f64;
    let base = Comparison {
        config_a: a.config_id.clone(),
        config_b: b.config_id.clone(),
        alternative,
        status: ComparisonStatus::NoEvidence,
        n: 0,
        w: None,
        p: None,
        method: None,
        mean_difference,
    };
    match wilcoxon_signed_rank(&xa, &xb, alternative) {
        Ok(r) => Ok(Comparison { status: ComparisonStatus::Tested, n: r.n, w: Some(r.w), p: Some(r.p), method: Some(r.method), ..base }),
        Err(EvalError::AllZeroDifferences) => Ok(base),
        Err(e) => Err(e),
    }
}

/// The configuration grid of the MRI-only and multimodal tables.
pub fn standard_grid() -> Vec<(&'static str, BlockSet)> {
    [
        ("J0_MRI", "mri_j0"),
        ("J1_MRI", "mri_j1"),
        ("Clinical", "clinical"),
        ("Clinical+LesionJ0", "clinical,lesion_j0"),
        ("J0+Clinical+LesionJ0", "clinical,mri_j0,lesion_j0"),
        ("J1+Clinical", "clinical,mri_j1"),
        ("J1+Clinical+LesionJ1", "clinical,mri_j1,lesion_j1"),
    ]
    .into_iter()
    .map(|(id, blocks)| (id, blocks.parse().expect("valid block list")))
    .collect()
}
