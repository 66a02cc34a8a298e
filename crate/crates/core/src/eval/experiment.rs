//! Cross-validated training and evaluation of one feature-block configuration.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Metrics};
use super::report::{CVReport, FoldReport, PredictionRow, Seeds};
use super::split::{stratified_group_kfold, FoldPlan, DEFAULT_FOLDS};
use super::EvalError;
use crate::lesion::LesionStats;
use crate::model::{train_bundle, ModelBundle, SvmSolution, TrainParams};
use crate::tabular::{clinical_feature_names, clinical_features, fuse, BlockSet, ClinicalRecord, FeatureBlock, FusionInput, Imputer};

/// One patient's inputs; absent blocks are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub record: ClinicalRecord,
    pub mri_j0: Option<Vec<f64>>,
    pub mri_j1: Option<Vec<f64>>,
    pub lesion_j0: Option<LesionStats>,
    pub lesion_j1: Option<LesionStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub entries: Vec<CohortEntry>,
    /// Hash of the network weights behind the MRI blocks.
    pub weight_hash: String,
    pub projection_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub blocks: BlockSet,
    pub folds: usize,
    pub split_seed: u64,
    pub train: TrainParams,
    /// Shuffle the outcome labels with this seed before splitting.
    pub permute_labels: Option<u64>,
}

impl ExperimentConfig {
    pub fn new(id: &str, blocks: BlockSet) -> Self {
        Self { id: id.to_string(), blocks, folds: DEFAULT_FOLDS, split_seed: 0, train: TrainParams::default(), permute_labels: None }
    }
}

/// Labelled entries with their labels and groups, after optional permutation.
pub struct PreparedCohort<'a> {
    pub entries: Vec<&'a CohortEntry>,
    pub labels: Vec<bool>,
    pub groups: Vec<String>,
}

pub fn prepare<'a>(table: &'a CohortTable, config: &ExperimentConfig) -> Result<PreparedCohort<'a>, EvalError> {
    let mut entries = Vec::new();
    let mut dropped = 0;
    for e in &table.entries {
        if e.record.mrs_90.is_some() {
            entries.push(e);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{}: {dropped} patients without mrs_90 left out", config.id);
    }
    let mut labels: Vec<bool> = entries.iter().map(|e| e.record.label().expect("filtered").is_positive()).collect();
    if let Some(seed) = config.permute_labels {
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let groups = entries.iter().map(|e| e.record.group_id.clone()).collect();
    Ok(PreparedCohort { entries, labels, groups })
}

pub fn fold_plan(prepared: &PreparedCohort, config: &ExperimentConfig) -> Result<FoldPlan, EvalError> {
    stratified_group_kfold(&prepared.labels, &prepared.groups, config.folds, config.split_seed)
}

/// Everything fitted on one fold's training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldFit {
    pub imputer: Imputer,
    pub bundle: ModelBundle,
    pub solution: SvmSolution,
    pub train: Metrics,
    pub val: Metrics,
    pub predictions: Vec<PredictionRow>,
}

/// `Ok(None)` when the block is not requested, `Err(block)` when it is but absent.
fn pick<T>(blocks: &BlockSet, b: FeatureBlock, v: Option<T>) -> Result<Option<T>, FeatureBlock> {
    match (blocks.contains(b), v) {
        (false, _) => Ok(None),
        (true, Some(v)) => Ok(Some(v)),
        (true, None) => Err(b),
    }
}

/// Fused feature names and values for one patient; missing clinical fields are filled by `imputer`.
pub fn feature_row(entry: &CohortEntry, imputer: &Imputer, blocks: &BlockSet) -> Result<(Vec<String>, Vec<f64>), EvalError> {
    let pid = &entry.record.patient_id;
    let missing = |b: FeatureBlock| EvalError::MissingBlock { patient: pid.clone(), block: b.as_str().to_string() };
    let day1 = blocks.includes_day1();
    let clinical_names = clinical_feature_names(day1);
    let clinical_values = if blocks.contains(FeatureBlock::Clinical) {
        clinical_features(&imputer.apply(&entry.record), day1)?
    } else {
        Vec::new()
    };
    let input = FusionInput {
        clinical: blocks.contains(FeatureBlock::Clinical).then_some((clinical_names.as_slice(), clinical_values.as_slice())),
        mri_j0: pick(blocks, FeatureBlock::MriJ0, entry.mri_j0.as_deref()).map_err(missing)?,
        mri_j1: pick(blocks, FeatureBlock::MriJ1, entry.mri_j1.as_deref()).map_err(missing)?,
        lesion_j0: pick(blocks, FeatureBlock::LesionJ0, entry.lesion_j0.as_ref()).map_err(missing)?,
        lesion_j1: pick(blocks, FeatureBlock::LesionJ1, entry.lesion_j1.as_ref()).map_err(missing)?,
    };
    let fv = fuse(pid, entry.record.label(), &input)?;
    Ok((fv.names, fv.values))
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// Fits and evaluates one fold. Only training rows reach any `fit`.
pub fn run_fold(
    prepared: &PreparedCohort,
    plan: &FoldPlan,
    fold: usize,
    config: &ExperimentConfig,
    weight_hash: &str,
) -> Result<FoldFit, EvalError> {
    let train_idx = plan.training_indices(fold);
    let val_idx = plan.validation_indices(fold);
    let imputer = Imputer::fit(train_idx.iter().map(|&i| &prepared.entries[i].record))?;

    let mut names = Vec::new();
    let mut rows = |idx: &[usize]| -> Result<Vec<Vec<f64>>, EvalError> {
        idx.iter()
            .map(|&i| {
                let (n, v) = feature_row(prepared.entries[i], &imputer, &config.blocks)?;
                names = n;
                Ok(v)
            })
            .collect()
    };
    let x_train = matrix(&rows(&train_idx)?);
    let x_val = matrix(&rows(&val_idx)?);
    let y_train: Vec<bool> = train_idx.iter().map(|&i| prepared.labels[i]).collect();
    let y_val: Vec<bool> = val_idx.iter().map(|&i| prepared.labels[i]).collect();

    let mut params = config.train;
    params.svm.seed = params.svm.seed.wrapping_add(fold as u64);
    let (bundle, solution) = train_bundle(&x_train, &y_train, names, &config.id, weight_hash, &params)?;

    let evaluate = |x: &DMatrix<f64>, y: &[bool]| -> Result<(Vec<f64>, Vec<f64>, Metrics), EvalError> {
        let scores = bundle.score_matrix(x)?;
        let probs: Vec<f64> = scores.iter().map(|&s| bundle.platt.probability(s)).collect();
        let predicted: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
        let m = metrics(&scores, &predicted, y)?;
        Ok((scores, probs, m))
    };
    let (_, _, train) = evaluate(&x_train, &y_train)?;
    let (scores, probs, val) = evaluate(&x_val, &y_val)?;
    let predictions = val_idx
        .iter()
        .enumerate()
        .map(|(r, &i)| PredictionRow {
            patient_id: prepared.entries[i].record.patient_id.clone(),
            fold,
            label: prepared.labels[i],
            score: scores[r],
            probability: probs[r],
            predicted: probs[r] >= 0.5,
        })
        .collect();
    Ok(FoldFit { imputer, bundle, solution, train, val, predictions })
}

/// Runs every fold (concurrently) and assembles the report in fold order.
pub fn run_experiment(table: &CohortTable, config: &ExperimentConfig) -> Result<CVReport, EvalError> {
    let prepared = prepare(table, config)?;
    let plan = fold_plan(&prepared, config)?;
    let fits: Vec<FoldFit> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            run_fold(&prepared, &plan, f, config, &table.weight_hash)
                .map_err(|e| EvalError::Fold { fold: f, message: e.to_string() })
        })
        .collect::<Result<_, _>>()?;

    let folds = fits
        .iter()
        .enumerate()
        .map(|(f, fit)| FoldReport {
            fold: f,
            n_train: plan.training_indices(f).len(),
            n_val: plan.validation_indices(f).len(),
            n_features: fit.bundle.feature_names.len(),
            n_components: fit.bundle.pca.n_components(),
            svm_epochs: fit.solution.epochs,
            svm_converged: fit.solution.converged,
            train: fit.train,
            val: fit.val,
        })
        .collect();
    let mut predictions: Vec<PredictionRow> = fits.into_iter().flat_map(|f| f.predictions).collect();
    predictions.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(CVReport::assemble(
        config,
        prepared.entries.len(),
        plan.hash(),
        Seeds {
            split: config.split_seed,
            svm: config.train.svm.seed,
            projection: table.projection_seed,
            permutation: config.permute_labels,
        },
        table.weight_hash.clone(),
        folds,
        predictions,
    ))
}
