//! Cross-validation, metrics, paired testing and the experiment runner.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod split;
pub mod wilcoxon;

pub use experiment::{run_experiment, run_fold, CohortEntry, CohortTable, ExperimentConfig, FoldFit};
pub use metrics::{accuracy_f1, auc, Metrics};
pub use report::{compare_runs, standard_grid, CVReport, Comparison, ComparisonStatus};
pub use split::{stratified_group_kfold, FoldPlan};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, WilcoxonResult};

use thiserror::Error;

use crate::model::ModelError;
use crate::tabular::TabularError;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain a single class")]
    OneClass,
    #[error("empty input")]
    EmptyInput,
    #[error("fold count must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("{groups} groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("fold plans differ ({a} vs {b})")]
    FoldPlanMismatch { a: String, b: String },
    #[error("patient {patient} has no {block} features")]
    MissingBlock { patient: String, block: String },
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
    #[error("report parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}
