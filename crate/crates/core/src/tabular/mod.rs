//! Clinical data ingestion, imputation, feature fusion and standardization.

pub mod clinical;
pub mod fusion;
pub mod impute;
pub mod scaler;

pub use clinical::{parse_clinical_csv, write_clinical_csv, ClinicalRecord, Label, Sex};
pub use fusion::{clinical_feature_names, clinical_features, fuse, BlockSet, FeatureBlock, FeatureVector, FusionInput};
pub use impute::{impute_median, Imputer};
pub use scaler::Scaler;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TabularError {
    #[error("bad CSV header: {0}")]
    BadHeader(String),
    #[error("row {row}: expected {expected} cells, got {got}")]
    RowArity { row: usize, expected: usize, got: usize },
    #[error("row {row}: {field} out of range")]
    OutOfRange { field: String, row: usize },
    #[error("row {row}: invalid {field} value {value:?}")]
    InvalidValue { field: String, row: usize, value: String },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("field {0} is missing for every training record")]
    AllMissing(String),
    #[error("imputation needs at least one training record")]
    EmptyTrainSet,
    #[error("record {0} still has missing values")]
    Incomplete(String),
    #[error("no feature blocks requested")]
    EmptyFusion,
    #[error("feature block {0} requested twice")]
    DuplicateBlock(String),
    #[error("unknown feature block {0:?}")]
    UnknownBlock(String),
    #[error("duplicate feature name {0}")]
    DuplicateName(String),
    #[error("{names} names for {values} values")]
    LengthMismatch { names: usize, values: usize },
    #[error("standardization needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} features, got {got}")]
    DimMismatch { expected: usize, got: usize },
}
