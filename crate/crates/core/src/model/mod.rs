//! PCA, class-balanced linear SVM, Platt calibration and the persisted bundle.

pub mod bundle;
pub mod pca;
pub mod platt;
pub mod svm;

pub use bundle::{train_bundle, ModelBundle, Prediction, TrainParams};
pub use pca::{pca_fit, PcaModel, PcaParams};
pub use platt::{platt_fit, PlattModel};
pub use svm::{svm_fit, SvmModel, SvmParams, SvmSolution};

use thiserror::Error;

use crate::tabular::TabularError;
use crate::volume::ContainerError;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("training labels contain a single class")]
    OneClass,
    #[error("expected dimension {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training data has zero variance")]
    NoVariance,
    #[error("feature names do not match the bundle registry (first difference at index {0})")]
    NameMismatch(usize),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("bundle metadata: {0}")]
    Metadata(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}
