//! Stroke outcome prediction from ADC diffusion MRI, clinical variables and
//! lesion volumes.
//!
//! The crate covers the whole chain: NIfTI ingestion, resampling, threshold
//! segmentation, frozen 3D ResNet embeddings, feature fusion, PCA + linear
//! SVM with Platt calibration, grouped stratified cross-validation and paired
//! comparison of configurations. A synthetic cohort generator provides data
//! with planted signal for end-to-end runs.

pub mod eval;
pub mod explain;
pub mod hash;
pub mod inference;
pub mod lesion;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod tabular;
pub mod volume;

pub use volume::Volume3D;
