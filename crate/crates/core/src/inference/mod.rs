//! Frozen 3D ResNet inference.
//!
//! Weights arrive in an "ADCT" container keyed by the canonical name table
//! ([`NetworkSpec::tensor_table`]). Batch norm is folded into the convolutions
//! at load time and the network is immutable afterwards.

pub mod cache;
pub mod conv;
pub mod network;
pub mod projection;
pub mod spec;
pub mod weights;

pub use cache::{CachedEmbedding, EmbeddingCache};
pub use network::{load_network, load_network_records, FrozenNetwork, InferenceError};
pub use projection::{mri_feature_names, ProjectionHead, DEFAULT_PROJECTION_DIM};
pub use spec::NetworkSpec;
pub use weights::{random_weights, RandomWeightOptions};

use crate::preprocess::CanonicalVolume;

/// Pooled embedding of a normalized canonical volume.
pub fn forward_embed(net: &FrozenNetwork, vol: &CanonicalVolume) -> Result<Vec<f32>, InferenceError> {
    net.embed(&vol.volume)
}
