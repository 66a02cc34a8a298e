//! Loading a frozen bottleneck ResNet from an "ADCT" container and running it.

use thiserror::Error;

use super::conv::{add_relu, global_average_pool, max_pool, Activations, Conv3d};
use super::spec::{ConvGeometry, NetworkSpec, PoolSpec};
use crate::hash::fnv1a64;
use crate::volume::container::{find, read_container, ContainerError, TensorRecord};
use crate::volume::Volume3D;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("batch norm {0}: variance + eps must be positive and parameters finite")]
    InvalidBatchNorm(String),
    #[error("input shape {0:?} is too small for the network")]
    InputTooSmall([usize; 3]),
    #[error("projection dimension {0} outside [32, 256] or above the embedding size")]
    DimOutOfRange(usize),
    #[error("embedding has length {got}, projection expects {expected}")]
    EmbeddingLength { expected: usize, got: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Debug, Clone)]
struct Bottleneck {
    reduce: Conv3d,
    spatial: Conv3d,
    expand: Conv3d,
    shortcut: Option<Conv3d>,
}

/// Inference-only network with batch norm folded into every convolution.
#[derive(Debug, Clone)]
pub struct FrozenNetwork {
    spec: NetworkSpec,
    stem: Conv3d,
    pool: Option<PoolSpec>,
    blocks: Vec<Bottleneck>,
    weight_hash: u64,
}

/// Folds `gamma, beta, mean, var` into per-channel (scale, shift):
/// `w' = w * gamma / sqrt(var + eps)`, `b' = beta - mean * gamma / sqrt(var + eps)`.
pub fn fold_batch_norm(gamma: &[f32], beta: &[f32], mean: &[f32], var: &[f32]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut scale = Vec::with_capacity(gamma.len());
    let mut shift = Vec::with_capacity(gamma.len());
    for c in 0..gamma.len() {
        let denom = (var[c] as f64 + BN_EPS).sqrt();
        if denom.is_nan() || denom <= 0.0 || !gamma[c].is_finite() || !beta[c].is_finite() || !mean[c].is_finite() {
            return None;
        }
        let s = gamma[c] as f64 / denom;
        scale.push(s);
        shift.push(beta[c] as f64 - mean[c] as f64 * s);
    }
    Some((scale, shift))
}

fn tensor<'a>(records: &'a [TensorRecord], name: &str, shape: &[usize]) -> Result<&'a [f32], InferenceError> {
    let r = find(records, name).map_err(|_| InferenceError::MissingTensor(name.to_owned()))?;
    if r.shape != shape {
        return Err(InferenceError::ShapeMismatch { name: name.to_owned(), expected: shape.to_vec(), got: r.shape.clone() });
    }
    Ok(r.as_f32()?)
}

fn load_conv(records: &[TensorRecord], g: &ConvGeometry) -> Result<Conv3d, InferenceError> {
    let w = tensor(records, &format!("{}.conv.weight", g.prefix), &g.weight_shape())?;
    let bn = |p: &str| tensor(records, &format!("{}.bn.{p}", g.prefix), &[g.out_channels]);
    let (gamma, beta, mean, var) = (bn("gamma")?, bn("beta")?, bn("mean")?, bn("var")?);
    let (scale, shift) =
        fold_batch_norm(gamma, beta, mean, var).ok_or_else(|| InferenceError::InvalidBatchNorm(format!("{}.bn", g.prefix)))?;
    let per_out = w.len() / g.out_channels;
    let weight = w
        .chunks_exact(per_out)
        .zip(&scale)
        .flat_map(|(row, &s)| row.iter().map(move |&v| (v as f64 * s) as f32))
        .collect();
    Ok(Conv3d {
        out_channels: g.out_channels,
        in_channels: g.in_channels,
        kernel: g.kernel,
        stride: g.stride,
        padding: g.padding,
        weight,
        bias: shift.iter().map(|&b| b as f32).collect(),
    })
}

/// Parses a weight container and folds batch norm. The weight hash is
/// FNV-1a over the container bytes.
pub fn load_network(container: &[u8], spec: &NetworkSpec) -> Result<FrozenNetwork, InferenceError> {
    let records = read_container(container)?;
    let mut net = load_network_records(&records, spec)?;
    net.weight_hash = fnv1a64(container);
    Ok(net)
}

pub fn load_network_records(records: &[TensorRecord], spec: &NetworkSpec) -> Result<FrozenNetwork, InferenceError> {
    let stem = load_conv(records, &spec.stem_geometry())?;
    let blocks = spec
        .blocks()
        .iter()
        .map(|b| {
            Ok(Bottleneck {
                reduce: load_conv(records, &b.reduce)?,
                spatial: load_conv(records, &b.spatial)?,
                expand: load_conv(records, &b.expand)?,
                shortcut: b.shortcut.as_ref().map(|g| load_conv(records, g)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    Ok(FrozenNetwork { spec: spec.clone(), stem, pool: spec.stem.max_pool, blocks, weight_hash: 0 })
}

impl FrozenNetwork {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim()
    }

    pub fn weight_hash(&self) -> u64 {
        self.weight_hash
    }

    /// Folded convolutions in forward order (stem, then reduce/spatial/expand/shortcut per block).
    pub fn convolutions(&self) -> Vec<&Conv3d> {
        let mut v = vec![&self.stem];
        for b in &self.blocks {
            v.extend([&b.reduce, &b.spatial, &b.expand]);
            v.extend(b.shortcut.as_ref());
        }
        v
    }

    /// Runs the network on a single-channel volume and global-average-pools the result.
    pub fn embed(&self, vol: &Volume3D) -> Result<Vec<f32>, InferenceError> {
        if self.spec.output_shapes(vol.shape()).is_none() {
            return Err(InferenceError::InputTooSmall(vol.shape()));
        }
        let x = Activations::new(1, vol.shape(), vol.data().to_vec());
        Ok(global_average_pool(&self.features(x)))
    }

    fn features(&self, x: Activations) -> Activations {
        let mut h = self.stem.forward(&x, true);
        if let Some(p) = self.pool {
            h = max_pool(&h, p.kernel, p.stride, p.padding);
        }
        for b in &self.blocks {
            let a = b.reduce.forward(&h, true);
            let a = b.spatial.forward(&a, true);
            let mut out = b.expand.forward(&a, false);
            match &b.shortcut {
                Some(sc) => add_relu(&mut out, &sc.forward(&h, false)),
                None => add_relu(&mut out, &h),
            }
            h = out;
        }
        h
    }
}
