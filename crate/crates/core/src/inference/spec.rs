//! Bottleneck 3D ResNet architecture description and its tensor name table.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub max_pool: Option<PoolSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    pub base_channels: usize,
    /// Stride of the 3x3x3 conv (and projection shortcut) in the first block.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub expansion: usize,
}

/// Convolution slots inside a bottleneck block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Reduce,
    Spatial,
    Expand,
    Shortcut,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Reduce => "reduce",
            Slot::Spatial => "spatial",
            Slot::Expand => "expand",
            Slot::Shortcut => "shortcut",
        }
    }
}

/// Geometry of one convolution, as the loader and the forward pass see it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvGeometry {
    /// Name prefix, e.g. `stage2.block1.spatial`.
    pub prefix: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel, self.kernel]
    }
}

/// Convolutions of one bottleneck block; `shortcut` is present when the
/// block changes channel count or stride.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGeometry {
    pub reduce: ConvGeometry,
    pub spatial: ConvGeometry,
    pub expand: ConvGeometry,
    pub shortcut: Option<ConvGeometry>,
}

pub const BN_PARAMS: [&str; 4] = ["gamma", "beta", "mean", "var"];

impl NetworkSpec {
    /// 3D ResNet-50: 7^3 stem with 64 channels, bottleneck stages [3, 4, 6, 3]
    /// with base widths [64, 128, 256, 512] and expansion 4 (2048 outputs).
    pub fn resnet50() -> Self {
        Self {
            in_channels: 1,
            stem: StemSpec {
                channels: 64,
                kernel: 7,
                stride: 2,
                padding: 3,
                max_pool: Some(PoolSpec { kernel: 3, stride: 2, padding: 1 }),
            },
            stages: vec![
                StageSpec { blocks: 3, base_channels: 64, stride: 1 },
                StageSpec { blocks: 4, base_channels: 128, stride: 2 },
                StageSpec { blocks: 6, base_channels: 256, stride: 2 },
                StageSpec { blocks: 3, base_channels: 512, stride: 2 },
            ],
            expansion: 4,
        }
    }

    /// Small network for tests and desk-scale runs: ResNet-50 layout with
    /// two one-block stages of base width 8 and 16 (64-D embedding).
    pub fn tiny() -> Self {
        Self {
            in_channels: 1,
            stem: StemSpec {
                channels: 8,
                kernel: 7,
                stride: 2,
                padding: 3,
                max_pool: Some(PoolSpec { kernel: 3, stride: 2, padding: 1 }),
            },
            stages: vec![
                StageSpec { blocks: 1, base_channels: 8, stride: 1 },
                StageSpec { blocks: 1, base_channels: 16, stride: 2 },
            ],
            expansion: 4,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "resnet50" => Some(Self::resnet50()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn stem_geometry(&self) -> ConvGeometry {
        ConvGeometry {
            prefix: "stem".into(),
            out_channels: self.stem.channels,
            in_channels: self.in_channels,
            kernel: self.stem.kernel,
            stride: self.stem.stride,
            padding: self.stem.padding,
        }
    }

    /// Blocks in forward order, with stage and block numbers starting at 1.
    pub fn blocks(&self) -> Vec<BlockGeometry> {
        let mut in_c = self.stem.channels;
        let mut out = Vec::new();
        for (s, stage) in self.stages.iter().enumerate() {
            let width = stage.base_channels;
            let out_c = width * self.expansion;
            for b in 0..stage.blocks {
                let stride = if b == 0 { stage.stride } else { 1 };
                let p = format!("stage{}.block{}", s + 1, b + 1);
                let conv = |slot: Slot, o, i, k, st, pad| ConvGeometry {
                    prefix: format!("{p}.{}", slot.as_str()),
                    out_channels: o,
                    in_channels: i,
                    kernel: k,
                    stride: st,
                    padding: pad,
                };
                let shortcut = (in_c != out_c || stride != 1).then(|| conv(Slot::Shortcut, out_c, in_c, 1, stride, 0));
                out.push(BlockGeometry {
                    reduce: conv(Slot::Reduce, width, in_c, 1, 1, 0),
                    spatial: conv(Slot::Spatial, width, width, 3, stride, 1),
                    expand: conv(Slot::Expand, out_c, width, 1, 1, 0),
                    shortcut,
                });
                in_c = out_c;
            }
        }
        out
    }

    pub fn embedding_dim(&self) -> usize {
        self.stages
            .last()
            .map(|s| s.base_channels * self.expansion)
            .unwrap_or(self.stem.channels)
    }

    /// Every convolution in forward order.
    pub fn convolutions(&self) -> Vec<ConvGeometry> {
        let mut v = vec![self.stem_geometry()];
        for b in self.blocks() {
            v.push(b.reduce);
            v.push(b.spatial);
            v.push(b.expand);
            v.extend(b.shortcut);
        }
        v
    }

    /// The canonical tensor name table: `(name, shape)` for every required tensor.
    pub fn tensor_table(&self) -> Vec<(String, Vec<usize>)> {
        let mut t = Vec::new();
        for c in self.convolutions() {
            t.push((format!("{}.conv.weight", c.prefix), c.weight_shape()));
            for p in BN_PARAMS {
                t.push((format!("{}.bn.{p}", c.prefix), vec![c.out_channels]));
            }
        }
        t
    }

    /// Spatial shape after the stem (including max pooling) and after every block.
    pub fn output_shapes(&self, input: [usize; 3]) -> Option<Vec<[usize; 3]>> {
        let mut shapes = Vec::new();
        let stem = self.stem_geometry();
        let mut s = conv_out_shape(input, stem.kernel, stem.stride, stem.padding)?;
        if let Some(p) = self.stem.max_pool {
            s = conv_out_shape(s, p.kernel, p.stride, p.padding)?;
        }
        shapes.push(s);
        for b in self.blocks() {
            s = conv_out_shape(s, b.spatial.kernel, b.spatial.stride, b.spatial.padding)?;
            shapes.push(s);
        }
        Some(shapes)
    }
}

/// `floor((in + 2p - k) / s) + 1` per axis; `None` when an axis would be empty.
pub fn conv_out_shape(input: [usize; 3], kernel: usize, stride: usize, padding: usize) -> Option<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let padded = input[a] + 2 * padding;
        if padded < kernel || stride == 0 {
            return None;
        }
        out[a] = (padded - kernel) / stride + 1;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet50_layout() {
        let spec = NetworkSpec::resnet50();
        assert_eq!(spec.embedding_dim(), 2048);
        let blocks = spec.blocks();
        assert_eq!(blocks.len(), 16);
        // projection shortcut on the first block of each stage only
        let with_shortcut: Vec<_> = blocks.iter().filter_map(|b| b.shortcut.as_ref().map(|s| s.prefix.clone())).collect();
        assert_eq!(
            with_shortcut,
            ["stage1.block1.shortcut", "stage2.block1.shortcut", "stage3.block1.shortcut", "stage4.block1.shortcut"]
        );
        assert_eq!(blocks[3].spatial.stride, 2);
        assert_eq!(blocks[4].spatial.stride, 1);
        let table = spec.tensor_table();
        assert_eq!(table[0], ("stem.conv.weight".to_string(), vec![64, 1, 7, 7, 7]));
        assert!(table.iter().any(|(n, s)| n == "stage4.block2.expand.conv.weight" && s == &vec![2048, 512, 1, 1, 1]));
        // 53 convolutions, each with weight + 4 BN vectors
        assert_eq!(table.len(), 53 * 5);
    }

    #[test]
    fn canonical_shape_law() {
        let shapes = NetworkSpec::resnet50().output_shapes([24, 256, 256]).unwrap();
        assert_eq!(shapes[0], [6, 64, 64]);
        assert_eq!(*shapes.last().unwrap(), [1, 8, 8]);
        assert_eq!(conv_out_shape([3, 32, 32], 3, 2, 1), Some([2, 16, 16]));
        assert_eq!(conv_out_shape([1, 1, 1], 7, 2, 0), None);
    }
}
