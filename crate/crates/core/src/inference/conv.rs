//! Dense 3D convolution, max pooling and global average pooling on f32
//! activations laid out as (channel, depth, height, width).
//!
//! Work is split across blocks of output channels. Every output value is
//! accumulated in a fixed order that does not depend on the number of
//! worker threads, so results are bit-identical for any pool size.

use rayon::prelude::*;

use super::spec::conv_out_shape;

#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub channels: usize,
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

impl Activations {
    pub fn new(channels: usize, shape: [usize; 3], data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * shape.iter().product::<usize>());
        Self { channels, shape, data }
    }

    pub fn plane(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }
}

/// A convolution with bias (batch norm already folded in).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// (out, in, k, k, k) row-major.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

const CO_BLOCK: usize = 4;
const TILE: usize = 512;

/// Output positions `o` in `0..n_out` for which `o * stride + tap - pad` lies in `0..n_in`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, stride: usize, tap: usize, pad: usize) -> (usize, usize) {
    // o * stride >= pad - tap
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    // o * stride + tap - pad <= n_in - 1
    let limit = n_in + pad - 1;
    let hi = if tap > limit { 0 } else { ((limit - tap) / stride + 1).min(n_out) };
    (lo.min(hi), hi)
}

impl Conv3d {
    pub fn output_shape(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        conv_out_shape(input, self.kernel, self.stride, self.padding)
    }

    /// Applies the convolution, optionally followed by ReLU.
    ///
    /// Panics if the input channel count is wrong or the output would be empty;
    /// callers validate shapes up front.
    pub fn forward(&self, x: &Activations, relu: bool) -> Activations {
        assert_eq!(x.channels, self.in_channels, "input channel mismatch");
        let out_shape = self.output_shape(x.shape).expect("input too small for convolution");
        let plane: usize = out_shape.iter().product();
        let mut out = vec![0f32; self.out_channels * plane];
        let pointwise = self.kernel == 1 && self.stride == 1 && self.padding == 0;

        out.par_chunks_mut(plane * CO_BLOCK).enumerate().for_each(|(blk, chunk)| {
            let co0 = blk * CO_BLOCK;
            if pointwise {
                self.pointwise_block(x, co0, chunk, plane);
            } else {
                self.spatial_block(x, out_shape, co0, chunk, plane);
            }
            if relu {
                chunk.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        });
        Activations::new(self.out_channels, out_shape, out)
    }

    fn pointwise_block(&self, x: &Activations, co0: usize, chunk: &mut [f32], plane: usize) {
        let nb = chunk.len() / plane;
        let ci_n = self.in_channels;
        let mut start = 0;
        while start < plane {
            let len = TILE.min(plane - start);
            let mut acc = [[0f32; TILE]; CO_BLOCK];
            for (b, a) in acc.iter_mut().enumerate().take(nb) {
                a[..len].fill(self.bias[co0 + b]);
            }
            for ci in 0..ci_n {
                let src = &x.channel(ci)[start..start + len];
                for (b, a) in acc.iter_mut().enumerate().take(nb) {
                    let w = self.weight[(co0 + b) * ci_n + ci];
                    for (o, &v) in a[..len].iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
            for (b, a) in acc.iter().enumerate().take(nb) {
                chunk[b * plane + start..b * plane + start + len].copy_from_slice(&a[..len]);
            }
            start += len;
        }
    }

    fn spatial_block(&self, x: &Activations, out_shape: [usize; 3], co0: usize, chunk: &mut [f32], plane: usize) {
        let nb = chunk.len() / plane;
        let [od, oh, ow] = out_shape;
        let [id, ih, iw] = x.shape;
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let k3 = k * k * k;
        let ci_n = self.in_channels;
        let x_ranges: Vec<(usize, usize)> = (0..k).map(|kx| valid_range(ow, iw, s, kx, p)).collect();
        let mut acc = vec![0f32; CO_BLOCK * ow];

        for oz in 0..od {
            for oy in 0..oh {
                for b in 0..nb {
                    acc[b * ow..(b + 1) * ow].fill(self.bias[co0 + b]);
                }
                for ci in 0..ci_n {
                    let input = x.channel(ci);
                    for kz in 0..k {
                        let iz = (oz * s + kz) as isize - p as isize;
                        if iz < 0 || iz >= id as isize {
                            continue;
                        }
                        for ky in 0..k {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let row = &input[(iz as usize * ih + iy as usize) * iw..][..iw];
                            for (kx, &(lo, hi)) in x_ranges.iter().enumerate() {
                                if lo >= hi {
                                    continue;
                                }
                                let tap = (kz * k + ky) * k + kx;
                                // first input column used by output column `lo`
                                let first = lo * s + kx - p;
                                for b in 0..nb {
                                    let w = self.weight[((co0 + b) * ci_n + ci) * k3 + tap];
                                    let a = &mut acc[b * ow + lo..b * ow + hi];
                                    if s == 1 {
                                        for (o, &v) in a.iter_mut().zip(&row[first..first + (hi - lo)]) {
                                            *o += w * v;
                                        }
                                    } else {
                                        for (o, &v) in a.iter_mut().zip(row[first..].iter().step_by(s)) {
                                            *o += w * v;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                for b in 0..nb {
                    let dst = b * plane + (oz * oh + oy) * ow;
                    chunk[dst..dst + ow].copy_from_slice(&acc[b * ow..(b + 1) * ow]);
                }
            }
        }
    }
}

/// Max pooling with out-of-bounds positions ignored.
pub fn max_pool(x: &Activations, kernel: usize, stride: usize, padding: usize) -> Activations {
    let out_shape = conv_out_shape(x.shape, kernel, stride, padding).expect("input too small for pooling");
    let [od, oh, ow] = out_shape;
    let [id, ih, iw] = x.shape;
    let plane = od * oh * ow;
    let mut out = vec![0f32; x.channels * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(c, dst)| {
        let src = x.channel(c);
        for oz in 0..od {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for kz in 0..kernel {
                        let iz = (oz * stride + kz) as isize - padding as isize;
                        if iz < 0 || iz >= id as isize {
                            continue;
                        }
                        for ky in 0..kernel {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            for kx in 0..kernel {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= iw as isize {
                                    continue;
                                }
                                m = m.max(src[(iz as usize * ih + iy as usize) * iw + ix as usize]);
                            }
                        }
                    }
                    dst[(oz * oh + oy) * ow + ox] = m;
                }
            }
        }
    });
    Activations::new(x.channels, out_shape, out)
}

/// Spatial mean per channel, accumulated in f64.
pub fn global_average_pool(x: &Activations) -> Vec<f32> {
    let n = x.plane() as f64;
    (0..x.channels)
        .map(|c| (x.channel(c).iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
        .collect()
}

/// `relu(a + b)` in place on `a`.
pub fn add_relu(a: &mut Activations, b: &Activations) {
    assert_eq!(a.data.len(), b.data.len());
    a.data.par_iter_mut().zip(b.data.par_iter()).for_each(|(x, &y)| *x = (*x + y).max(0.0));
}
