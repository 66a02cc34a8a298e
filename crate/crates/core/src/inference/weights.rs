//! Seeded random weight containers following the canonical name table.
//!
//! Real checkpoints are converted by the external export tool; these are for
//! tests, benchmarks and desk-scale runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::NetworkSpec;
use crate::volume::TensorRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomWeightOptions {
    /// Zero beta and running mean, so every folded bias is zero.
    pub zero_shift: bool,
    /// Multiplier on the He-normal standard deviation.
    pub gain: f64,
}

impl Default for RandomWeightOptions {
    fn default() -> Self {
        Self { zero_shift: false, gain: 1.0 }
    }
}

pub fn random_weights(spec: &NetworkSpec, seed: u64, opts: RandomWeightOptions) -> Vec<TensorRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for g in spec.convolutions() {
        let fan_in = g.in_channels * g.kernel.pow(3);
        let std = opts.gain * (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let shape = g.weight_shape();
        let n: usize = shape.iter().product();
        let w: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
        out.push(TensorRecord::f32(format!("{}.conv.weight", g.prefix), shape, w));

        let c = g.out_channels;
        let gamma: Vec<f32> = (0..c).map(|_| rng.random_range(0.5f32..1.5)).collect();
        let (beta, mean): (Vec<f32>, Vec<f32>) = if opts.zero_shift {
            (vec![0.0; c], vec![0.0; c])
        } else {
            (0..c).map(|_| (rng.random_range(-0.1f32..0.1), rng.random_range(-0.1f32..0.1))).unzip()
        };
        let var: Vec<f32> = (0..c).map(|_| rng.random_range(0.5f32..1.5)).collect();
        for (p, v) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
            out.push(TensorRecord::f32(format!("{}.bn.{p}", g.prefix), vec![c], v));
        }
    }
    out
}
