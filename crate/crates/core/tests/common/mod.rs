//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code under test except for plain data types.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

use adcprog_core::eval::experiment::{fold_plan, prepare, PreparedCohort};
use adcprog_core::eval::{run_fold, CohortEntry, ExperimentConfig, FoldFit};
use adcprog_core::inference::spec::{PoolSpec, StageSpec, StemSpec};
use adcprog_core::inference::NetworkSpec;
use adcprog_core::preprocess::resample_trilinear;
use adcprog_core::synth::{phantom_volume, Ellipsoid};
use nalgebra::DMatrix;
use adcprog_core::lesion::Mask3D;
use adcprog_core::volume::{container::find, TensorRecord};
use adcprog_core::Volume3D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(rng: &mut ChaCha8Rng, shape: [usize; 3], lo: f32, hi: f32) -> Volume3D {
    let n = shape.iter().product();
    Volume3D::new(shape, [1.0, 1.0, 1.0], (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

// ---------------------------------------------------------------- lesions

/// Breadth-first flood fill; labels numbered by the raster position of each
/// component's first voxel.
pub fn flood_fill(mask: &Mask3D, six: bool) -> Vec<u32> {
    let [d, h, w] = mask.shape();
    let data = mask.data();
    let mut labels = vec![0u32; data.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (z, y, x) = ((i / (h * w)) as isize, ((i / w) % h) as isize, (i % w) as isize);
            for dz in -1isize..=1 {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let m = dz.abs() + dy.abs() + dx.abs();
                        if m == 0 || (six && m != 1) {
                            continue;
                        }
                        let (nz, ny, nx) = (z + dz, y + dy, x + dx);
                        if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let j = (nz as usize * h + ny as usize) * w + nx as usize;
                        if data[j] && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    labels
}

// ------------------------------------------------------------ convolution

/// Direct seven-loop convolution in f64. `input` is (cin, d, h, w).
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    input: &[f64],
    cin: usize,
    shape: [usize; 3],
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 3]) {
    let o = shape.map(|n| (n + 2 * pad - k) / stride + 1);
    let [d, h, w] = shape;
    let mut out = vec![0.0; cout * o[0] * o[1] * o[2]];
    for co in 0..cout {
        for oz in 0..o[0] {
            for oy in 0..o[1] {
                for ox in 0..o[2] {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for kz in 0..k {
                            let z = (oz * stride + kz) as isize - pad as isize;
                            if z < 0 || z >= d as isize {
                                continue;
                            }
                            for ky in 0..k {
                                let y = (oy * stride + ky) as isize - pad as isize;
                                if y < 0 || y >= h as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let x = (ox * stride + kx) as isize - pad as isize;
                                    if x < 0 || x >= w as isize {
                                        continue;
                                    }
                                    let wi = (((co * cin + ci) * k + kz) * k + ky) * k + kx;
                                    let xi = ((ci * d + z as usize) * h + y as usize) * w + x as usize;
                                    acc += weight[wi] * input[xi];
                                }
                            }
                        }
                    }
                    out[((co * o[0] + oz) * o[1] + oy) * o[2] + ox] = acc;
                }
            }
        }
    }
    (out, o)
}

fn naive_max_pool(input: &[f64], c: usize, shape: [usize; 3], k: usize, stride: usize, pad: usize) -> (Vec<f64>, [usize; 3]) {
    let o = shape.map(|n| (n + 2 * pad - k) / stride + 1);
    let [d, h, w] = shape;
    let mut out = vec![f64::NEG_INFINITY; c * o[0] * o[1] * o[2]];
    for ch in 0..c {
        for oz in 0..o[0] {
            for oy in 0..o[1] {
                for ox in 0..o[2] {
                    let cell = &mut out[((ch * o[0] + oz) * o[1] + oy) * o[2] + ox];
                    for kz in 0..k {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (z, y, x) = (
                                    (oz * stride + kz) as isize - pad as isize,
                                    (oy * stride + ky) as isize - pad as isize,
                                    (ox * stride + kx) as isize - pad as isize,
                                );
                                if z < 0 || y < 0 || x < 0 || z >= d as isize || y >= h as isize || x >= w as isize {
                                    continue;
                                }
                                *cell = cell.max(input[((ch * d + z as usize) * h + y as usize) * w + x as usize]);
                            }
                        }
                    }
                }
            }
        }
    }
    (out, o)
}

fn f64s(records: &[TensorRecord], name: &str) -> Vec<f64> {
    find(records, name).unwrap().as_f32().unwrap().iter().map(|&v| v as f64).collect()
}

/// Convolution followed by explicit (unfolded) batch norm.
fn conv_bn(records: &[TensorRecord], prefix: &str, g: (usize, usize, usize, usize, usize), x: &[f64], shape: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
    let (cout, cin, k, s, p) = g;
    let w = f64s(records, &format!("{prefix}.conv.weight"));
    let (mut y, o) = naive_conv(x, cin, shape, &w, &vec![0.0; cout], cout, k, s, p);
    let [gamma, beta, mean, var] = ["gamma", "beta", "mean", "var"].map(|n| f64s(records, &format!("{prefix}.bn.{n}")));
    let plane = o[0] * o[1] * o[2];
    for c in 0..cout {
        for v in &mut y[c * plane..(c + 1) * plane] {
            *v = gamma[c] * (*v - mean[c]) / (var[c] + 1e-5).sqrt() + beta[c];
        }
    }
    (y, o)
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Forward pass of a bottleneck network straight from its weight records,
/// with batch norm applied after each convolution rather than folded.
pub fn reference_embed(records: &[TensorRecord], spec: &NetworkSpec, vol: &Volume3D) -> Vec<f64> {
    let geom = |g: &adcprog_core::inference::spec::ConvGeometry| (g.out_channels, g.in_channels, g.kernel, g.stride, g.padding);
    let stem = spec.stem_geometry();
    let x: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let (mut h, mut shape) = conv_bn(records, &stem.prefix, geom(&stem), &x, vol.shape());
    relu(&mut h);
    let mut channels = stem.out_channels;
    if let Some(p) = spec.stem.max_pool {
        (h, shape) = naive_max_pool(&h, channels, shape, p.kernel, p.stride, p.padding);
    }
    for b in spec.blocks() {
        let (mut a, sa) = conv_bn(records, &b.reduce.prefix, geom(&b.reduce), &h, shape);
        relu(&mut a);
        let (mut a, sa) = conv_bn(records, &b.spatial.prefix, geom(&b.spatial), &a, sa);
        relu(&mut a);
        let (mut out, so) = conv_bn(records, &b.expand.prefix, geom(&b.expand), &a, sa);
        let identity = match &b.shortcut {
            Some(sc) => conv_bn(records, &sc.prefix, geom(sc), &h, shape).0,
            None => h.clone(),
        };
        for (o, i) in out.iter_mut().zip(&identity) {
            *o = (*o + i).max(0.0);
        }
        h = out;
        shape = so;
        channels = b.expand.out_channels;
    }
    let plane = shape[0] * shape[1] * shape[2];
    (0..channels).map(|c| h[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64).collect()
}

// -------------------------------------------------------------------- PCA

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in decreasing order and the matching unit eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divisor n - 1) of row-major samples.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|i| (0..d).map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64).collect())
        .collect()
}

// -------------------------------------------------------------------- SVM

fn kernel(rows: &[Vec<f64>], labels: &[bool]) -> Vec<Vec<f64>> {
    let y = |i: usize| if labels[i] { 1.0 } else { -1.0 };
    (0..rows.len())
        .map(|i| (0..rows.len()).map(|j| y(i) * y(j) * (rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0)).collect())
        .collect()
}

/// `sum a - 1/2 a^T Q a` with `Q_ij = y_i y_j (x_i . x_j + 1)`.
pub fn dual_objective(rows: &[Vec<f64>], labels: &[bool], alpha: &[f64]) -> f64 {
    let q = kernel(rows, labels);
    let n = alpha.len();
    let quad: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| alpha[i] * q[i][j] * alpha[j]).sum();
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Maximises the box-constrained SVM dual by enumerating every assignment of
/// each coordinate to {lower bound, upper bound, free}, solving the free
/// block exactly and keeping the best assignment that satisfies KKT.
pub fn brute_force_dual(rows: &[Vec<f64>], labels: &[bool], bounds: &[f64]) -> (f64, Vec<f64>) {
    let n = rows.len();
    let q = kernel(rows, labels);
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut state = vec![0u8; n];
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = (0..n).map(|i| if state[i] == 1 { bounds[i] } else { 0.0 }).collect();
        if !free.is_empty() {
            let m = free.iter().map(|&i| free.iter().map(|&j| q[i][j]).collect()).collect();
            let rhs = free
                .iter()
                .map(|&i| 1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| q[i][j] * bounds[j]).sum::<f64>())
                .collect();
            let Some(sol) = solve_dense(m, rhs) else { continue };
            if free.iter().zip(&sol).any(|(&i, &a)| a < -1e-9 || a > bounds[i] + 1e-9) {
                continue;
            }
            for (&i, &a) in free.iter().zip(&sol) {
                alpha[i] = a.clamp(0.0, bounds[i]);
            }
        }
        let kkt = (0..n).all(|i| {
            let g = (0..n).map(|j| q[i][j] * alpha[j]).sum::<f64>() - 1.0;
            match state[i] {
                0 => g >= -1e-7,
                1 => g <= 1e-7,
                _ => true,
            }
        });
        if kkt {
            let obj = dual_objective(rows, labels, &alpha);
            if obj > best.0 {
                best = (obj, alpha);
            }
        }
    }
    best
}

// ------------------------------------------------------------------ Platt

fn platt_nll(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let p = 1.0 / (1.0 + (a * f + b).exp());
            let p = p.clamp(1e-300, 1.0 - 1e-16);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum()
}

/// Zooming grid search for the Platt parameters.
pub fn platt_grid(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&p| p).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let targets: Vec<f64> = labels.iter().map(|&p| if p { (n_pos + 1.0) / (n_pos + 2.0) } else { 1.0 / (n_neg + 2.0) }).collect();
    let (mut ca, mut cb, mut half) = (0.0, 0.0, 32.0);
    for _ in 0..40 {
        let mut best = (f64::INFINITY, ca, cb);
        for i in -20..=20 {
            for j in -20..=20 {
                let (a, b) = (ca + half * i as f64 / 20.0, cb + half * j as f64 / 20.0);
                let v = platt_nll(scores, &targets, a, b);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        half *= 0.3;
    }
    (ca, cb)
}

// ---------------------------------------------------------------- metrics

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// `(P(W >= w), P(W <= w))` by enumerating all sign assignments of the
/// nonzero differences, using midranks of their absolute values.
pub fn wilcoxon_enumerate(diffs: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|v| {
            let below = abs.iter().filter(|u| *u < v).count() as f64;
            let equal = abs.iter().filter(|u| *u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let w: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for signs in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s >= w - 1e-9 {
            ge += 1;
        }
        if s <= w + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (w, ge as f64 / total, le as f64 / total)
}

// ----------------------------------------------------------------- cohorts

/// Clinical records from the synthetic generator with random stand-ins for
/// the imaging blocks (no volumes or network involved).
pub fn tabular_cohort(seed: u64, n: usize, mri_dim: usize) -> adcprog_core::eval::CohortTable {
    use adcprog_core::eval::{CohortEntry, CohortTable};
    use adcprog_core::lesion::lesion_stats;
    use adcprog_core::synth::{generate, CohortSpec};
    let cohort = generate(&CohortSpec { n, seed, shape: [8, 8, 8], ..CohortSpec::default() }).unwrap();
    let mut rng = rng(seed ^ 0x5eed);
    let lesion = |rng: &mut ChaCha8Rng| {
        let mut m = Mask3D::empty([4, 8, 8]);
        for _ in 0..rng.random_range(0..200) {
            m.set(rng.random_range(0..4), rng.random_range(0..8), rng.random_range(0..8), true);
        }
        lesion_stats(&m, [5.0, 1.0, 1.0], 620.0)
    };
    let entries = cohort
        .records()
        .into_iter()
        .map(|record| CohortEntry {
            mri_j0: Some((0..mri_dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
            mri_j1: Some((0..mri_dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
            lesion_j0: Some(lesion(&mut rng)),
            lesion_j1: Some(lesion(&mut rng)),
            record,
        })
        .collect();
    CohortTable { entries, weight_hash: "0000000000000000".into(), projection_seed: 0 }
}

// ------------------------------------------------------------- fixtures

/// Continuous source coordinate sampled by output voxel `i`.
pub fn source_coord(i: usize, src: usize, tgt: usize) -> f64 {
    ((i as f64 + 0.5) * src as f64 / tgt as f64 - 0.5).clamp(0.0, (src - 1) as f64)
}

pub fn affine_volume(shape: [usize; 3], c: [f64; 4]) -> Volume3D {
    let [d, h, w] = shape;
    let mut data = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                data.push((c[0] + c[1] * z as f64 + c[2] * y as f64 + c[3] * x as f64) as f32);
            }
        }
    }
    Volume3D::new(shape, [4.0, 1.5, 1.5], data).unwrap()
}

/// Largest deviation of a resampled affine field from the field evaluated at
/// the mapped source coordinates.
pub fn affine_error(src: [usize; 3], tgt: [usize; 3], c: [f64; 4]) -> f64 {
    let vol = affine_volume(src, c);
    let out = resample_trilinear(&vol, tgt, "affine").unwrap().volume;
    let mut worst = 0.0f64;
    for z in 0..tgt[0] {
        for y in 0..tgt[1] {
            for x in 0..tgt[2] {
                let (sz, sy, sx) = (source_coord(z, src[0], tgt[0]), source_coord(y, src[1], tgt[1]), source_coord(x, src[2], tgt[2]));
                let expect = c[0] + c[1] * sz + c[2] * sy + c[3] * sx;
                worst = worst.max((out.get(z, y, x) as f64 - expect).abs());
            }
        }
    }
    worst
}

/// Phantom with one or two lesions plus voxel noise.
pub fn lesion_volume(seed: u64) -> Volume3D {
    let mut rng = rng(seed);
    let shape = [16, 40, 40];
    let r = rng.random_range(4.0..9.0);
    let lesion = Ellipsoid { center: [rng.random_range(5.0..11.0), rng.random_range(14.0..26.0), rng.random_range(14.0..26.0)], semi_axes: [r / 2.0, r, r] };
    let (vol, _) = phantom_volume(shape, [4.0, 1.0, 1.0], Some(&lesion), &mut rng);
    let noise = rng.random_range(0.0..250.0);
    let data = vol.data().iter().map(|&v| if v > 0.0 { (v + rng.random_range(-noise..=noise) as f32).max(1.0) } else { 0.0 }).collect();
    Volume3D::new(shape, vol.spacing(), data).unwrap()
}

pub fn lattice_count(center: [f64; 3], semi: [f64; 3], shape: [usize; 3]) -> usize {
    let mut n = 0;
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let q = [z as f64, y as f64, x as f64];
                if (0..3).map(|a| ((q[a] - center[a]) / semi[a]).powi(2)).sum::<f64>() <= 1.0 {
                    n += 1;
                }
            }
        }
    }
    n
}

pub fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let k = [3, 5, 7][rng.random_range(0..3)];
    let stages = (0..rng.random_range(1..=2))
        .map(|_| StageSpec { blocks: rng.random_range(1..=2), base_channels: rng.random_range(2..=5), stride: rng.random_range(1..=2) })
        .collect();
    NetworkSpec {
        in_channels: 1,
        stem: StemSpec {
            channels: rng.random_range(2..=6),
            kernel: k,
            stride: rng.random_range(1..=2),
            padding: k / 2,
            max_pool: rng.random_bool(0.5).then_some(PoolSpec { kernel: 3, stride: 2, padding: 1 }),
        },
        stages,
        expansion: rng.random_range(2..=4),
    }
}

pub fn max_rel_error(got: &[f32], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).abs()).fold(0.0, f64::max) / scale
}

pub fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Random data with a decaying spectrum so eigenvalues are well separated.
pub fn random_matrix(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let scales: Vec<f64> = (0..d).map(|j| 3.0 * 0.7f64.powi(j as i32)).collect();
    DMatrix::from_fn(n, d, |_, j| rng.random_range(-1.0..1.0) * scales[j] + 0.3 * j as f64)
}

pub fn scramble(entry: &CohortEntry, rng: &mut impl Rng) -> CohortEntry {
    let mut e = entry.clone();
    let r = &mut e.record;
    r.age = if rng.random_bool(0.3) { None } else { Some(rng.random_range(20.0..100.0)) };
    r.pre_mrs = Some(rng.random_range(0..=5));
    for item in r.nihss_j0.iter_mut().chain(r.nihss_j1.iter_mut()) {
        *item = if rng.random_bool(0.2) { None } else { Some(rng.random_range(0..=2)) };
    }
    r.mrs_90 = Some(rng.random_range(0..=6));
    for v in e.mri_j0.iter_mut().chain(e.mri_j1.iter_mut()).flatten() {
        *v = rng.random_range(-50.0..50.0);
    }
    for s in [&mut e.lesion_j0, &mut e.lesion_j1].into_iter().flatten() {
        s.n_voxels = rng.random_range(0..100_000);
        s.volume_mm3 = s.n_voxels as f64 * s.voxel_volume_mm3;
        s.log_volume = s.volume_mm3.ln_1p();
    }
    e
}

pub fn fitted_parameters_equal(a: &FoldFit, b: &FoldFit) -> bool {
    a.imputer == b.imputer
        && a.bundle.scaler == b.bundle.scaler
        && a.bundle.pca == b.bundle.pca
        && a.bundle.svm == b.bundle.svm
        && a.bundle.platt == b.bundle.platt
        && a.solution == b.solution
        && a.train == b.train
}

/// Refits every fold with its validation rows (features and labels) replaced
/// by noise; returns the folds whose fitted parameters changed.
pub fn leaking_folds(table: &adcprog_core::eval::CohortTable, config: &ExperimentConfig, seed: u64) -> Vec<usize> {
    let prepared = prepare(table, config).unwrap();
    let plan = fold_plan(&prepared, config).unwrap();
    let mut rng = rng(seed);
    let mut leaks = Vec::new();
    for fold in 0..plan.k {
        let clean = run_fold(&prepared, &plan, fold, config, "h").unwrap();
        let val = plan.validation_indices(fold);
        let mutated: Vec<CohortEntry> = prepared
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| if val.contains(&i) { scramble(e, &mut rng) } else { (*e).clone() })
            .collect();
        let mut labels = prepared.labels.clone();
        for &i in &val {
            labels[i] = rng.random_bool(0.5);
        }
        let dirty = PreparedCohort { entries: mutated.iter().collect(), labels, groups: prepared.groups.clone() };
        let refit = run_fold(&dirty, &plan, fold, config, "h").unwrap();
        if !fitted_parameters_equal(&clean, &refit) {
            leaks.push(fold);
        }
    }
    leaks
}
