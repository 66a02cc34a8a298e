//! Wilcoxon signed-rank test; exact null distribution for up to 20 nonzero
//! differences, normal approximation with tie correction beyond.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::midranks;
use super::EvalError;

pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// median(a - b) > 0
    Greater,
    Less,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greater" => Ok(Self::Greater),
            "less" => Ok(Self::Less),
            "two-sided" | "two_sided" => Ok(Self::TwoSided),
            other => Err(format!("unknown alternative {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w: f64,
    pub p: f64,
    pub alternative: Alternative,
    pub method: PMethod,
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let ranks = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let n = d.len();
    let (upper, lower, method) = if n <= EXACT_MAX_N {
        let (u, l) = exact_tails(&ranks, w);
        (u, l, PMethod::Exact)
    } else {
        let (u, l) = normal_tails(&ranks, w);
        (u, l, PMethod::Normal)
    };
    let p = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    Ok(WilcoxonResult { n, w, p, alternative, method })
}

/// `(P(W >= w), P(W <= w))` under random signs. Midranks are half-integers,
/// so the distribution is tabulated over doubled ranks.
fn exact_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w2 = (2.0 * w).round() as usize;
    let denom = (1u64 << ranks.len()) as f64;
    let upper: u64 = counts[w2..].iter().sum();
    let lower: u64 = counts[..=w2].iter().sum();
    (upper as f64 / denom, lower as f64 / denom)
}

fn normal_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let var = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
    let z = (w - mean) / var.sqrt();
    let normal = Normal::standard();
    (normal.sf(z), normal.cdf(z))
}
