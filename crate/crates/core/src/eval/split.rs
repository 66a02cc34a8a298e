//! Deterministic greedy StratifiedGroupKFold.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::hash::{hex64, Fnv1a};

pub const DEFAULT_FOLDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Held-out group ids per fold, sorted.
    pub folds: Vec<Vec<String>>,
    /// Fold index of every sample, in input order.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    /// FNV-1a over the held-out group lists; equal hashes mean identical pairing.
    pub fn hash(&self) -> String {
        let mut h = Fnv1a::default();
        h.update(format!("k={}\n", self.k).as_bytes());
        for (i, fold) in self.folds.iter().enumerate() {
            h.update(format!("fold{i}:").as_bytes());
            for g in fold {
                h.update(g.as_bytes());
                h.update(&[0x1f]);
            }
            h.update(b"\n");
        }
        hex64(h.finish())
    }
}

struct GroupInfo {
    id: String,
    members: Vec<usize>,
    positives: usize,
    key: u64,
}

/// Groups sorted by (positives desc, size desc, seeded key) are placed one by
/// one into the fold minimizing (positive-count spread across folds after
/// placement, fold size, fold index).
pub fn stratified_group_kfold<S: AsRef<str>>(labels: &[bool], groups: &[S], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if labels.len() != groups.len() {
        return Err(EvalError::LengthMismatch { left: labels.len(), right: groups.len() });
    }
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    let n_pos = labels.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(EvalError::OneClass);
    }
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_id.entry(g.as_ref()).or_default().push(i);
    }
    if by_id.len() < k {
        return Err(EvalError::TooFewGroups { groups: by_id.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut infos: Vec<GroupInfo> = by_id
        .into_iter()
        .map(|(id, members)| GroupInfo {
            id: id.to_string(),
            positives: members.iter().filter(|&&i| labels[i]).count(),
            members,
            key: rng.next_u64(),
        })
        .collect();
    infos.sort_by(|a, b| {
        b.positives
            .cmp(&a.positives)
            .then(b.members.len().cmp(&a.members.len()))
            .then(a.key.cmp(&b.key))
            .then(a.id.cmp(&b.id))
    });

    let mut pos = vec![0usize; k];
    let mut size = vec![0usize; k];
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut assignment = vec![0usize; labels.len()];
    for g in &infos {
        let best = (0..k)
            .min_by_key(|&f| {
                let spread = (0..k)
                    .map(|j| pos[j] + if j == f { g.positives } else { 0 })
                    .fold((usize::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (spread.1 - spread.0, size[f], f)
            })
            .expect("k >= 2");
        pos[best] += g.positives;
        size[best] += g.members.len();
        folds[best].push(g.id.clone());
        for &i in &g.members {
            assignment[i] = best;
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan { k, seed, folds, assignment })
}
