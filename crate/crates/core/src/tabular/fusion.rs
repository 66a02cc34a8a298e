//! Feature blocks and their fusion into named feature vectors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::clinical::{ClinicalRecord, Label, NIHSS_ITEMS, RISK_FLAGS};
use super::TabularError;
use crate::inference::mri_feature_names;
use crate::lesion::LesionStats;

/// Feature blocks; the derived order is the fused block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    Clinical,
    MriJ0,
    MriJ1,
    LesionJ0,
    LesionJ1,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 5] =
        [FeatureBlock::Clinical, FeatureBlock::MriJ0, FeatureBlock::MriJ1, FeatureBlock::LesionJ0, FeatureBlock::LesionJ1];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureBlock::Clinical => "clinical",
            FeatureBlock::MriJ0 => "mri_j0",
            FeatureBlock::MriJ1 => "mri_j1",
            FeatureBlock::LesionJ0 => "lesion_j0",
            FeatureBlock::LesionJ1 => "lesion_j1",
        }
    }
}

impl FromStr for FeatureBlock {
    type Err = TabularError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureBlock::ALL
            .into_iter()
            .find(|b| b.as_str() == s.trim())
            .ok_or_else(|| TabularError::UnknownBlock(s.to_owned()))
    }
}

/// A non-empty set of feature blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSet(BTreeSet<FeatureBlock>);

impl BlockSet {
    pub fn new(blocks: impl IntoIterator<Item = FeatureBlock>) -> Result<Self, TabularError> {
        let mut set = BTreeSet::new();
        for b in blocks {
            if !set.insert(b) {
                return Err(TabularError::DuplicateBlock(b.as_str().into()));
            }
        }
        if set.is_empty() {
            return Err(TabularError::EmptyFusion);
        }
        Ok(Self(set))
    }

    pub fn contains(&self, b: FeatureBlock) -> bool {
        self.0.contains(&b)
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureBlock> + '_ {
        self.0.iter().copied()
    }

    /// Day-1 NIHSS subscores join the clinical block when any J1 block is present.
    pub fn includes_day1(&self) -> bool {
        self.contains(FeatureBlock::MriJ1) || self.contains(FeatureBlock::LesionJ1)
    }
}

impl FromStr for BlockSet {
    type Err = TabularError;

    /// Comma- or plus-separated block names, e.g. `mri_j1,clinical,lesion_j1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let blocks = s
            .split([',', '+'])
            .filter(|t| !t.trim().is_empty())
            .map(FeatureBlock::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        BlockSet::new(blocks)
    }
}

impl fmt::Display for BlockSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureBlock::as_str).collect();
        f.write_str(&names.join(","))
    }
}

pub fn clinical_feature_names(include_day1: bool) -> Vec<String> {
    let mut v = vec!["age".to_string(), "sex_male".to_string()];
    v.extend(RISK_FLAGS.iter().map(|s| s.to_string()));
    v.push("pre_mrs".into());
    let days: &[&str] = if include_day1 { &["J0", "J1"] } else { &["J0"] };
    for day in days {
        v.extend(NIHSS_ITEMS.iter().map(|(code, name, _)| format!("{day}_nihss_{code}_{name}")));
    }
    v
}

/// Clinical block values; the record must be complete (imputed).
pub fn clinical_features(r: &ClinicalRecord, include_day1: bool) -> Result<Vec<f64>, TabularError> {
    let fields = r.numeric_fields();
    let take = if include_day1 { fields.len() } else { fields.len() - NIHSS_ITEMS.len() };
    fields[..take]
        .iter()
        .map(|v| v.ok_or_else(|| TabularError::Incomplete(r.patient_id.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient_id: String,
    pub label: Option<Label>,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub blocks: BlockSet,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Inputs to [`fuse`]; a block takes part when its field is `Some`.
#[derive(Debug, Clone, Default)]
pub struct FusionInput<'a> {
    pub clinical: Option<(&'a [String], &'a [f64])>,
    pub mri_j0: Option<&'a [f64]>,
    pub mri_j1: Option<&'a [f64]>,
    pub lesion_j0: Option<&'a LesionStats>,
    pub lesion_j1: Option<&'a LesionStats>,
}

/// Concatenates blocks in the fixed order clinical, MRI (J0, J1), lesion (J0, J1).
///
/// MRI features are named `MRI_feat_i`; when both time points are present
/// they are prefixed `J0_`/`J1_` to stay unique.
pub fn fuse(patient_id: &str, label: Option<Label>, input: &FusionInput) -> Result<FeatureVector, TabularError> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut blocks = Vec::new();
    if let Some((n, v)) = input.clinical {
        if n.len() != v.len() {
            return Err(TabularError::LengthMismatch { names: n.len(), values: v.len() });
        }
        names.extend_from_slice(n);
        values.extend_from_slice(v);
        blocks.push(FeatureBlock::Clinical);
    }
    let both_mri = input.mri_j0.is_some() && input.mri_j1.is_some();
    for (block, tag, mri) in [(FeatureBlock::MriJ0, "J0_", input.mri_j0), (FeatureBlock::MriJ1, "J1_", input.mri_j1)] {
        if let Some(m) = mri {
            let prefix = if both_mri { tag } else { "" };
            names.extend(mri_feature_names(m.len()).into_iter().map(|n| format!("{prefix}{n}")));
            values.extend_from_slice(m);
            blocks.push(block);
        }
    }
    for (block, name, lesion) in [
        (FeatureBlock::LesionJ0, "lesion_logvol_J0", input.lesion_j0),
        (FeatureBlock::LesionJ1, "lesion_logvol_J1", input.lesion_j1),
    ] {
        if let Some(s) = lesion {
            names.push(name.into());
            values.push(s.log_volume);
            blocks.push(block);
        }
    }
    let blocks = BlockSet::new(blocks)?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(TabularError::DuplicateName(dup.clone()));
    }
    Ok(FeatureVector { patient_id: patient_id.to_owned(), label, names, values, blocks })
}
