//! Median imputation fitted on training records only.

use std::collections::HashSet;

use super::clinical::{numeric_field_names, ClinicalRecord, NUMERIC_FIELDS};
use super::TabularError;

/// Lower median: element `(n - 1) / 2` of the sorted sample.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

/// Per-field medians over a training subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    pub medians: Vec<f64>,
}

impl Imputer {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a ClinicalRecord>) -> Result<Self, TabularError> {
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); NUMERIC_FIELDS];
        let mut n = 0;
        for r in train {
            n += 1;
            for (col, v) in columns.iter_mut().zip(r.numeric_fields()) {
                col.extend(v);
            }
        }
        if n == 0 {
            return Err(TabularError::EmptyTrainSet);
        }
        let names = numeric_field_names();
        let medians = columns
            .iter_mut()
            .zip(names)
            .map(|(col, name)| lower_median(col).ok_or(TabularError::AllMissing(name)))
            .collect::<Result<_, _>>()?;
        Ok(Self { medians })
    }

    pub fn apply(&self, record: &ClinicalRecord) -> ClinicalRecord {
        let mut out = record.clone();
        for (i, v) in record.numeric_fields().iter().enumerate() {
            if v.is_none() {
                out.fill_numeric(i, self.medians[i]);
            }
        }
        out
    }
}

/// Fills every missing numeric field with the median over the records whose
/// `patient_id` is in `train_ids`. Outcome labels are left untouched.
pub fn impute_median(records: &[ClinicalRecord], train_ids: &[&str]) -> Result<Vec<ClinicalRecord>, TabularError> {
    let ids: HashSet<&str> = train_ids.iter().copied().collect();
    let imputer = Imputer::fit(records.iter().filter(|r| ids.contains(r.patient_id.as_str())))?;
    Ok(records.iter().map(|r| imputer.apply(r)).collect())
}
