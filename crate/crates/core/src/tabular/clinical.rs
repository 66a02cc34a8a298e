//! Clinical records and their CSV form.
//!
//! Header (order free, `group_id` optional):
//!
//! ```text
//! patient_id,group_id,age,sex,hypertension,diabetes,atrial_fibrillation,smoking,pre_mrs,
//! nihss_j0_1a,...,nihss_j0_11,nihss_j1_1a,...,nihss_j1_11,mrs_90
//! ```
//!
//! `sex` is `M`/`F`, risk flags are `0`/`1`, scores are integers. Empty cells
//! are missing values.

use serde::{Deserialize, Serialize};

use super::TabularError;

/// NIHSS items in form order with their maximum legal score.
pub const NIHSS_ITEMS: [(&str, &str, u8); 15] = [
    ("1a", "level_of_consciousness", 3),
    ("1b", "loc_questions", 2),
    ("1c", "loc_commands", 2),
    ("2", "best_gaze", 2),
    ("3", "visual_fields", 3),
    ("4", "facial_palsy", 3),
    ("5a", "right_arm_motor_drift", 4),
    ("5b", "left_arm_motor_drift", 4),
    ("6a", "right_leg_motor_drift", 4),
    ("6b", "left_leg_motor_drift", 4),
    ("7", "limb_ataxia", 2),
    ("8", "sensory", 2),
    ("9", "language", 3),
    ("10", "dysarthria", 2),
    ("11", "extinction_inattention", 2),
];

pub const NIHSS_LEN: usize = NIHSS_ITEMS.len();
pub const RISK_FLAGS: [&str; 4] = ["hypertension", "diabetes", "atrial_fibrillation", "smoking"];
pub const MAX_AGE: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

/// Dichotomized three-month outcome. The positive class is `Unfavorable`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Favorable,
    Unfavorable,
}

impl Label {
    /// Favorable iff mRS <= 1.
    pub fn from_mrs(mrs: u8) -> Self {
        if mrs <= 1 {
            Label::Favorable
        } else {
            Label::Unfavorable
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Unfavorable
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Unfavorable
        } else {
            Label::Favorable
        }
    }

    /// +1 for the positive class, -1 otherwise.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub patient_id: String,
    pub group_id: String,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    /// hypertension, diabetes, atrial fibrillation, smoking
    pub risk_flags: [Option<bool>; 4],
    pub pre_mrs: Option<u8>,
    pub nihss_j0: [Option<u8>; NIHSS_LEN],
    pub nihss_j1: [Option<u8>; NIHSS_LEN],
    pub mrs_90: Option<u8>,
}

/// Number of numeric (imputable) fields: age, sex, 4 flags, pre-mRS, 2 x 15 NIHSS.
pub const NUMERIC_FIELDS: usize = 7 + 2 * NIHSS_LEN;

pub fn numeric_field_names() -> Vec<String> {
    let mut v: Vec<String> = vec!["age".into(), "sex".into()];
    v.extend(RISK_FLAGS.iter().map(|s| s.to_string()));
    v.push("pre_mrs".into());
    for day in ["j0", "j1"] {
        v.extend(NIHSS_ITEMS.iter().map(|(code, _, _)| format!("nihss_{day}_{code}")));
    }
    v
}

impl ClinicalRecord {
    pub fn label(&self) -> Option<Label> {
        self.mrs_90.map(Label::from_mrs)
    }

    /// Numeric view in [`numeric_field_names`] order (sex: M = 1, F = 0).
    pub fn numeric_fields(&self) -> [Option<f64>; NUMERIC_FIELDS] {
        let mut v = [None; NUMERIC_FIELDS];
        v[0] = self.age;
        v[1] = self.sex.map(|s| if s == Sex::M { 1.0 } else { 0.0 });
        for (i, f) in self.risk_flags.iter().enumerate() {
            v[2 + i] = f.map(|b| b as u8 as f64);
        }
        v[6] = self.pre_mrs.map(f64::from);
        for i in 0..NIHSS_LEN {
            v[7 + i] = self.nihss_j0[i].map(f64::from);
            v[7 + NIHSS_LEN + i] = self.nihss_j1[i].map(f64::from);
        }
        v
    }

    /// Fills a missing field from a numeric value (integer fields are rounded).
    pub fn fill_numeric(&mut self, field: usize, value: f64) {
        let small = value.round().clamp(0.0, 255.0) as u8;
        match field {
            0 => self.age = self.age.or(Some(value)),
            1 => self.sex = self.sex.or(Some(if value >= 0.5 { Sex::M } else { Sex::F })),
            2..=5 => {
                let f = &mut self.risk_flags[field - 2];
                *f = f.or(Some(value >= 0.5));
            }
            6 => self.pre_mrs = self.pre_mrs.or(Some(small)),
            f if f < 7 + NIHSS_LEN => {
                let s = &mut self.nihss_j0[f - 7];
                *s = s.or(Some(small));
            }
            f if f < NUMERIC_FIELDS => {
                let s = &mut self.nihss_j1[f - 7 - NIHSS_LEN];
                *s = s.or(Some(small));
            }
            _ => panic!("field index {field} out of range"),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.numeric_fields().iter().all(Option::is_some)
    }
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["patient_id".to_string(), "group_id".to_string()];
    h.extend(numeric_field_names());
    h.push("mrs_90".into());
    h
}

fn parse_opt<T: std::str::FromStr>(cell: &str, field: &str, row: usize) -> Result<Option<T>, TabularError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<T>().map(Some).map_err(|_| TabularError::InvalidValue {
        field: field.to_owned(),
        row,
        value: cell.to_owned(),
    })
}

fn bounded(v: Option<u8>, max: u8, field: &str, row: usize) -> Result<Option<u8>, TabularError> {
    match v {
        Some(x) if x > max => Err(TabularError::OutOfRange { field: field.to_owned(), row }),
        other => Ok(other),
    }
}

/// Parses clinical CSV bytes. Rows are numbered from 1 (first data row).
pub fn parse_clinical_csv(bytes: &[u8]) -> Result<Vec<ClinicalRecord>, TabularError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| TabularError::BadHeader(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();

    let expected = csv_header();
    let mut col = std::collections::HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if !expected.contains(h) {
            return Err(TabularError::BadHeader(format!("unknown column {h:?}")));
        }
        if col.insert(h.clone(), i).is_some() {
            return Err(TabularError::BadHeader(format!("duplicate column {h:?}")));
        }
    }
    if let Some(missing) = expected.iter().find(|h| *h != "group_id" && !col.contains_key(*h)) {
        return Err(TabularError::BadHeader(format!("missing column {missing:?}")));
    }

    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| TabularError::Csv(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(TabularError::RowArity { row, expected: header.len(), got: rec.len() });
        }
        let cell = |name: &str| col.get(name).map(|&i| &rec[i]).unwrap_or("");

        let patient_id = cell("patient_id").to_owned();
        if patient_id.is_empty() {
            return Err(TabularError::InvalidValue { field: "patient_id".into(), row, value: String::new() });
        }
        let group_id = match cell("group_id") {
            "" => patient_id.clone(),
            g => g.to_owned(),
        };
        let age: Option<f64> = parse_opt(cell("age"), "age", row)?;
        if age.is_some_and(|a| !(0.0..=MAX_AGE).contains(&a)) {
            return Err(TabularError::OutOfRange { field: "age".into(), row });
        }
        let sex = match cell("sex") {
            "" => None,
            "M" | "m" => Some(Sex::M),
            "F" | "f" => Some(Sex::F),
            other => return Err(TabularError::InvalidValue { field: "sex".into(), row, value: other.into() }),
        };
        let mut risk_flags = [None; 4];
        for (i, name) in RISK_FLAGS.iter().enumerate() {
            risk_flags[i] = bounded(parse_opt::<u8>(cell(name), name, row)?, 1, name, row)?.map(|v| v == 1);
        }
        let pre_mrs = bounded(parse_opt(cell("pre_mrs"), "pre_mrs", row)?, 5, "pre_mrs", row)?;
        let mut nihss = [[None; NIHSS_LEN]; 2];
        for (d, day) in ["j0", "j1"].iter().enumerate() {
            for (i, (code, _, max)) in NIHSS_ITEMS.iter().enumerate() {
                let name = format!("nihss_{day}_{code}");
                nihss[d][i] = bounded(parse_opt(cell(&name), &name, row)?, *max, &name, row)?;
            }
        }
        let mrs_90 = bounded(parse_opt(cell("mrs_90"), "mrs_90", row)?, 6, "mrs_90", row)?;
        out.push(ClinicalRecord {
            patient_id,
            group_id,
            age,
            sex,
            risk_flags,
            pre_mrs,
            nihss_j0: nihss[0],
            nihss_j1: nihss[1],
            mrs_90,
        });
    }
    Ok(out)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_clinical_csv(records: &[ClinicalRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).expect("in-memory write");
    for r in records {
        let mut row = vec![r.patient_id.clone(), r.group_id.clone(), fmt_opt(r.age)];
        row.push(match r.sex {
            Some(Sex::M) => "M".into(),
            Some(Sex::F) => "F".into(),
            None => String::new(),
        });
        row.extend(r.risk_flags.iter().map(|f| fmt_opt(f.map(|b| b as u8))));
        row.push(fmt_opt(r.pre_mrs));
        row.extend(r.nihss_j0.iter().map(|v| fmt_opt(*v)));
        row.extend(r.nihss_j1.iter().map(|v| fmt_opt(*v)));
        row.push(fmt_opt(r.mrs_90));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, age: Option<f64>, mrs: Option<u8>) -> ClinicalRecord {
        ClinicalRecord {
            patient_id: id.into(),
            group_id: id.into(),
            age,
            sex: Some(Sex::F),
            risk_flags: [Some(false); 4],
            pre_mrs: Some(0),
            nihss_j0: [Some(1); NIHSS_LEN],
            nihss_j1: [Some(0); NIHSS_LEN],
            mrs_90: mrs,
        }
    }

    #[test]
    fn label_rule() {
        for m in 0..=6u8 {
            assert_eq!(Label::from_mrs(m) == Label::Favorable, m <= 1);
        }
        assert_eq!(Label::from_mrs(1), Label::Favorable);
        assert_eq!(Label::from_mrs(2), Label::Unfavorable);
    }

    #[test]
    fn csv_round_trip_and_missing_cells() {
        let mut a = record("p1", Some(71.0), Some(1));
        a.nihss_j1[6] = None;
        a.sex = None;
        let b = record("p2", None, Some(4));
        let text = write_clinical_csv(&[a.clone(), b.clone()]);
        let back = parse_clinical_csv(text.as_bytes()).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(back[0].label(), Some(Label::Favorable));
        assert_eq!(back[1].label(), Some(Label::Unfavorable));
    }

    #[test]
    fn range_and_shape_errors() {
        let mut bad = record("p1", Some(60.0), Some(0));
        bad.pre_mrs = Some(6);
        let text = write_clinical_csv(&[bad]);
        assert_eq!(
            parse_clinical_csv(text.as_bytes()),
            Err(TabularError::OutOfRange { field: "pre_mrs".into(), row: 1 })
        );

        let text = write_clinical_csv(&[record("p1", Some(60.0), Some(0))]);
        let truncated = text.trim_end().rsplit_once(',').unwrap().0.to_string() + "\n";
        assert!(matches!(parse_clinical_csv(truncated.as_bytes()), Err(TabularError::RowArity { row: 1, .. })));

        let renamed = text.replacen("age", "years", 1);
        assert!(matches!(parse_clinical_csv(renamed.as_bytes()), Err(TabularError::BadHeader(_))));

        let mut motor = record("p1", Some(60.0), Some(0));
        motor.nihss_j0[6] = Some(5);
        let text = write_clinical_csv(&[motor]);
        assert_eq!(
            parse_clinical_csv(text.as_bytes()),
            Err(TabularError::OutOfRange { field: "nihss_j0_5a".into(), row: 1 })
        );
    }

    #[test]
    fn group_id_column_is_optional() {
        let text = write_clinical_csv(&[record("p9", Some(50.0), Some(3))]);
        let mut lines = text.lines();
        let drop_second = |l: &str| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(1);
            cols.join(",")
        };
        let stripped = format!("{}\n{}\n", drop_second(lines.next().unwrap()), drop_second(lines.next().unwrap()));
        let recs = parse_clinical_csv(stripped.as_bytes()).unwrap();
        assert_eq!(recs[0].group_id, "p9");
    }
}
