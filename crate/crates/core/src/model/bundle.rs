//! Trained pipeline state: scaler, PCA basis, SVM hyperplane and Platt sigmoid.
//!
//! On disk a bundle is an "ADCT" container of f64 tensors plus a sidecar
//! `<path>.meta` of UTF-8 `key=value` lines.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pca::{pca_fit, PcaModel, PcaParams};
use super::platt::{platt_fit, PlattModel};
use super::svm::{svm_fit, SvmModel, SvmParams};
use super::ModelError;
use crate::tabular::{FeatureVector, Label, Scaler};
use crate::volume::container::find;
use crate::volume::{read_container, write_container, TensorRecord};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainParams {
    pub pca: PcaParams,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub svm: SvmModel,
    pub platt: PlattModel,
    pub feature_names: Vec<String>,
    pub config_id: String,
    pub weight_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub probability: f64,
    pub label: Label,
}

impl Prediction {
    fn new(score: f64, platt: &PlattModel) -> Self {
        let probability = platt.probability(score);
        Self { score, probability, label: Label::from_positive(probability >= 0.5) }
    }
}

/// Fits scaler, PCA, SVM and Platt in sequence on the rows of `x`.
pub fn train_bundle(
    x: &DMatrix<f64>,
    labels: &[bool],
    feature_names: Vec<String>,
    config_id: &str,
    weight_hash: &str,
    params: &TrainParams,
) -> Result<(ModelBundle, super::SvmSolution), ModelError> {
    if feature_names.len() != x.ncols() {
        return Err(ModelError::DimMismatch { expected: x.ncols(), got: feature_names.len() });
    }
    let scaler = Scaler::fit(x)?;
    let z = scaler.transform(x)?;
    let pca = pca_fit(&z, &params.pca)?;
    let scores = pca.transform(&z)?;
    let solution = svm_fit(&scores, labels, &params.svm)?;
    let train_scores = solution.model.decision_rows(&scores);
    let platt = platt_fit(&train_scores, labels)?;
    let bundle = ModelBundle {
        scaler,
        pca,
        svm: solution.model.clone(),
        platt,
        feature_names,
        config_id: config_id.to_string(),
        weight_hash: weight_hash.to_string(),
    };
    Ok((bundle, solution))
}

impl ModelBundle {
    /// Decision score of a raw (unstandardized) feature row.
    pub fn score_row(&self, values: &[f64]) -> Result<f64, ModelError> {
        let z = self.scaler.transform_row(values)?;
        let z = DMatrix::from_row_slice(1, z.len(), z.as_slice());
        let s = self.pca.transform(&z)?;
        Ok(self.svm.decision(s.as_slice()))
    }

    /// Decision scores for every row of `x`.
    pub fn score_matrix(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
        let z = self.scaler.transform(x)?;
        let s = self.pca.transform(&z)?;
        Ok(self.svm.decision_rows(&s))
    }

    pub fn predict_row(&self, values: &[f64]) -> Result<Prediction, ModelError> {
        Ok(Prediction::new(self.score_row(values)?, &self.platt))
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction, ModelError> {
        if fv.names != self.feature_names {
            let at = fv.names.iter().zip(&self.feature_names).position(|(a, b)| a != b);
            return Err(ModelError::NameMismatch(at.unwrap_or(fv.names.len().min(self.feature_names.len()))));
        }
        self.predict_row(&fv.values)
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        let d = self.scaler.dim();
        let k = self.pca.n_components();
        let mut components = Vec::with_capacity(k * d);
        for r in 0..k {
            components.extend(self.pca.components.row(r).iter());
        }
        vec![
            TensorRecord::f64("scaler.mean", vec![d], self.scaler.mean.clone()),
            TensorRecord::f64("scaler.std", vec![d], self.scaler.std.clone()),
            TensorRecord::f64("pca.mean", vec![d], self.pca.mean.clone()),
            TensorRecord::f64("pca.components", vec![k, d], components),
            TensorRecord::f64("pca.explained_variance", vec![k], self.pca.explained_variance.clone()),
            TensorRecord::f64("pca.explained_ratio", vec![k], self.pca.explained_ratio.clone()),
            TensorRecord::f64("svm.w", vec![k], self.svm.w.clone()),
            TensorRecord::f64(
                "svm.params",
                vec![4],
                vec![self.svm.b, self.svm.c, self.svm.class_weights[0], self.svm.class_weights[1]],
            ),
            TensorRecord::f64("platt", vec![2], vec![self.platt.a, self.platt.b]),
        ]
    }

    pub fn metadata(&self) -> String {
        format!(
            "config_id={}\nweight_hash={}\nfeature_count={}\nfeature_names={}\n",
            self.config_id,
            self.weight_hash,
            self.feature_names.len(),
            self.feature_names.join(",")
        )
    }

    pub fn from_parts(records: &[TensorRecord], metadata: &str) -> Result<Self, ModelError> {
        let mut config_id = None;
        let mut weight_hash = None;
        let mut names = None;
        let mut count = None;
        for line in metadata.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once('=').ok_or_else(|| ModelError::Metadata(format!("malformed line {line:?}")))?;
            match key {
                "config_id" => config_id = Some(value.to_string()),
                "weight_hash" => weight_hash = Some(value.to_string()),
                "feature_count" => {
                    count = Some(value.parse::<usize>().map_err(|_| ModelError::Metadata(format!("bad feature_count {value:?}")))?)
                }
                "feature_names" => names = Some(value.split(',').map(str::to_string).collect::<Vec<_>>()),
                _ => {}
            }
        }
        let missing = |k: &str| ModelError::Metadata(format!("missing key {k}"));
        let feature_names = names.ok_or_else(|| missing("feature_names"))?;
        if count.ok_or_else(|| missing("feature_count"))? != feature_names.len() {
            return Err(ModelError::Metadata("feature_count disagrees with feature_names".into()));
        }

        let get = |name: &str| -> Result<Vec<f64>, ModelError> { Ok(find(records, name)?.as_f64()?.to_vec()) };
        let d = feature_names.len();
        let scaler = Scaler { mean: get("scaler.mean")?, std: get("scaler.std")? };
        let comp = find(records, "pca.components")?;
        let (k, cd) = match comp.shape[..] {
            [k, cd] => (k, cd),
            _ => return Err(ModelError::Metadata("pca.components must be rank 2".into())),
        };
        let pca = PcaModel {
            mean: get("pca.mean")?,
            components: DMatrix::from_row_slice(k, cd, comp.as_f64()?),
            explained_variance: get("pca.explained_variance")?,
            explained_ratio: get("pca.explained_ratio")?,
        };
        let w = get("svm.w")?;
        let sp = get("svm.params")?;
        let pl = get("platt")?;
        for (what, got, expected) in [
            ("scaler.mean", scaler.mean.len(), d),
            ("scaler.std", scaler.std.len(), d),
            ("pca.mean", pca.mean.len(), d),
            ("pca.components", cd, d),
            ("pca.explained_variance", pca.explained_variance.len(), k),
            ("pca.explained_ratio", pca.explained_ratio.len(), k),
            ("svm.w", w.len(), k),
            ("svm.params", sp.len(), 4),
            ("platt", pl.len(), 2),
        ] {
            if got != expected {
                return Err(ModelError::Metadata(format!("{what}: expected length {expected}, got {got}")));
            }
        }
        Ok(Self {
            scaler,
            pca,
            svm: SvmModel { w, b: sp[0], c: sp[1], class_weights: [sp[2], sp[3]] },
            platt: PlattModel { a: pl[0], b: pl[1] },
            feature_names,
            config_id: config_id.ok_or_else(|| missing("config_id"))?,
            weight_hash: weight_hash.ok_or_else(|| missing("weight_hash"))?,
        })
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".meta");
        PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, write_container(&self.to_records())?)?;
        fs::write(Self::meta_path(path), self.metadata())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let records = read_container(&fs::read(path)?)?;
        let meta = fs::read_to_string(Self::meta_path(path))?;
        Self::from_parts(&records, &meta)
    }
}
