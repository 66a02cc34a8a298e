//! Flat `key=value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adcprog_core::inference::spec::NetworkSpec;
use adcprog_core::inference::projection::{MAX_PROJECTION_DIM, MIN_PROJECTION_DIM};
use adcprog_core::lesion::{Connectivity, SegmentParams};
use adcprog_core::model::{PcaParams, SvmParams, TrainParams};
use adcprog_core::pipeline::PipelineConfig;
use adcprog_core::tabular::BlockSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("config file {path}: line {line}: {message}")]
    Syntax { path: String, line: usize, message: String },
}

impl ConfigError {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), message: message.into() }
    }
}

/// Every recognised key with its default ("" = no default).
pub const KEYS: &[(&str, &str)] = &[
    ("volumes_dir", ""),
    ("clinical_csv", ""),
    ("weights", ""),
    ("network", "resnet50"),
    ("canonical_shape", "24x256x256"),
    ("blocks", "clinical,mri_j1,lesion_j1"),
    ("projection_dim", "128"),
    ("projection_seed", "0"),
    ("threshold", "620"),
    ("open_iterations", "1"),
    ("connectivity", "26"),
    ("min_lesion_voxels", "150"),
    ("folds", "8"),
    ("split_seed", "0"),
    ("svm_seed", "0"),
    ("permute_seed", ""),
    ("max_components", "12"),
    ("variance_target", "0.95"),
    ("out_dir", "out"),
    ("cache_dir", ""),
];

/// Raw key/value pairs: defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, String> =
            KEYS.iter().filter(|(_, d)| !d.is_empty()).map(|(k, d)| (k.to_string(), d.to_string())).collect();
        let mut base_dir = PathBuf::from(".");
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| ConfigError::invalid("config", format!("{}: {e}", path.display())))?;
            base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for (k, v) in parse_pairs(&text, &path.display().to_string())? {
                values.insert(k, v);
            }
        }
        for (k, v) in overrides {
            check_key(k)?;
            values.insert(k.clone(), v.clone());
        }
        Ok(Self { values, base_dir })
    }

    pub fn snapshot(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key).ok_or_else(|| ConfigError::invalid(key, "is required"))?;
        raw.parse().map_err(|e| ConfigError::invalid(key, format!("cannot parse {raw:?}: {e}")))
    }

    /// Relative paths in a config file resolve against the file's directory.
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { self.base_dir.join(p) }
        })
    }

    pub fn existing_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let p = self.path(key).ok_or_else(|| ConfigError::invalid(key, "is required"))?;
        if !p.exists() {
            return Err(ConfigError::invalid(key, format!("path {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out_dir").unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.path("cache_dir").unwrap_or_else(|| self.out_dir().join("cache"))
    }

    pub fn network(&self) -> Result<NetworkSpec, ConfigError> {
        let name = self.raw("network").unwrap_or("resnet50");
        NetworkSpec::by_name(name).ok_or_else(|| ConfigError::invalid("network", format!("unknown network {name:?} (resnet50 | tiny)")))
    }

    pub fn canonical_shape(&self) -> Result<[usize; 3], ConfigError> {
        let raw = self.raw("canonical_shape").unwrap_or("24x256x256");
        parse_shape(raw).ok_or_else(|| ConfigError::invalid("canonical_shape", format!("expected DxHxW, got {raw:?}")))
    }

    pub fn blocks(&self) -> Result<BlockSet, ConfigError> {
        self.parse("blocks")
    }

    pub fn projection_dim(&self) -> Result<usize, ConfigError> {
        let d: usize = self.parse("projection_dim")?;
        if !(MIN_PROJECTION_DIM..=MAX_PROJECTION_DIM).contains(&d) {
            return Err(ConfigError::invalid("projection_dim", format!("{d} outside [{MIN_PROJECTION_DIM}, {MAX_PROJECTION_DIM}]")));
        }
        Ok(d)
    }

    pub fn projection_seed(&self) -> Result<u64, ConfigError> {
        self.parse("projection_seed")
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let threshold: f32 = self.parse("threshold")?;
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(ConfigError::invalid("threshold", "must be a positive number"));
        }
        let connectivity = match self.raw("connectivity") {
            Some("6") => Connectivity::Six,
            Some("26") | None => Connectivity::TwentySix,
            Some(other) => return Err(ConfigError::invalid("connectivity", format!("expected 6 or 26, got {other:?}"))),
        };
        Ok(PipelineConfig {
            canonical_shape: self.canonical_shape()?,
            segment: SegmentParams {
                threshold,
                open_iterations: self.parse("open_iterations")?,
                connectivity,
                min_voxels: self.parse("min_lesion_voxels")?,
            },
        })
    }

    pub fn folds(&self) -> Result<usize, ConfigError> {
        let k: usize = self.parse("folds")?;
        if k < 2 {
            return Err(ConfigError::invalid("folds", "must be at least 2"));
        }
        Ok(k)
    }

    pub fn split_seed(&self) -> Result<u64, ConfigError> {
        self.parse("split_seed")
    }

    pub fn permute_seed(&self) -> Result<Option<u64>, ConfigError> {
        self.raw("permute_seed").map(|_| self.parse("permute_seed")).transpose()
    }

    pub fn train_params(&self) -> Result<TrainParams, ConfigError> {
        let max_components: usize = self.parse("max_components")?;
        if max_components == 0 {
            return Err(ConfigError::invalid("max_components", "must be positive"));
        }
        let variance_target: f64 = self.parse("variance_target")?;
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(ConfigError::invalid("variance_target", "must lie in (0, 1]"));
        }
        Ok(TrainParams {
            pca: PcaParams { max_components, variance_target },
            svm: SvmParams { seed: self.parse("svm_seed")?, ..SvmParams::default() },
        })
    }
}

fn check_key(key: &str) -> Result<(), ConfigError> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "unknown key"))
    }
}

pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { path: origin.to_string(), line: i + 1, message: format!("expected key=value, got {line:?}") });
        };
        let k = k.trim();
        check_key(k)?;
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_shape(s: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = s.split(['x', ',']).map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match parts[..] {
        [d, h, w] if d > 0 && h > 0 && w > 0 => Some([d, h, w]),
        _ => None,
    }
}

pub fn render(values: &BTreeMap<String, String>) -> String {
    values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nfolds = 5\nthreshold=480\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[("folds".into(), "4".into())]).unwrap();
        assert_eq!(cfg.folds().unwrap(), 4);
        assert_eq!(cfg.pipeline().unwrap().segment.threshold, 480.0);
        assert_eq!(cfg.projection_dim().unwrap(), 128);
    }

    #[test]
    fn errors_name_the_key() {
        let cfg = RunConfig::load(None, &[("projection_dim".into(), "16".into())]).unwrap();
        assert!(cfg.projection_dim().unwrap_err().to_string().contains("projection_dim"));
        assert!(RunConfig::load(None, &[("bogus".into(), "1".into())]).unwrap_err().to_string().contains("bogus"));
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert!(cfg.existing_path("weights").unwrap_err().to_string().contains("weights"));
    }

    #[test]
    fn shapes() {
        assert_eq!(parse_shape("24x64x64"), Some([24, 64, 64]));
        assert_eq!(parse_shape("24,64,64"), Some([24, 64, 64]));
        assert_eq!(parse_shape("24x0x64"), None);
    }
}
