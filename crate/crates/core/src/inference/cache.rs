//! On-disk embedding cache: one "ADCT" file per (volume id, weight hash, projection seed, dim).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::volume::container::{find, read_container, write_container, TensorRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct CachedEmbedding {
    pub embedding: Vec<f32>,
    pub projected: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(volume_id: &str, weight_hash: u64, seed: u64, dim: usize) -> String {
        let safe: String = volume_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{safe}-w{weight_hash:016x}-s{seed}-d{dim}")
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.adct"))
    }

    /// Returns `None` on a miss or an unreadable entry.
    pub fn get(&self, key: &str) -> Option<CachedEmbedding> {
        let bytes = fs::read(self.path(key)).ok()?;
        let records = read_container(&bytes).ok()?;
        let embedding = find(&records, "embedding").ok()?.as_f32().ok()?.to_vec();
        let projected = find(&records, "projected").ok()?.as_f64().ok()?.to_vec();
        Some(CachedEmbedding { embedding, projected })
    }

    pub fn put(&self, key: &str, entry: &CachedEmbedding) -> io::Result<()> {
        let records = [
            TensorRecord::f32("embedding", vec![entry.embedding.len()], entry.embedding.clone()),
            TensorRecord::f64("projected", vec![entry.projected.len()], entry.projected.clone()),
        ];
        let bytes = write_container(&records).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        // write-then-rename so concurrent readers never see a partial file
        let tmp = self.dir.join(format!("{key}.adct.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.path(key))
    }
}
