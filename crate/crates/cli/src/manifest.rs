//! Per-run manifest: config snapshot, seeds, and hashes of inputs and outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use adcprog_core::hash::{fnv1a64, hex64};
use serde_json::{json, Value};

#[derive(Debug, Default)]
pub struct Manifest {
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    seeds: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.insert(path.display().to_string(), hex64(fnv1a64(&bytes)));
        Ok(())
    }

    pub fn input_hash(&mut self, name: &str, hash: String) {
        self.inputs.insert(name.to_string(), hash);
    }

    pub fn seed(&mut self, name: &str, value: impl Into<Value>) {
        self.seeds.insert(name.to_string(), value.into());
    }

    /// Writes `bytes` to `dir/name` and records its hash under `name`.
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.insert(name.to_string(), hex64(fnv1a64(bytes)));
        Ok(())
    }

    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), hex64(fnv1a64(bytes)));
    }

    pub fn finish(self, dir: &Path, command: &str, config: &BTreeMap<String, String>) -> std::io::Result<()> {
        let doc = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n";
        fs::write(dir.join(format!("manifest-{command}.json")), text)
    }
}
