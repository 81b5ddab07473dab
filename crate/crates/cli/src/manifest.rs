//! Run manifest: a sidecar JSON binding the config snapshot, the seed, the
//! code version, and the content hash of every output file to a run id, so a
//! rerun can be checked byte for byte.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub code_version: String,
    /// TOML snapshot of the effective configuration.
    pub config: String,
    pub outputs: Vec<OutputRecord>,
    pub wall_clock_secs: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<(String, u64)> {
    let data = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    h.update(&data);
    Ok((hex(&h.finalize()), data.len() as u64))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_snapshot: String) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(seed.to_le_bytes());
        h.update(config_snapshot.as_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        let run_id = hex(&h.finalize())[..16].to_string();
        RunManifest {
            run_id,
            command: command.to_string(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config_snapshot,
            outputs: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    /// Records an output file that must already exist.
    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let (sha256, bytes) = hash_file(path)?;
        self.outputs.push(OutputRecord {
            path: path.to_path_buf(),
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn write_next_to(&self, primary_out: &Path) -> Result<PathBuf> {
        let mut name = primary_out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary_out.with_file_name(name);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}
