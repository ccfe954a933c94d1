//! Run manifests: every CLI run records its command, resolved config,
//! dataset hashes, seed, and artifact paths for auditability.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub datasets: Vec<DatasetRef>,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub wall_clock_secs: f64,
}

pub struct ManifestBuilder {
    command: String,
    config: Vec<(String, String)>,
    datasets: Vec<DatasetRef>,
    seed: u64,
    artifacts: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: Vec::new(),
            datasets: Vec::new(),
            seed,
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, kv: Vec<(String, String)>) -> &mut Self {
        self.config = kv;
        self
    }

    pub fn dataset(&mut self, path: &Path) -> Result<&mut Self> {
        self.datasets.push(DatasetRef {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    pub fn artifact(&mut self, path: &Path) -> &mut Self {
        self.artifacts.push(path.display().to_string());
        self
    }

    /// Write `manifest.json` into the run's output directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            datasets: self.datasets.clone(),
            seed: self.seed,
            artifacts: self.artifacts.clone(),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
