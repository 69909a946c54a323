//! Run manifests: the resolved config plus a digest of every output file.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ResolvedConfig;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Code id of `build-graph` or suite id of `validate`.
    pub target: Option<String>,
    pub config: ResolvedConfig,
    /// Master seed shared by every point of `config`.
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn digest_file(dir: &Path, name: &str) -> Result<OutputFile> {
    let bytes = std::fs::read(dir.join(name))?;
    Ok(OutputFile {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

impl RunManifest {
    pub fn new(command: &str, config: ResolvedConfig, started_unix: f64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            target: None,
            seed: config.points.first().map_or(0, |p| p.seed),
            config,
            started_unix,
            finished_unix: started_unix,
            outputs: Vec::new(),
        }
    }

    /// Digests `files` and writes the manifest into `dir`.
    pub fn finish(mut self, dir: &Path, files: &[String]) -> Result<Self> {
        self.outputs = files
            .iter()
            .map(|f| digest_file(dir, f))
            .collect::<Result<_>>()?;
        self.finished_unix = now_unix();
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), body + "\n")?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Config {
            field: "<manifest>".into(),
            reason: e.to_string(),
        })
    }
}
