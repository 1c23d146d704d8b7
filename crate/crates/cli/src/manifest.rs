//! Run manifests: what ran, with which resolved settings, on which files.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub threads: usize,
    /// Every setting after merging flags, config file and defaults.
    pub config: Map<String, Value>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: u64,
    pub duration_seconds: f64,
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subcommand: &str,
        seed: Option<u64>,
        threads: usize,
        config: Map<String, Value>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        started: SystemTime,
        elapsed: Duration,
    ) -> anyhow::Result<Self> {
        let hash_all = |paths: &[PathBuf]| -> anyhow::Result<Vec<Artifact>> {
            paths.iter().map(|p| Artifact::of(p)).collect()
        };
        Ok(Self {
            tool: "tmmsb".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            threads,
            config,
            inputs: hash_all(inputs)?,
            outputs: hash_all(outputs)?,
            started_unix: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            duration_seconds: elapsed.as_secs_f64(),
        })
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = out_dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
