//! Reproducibility records written next to every output file.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub struct Recorder {
    subcommand: &'static str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    started_at: DateTime<Utc>,
}

impl Recorder {
    pub fn start(subcommand: &'static str, config: &impl Serialize) -> Self {
        Recorder {
            subcommand,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seed: None,
            inputs: Vec::new(),
            started_at: Utc::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `<output>.manifest.json` for each output, or `manifest_at` when given.
    pub fn finish(self, outputs: &[&Path], manifest_at: Option<&Path>) -> std::io::Result<()> {
        let digests = |paths: &mut dyn Iterator<Item = &Path>| -> std::io::Result<Vec<FileDigest>> {
            paths.filter(|p| p.is_file()).map(FileDigest::of).collect()
        };
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.to_string(),
            config: self.config,
            seed: self.seed,
            inputs: digests(&mut self.inputs.iter().map(PathBuf::as_path))?,
            outputs: digests(&mut outputs.iter().copied())?,
            started_at: self.started_at,
            finished_at: Utc::now(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest") + "\n";
        match manifest_at {
            Some(p) => std::fs::write(p, &text)?,
            None => {
                for out in outputs {
                    std::fs::write(manifest_path(out), &text)?;
                }
            }
        }
        Ok(())
    }
}
