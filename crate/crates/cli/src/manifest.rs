//! Run manifests: what went in, what came out, and how to repeat it.

use std::path::Path;

use radar_dogm::config::PipelineConfig;
use radar_dogm::fusion::FrameReport;
use radar_dogm::scenario::ScenarioParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as given on the command line, or relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path, label: &str) -> Result<Self, CliError> {
        let data = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
        Ok(Self {
            path: label.to_string(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub seed: u64,
    /// Effective configuration, overrides applied.
    pub config: PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioParams>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub frames: Vec<FrameReport>,
    pub aggregate: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], config: PipelineConfig, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            seed,
            config,
            scenario: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            frames: Vec::new(),
            aggregate: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::input(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_json_round_trip() {
        let mut m = RunManifest::new("run", &["--seed".into(), "3".into()], PipelineConfig::default(), 3);
        m.inputs.push(FileDigest { path: "a".into(), sha256: sha256_hex(b""), bytes: 0 });
        m.aggregate = serde_json::json!({ "steps": 0 });
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
