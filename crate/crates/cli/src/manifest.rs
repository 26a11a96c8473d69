use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written next to every output file as `<OUT>.manifest.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Command,
    pub working_directory: PathBuf,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub timestamp: String,
}

pub fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(digest_bytes(path, &bytes))
}

pub fn digest_bytes(path: &Path, bytes: &[u8]) -> InputDigest {
    InputDigest {
        path: path.to_owned(),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

impl RunManifest {
    pub fn new(parameters: &Command, inputs: Vec<InputDigest>) -> Result<Self> {
        Ok(Self {
            command: parameters.name().to_owned(),
            parameters: serde_json::from_value(serde_json::to_value(parameters)?)?,
            working_directory: std::env::current_dir()?,
            inputs,
            seed: parameters.seed(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
