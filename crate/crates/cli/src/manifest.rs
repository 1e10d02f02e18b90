use std::path::{Path, PathBuf};

use anyhow::Context;
use minsnr_core::seed::DERIVATION_RULE;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// `sha256("blob <len>\0" || bytes)`, the git object framing over SHA-256.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub seed_rule: &'static str,
    pub hash_rule: &'static str,
    pub inputs: Vec<InputFile>,
    /// Hash of the resolved config JSON followed by every input hash.
    pub content_hash: String,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig) -> anyhow::Result<Self> {
        let inputs = config
            .input_files()
            .into_iter()
            .map(|path| {
                let bytes = std::fs::read(&path).with_context(|| format!("reading input {}", path.display()))?;
                Ok(InputFile {
                    hash: blob_hash(&bytes),
                    path,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut material = serde_json::to_vec(config)?;
        for input in &inputs {
            material.extend_from_slice(input.hash.as_bytes());
        }
        Ok(Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            seed_rule: DERIVATION_RULE,
            hash_rule: "sha256 over \"blob <len>\\0\" followed by the bytes",
            inputs,
            content_hash: blob_hash(&material),
            outputs: Vec::new(),
            notes: serde_json::Map::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_framing() {
        // printf 'blob 0\0' | sha256sum
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        assert_ne!(blob_hash(b"a"), blob_hash(b"b"));
    }
}
