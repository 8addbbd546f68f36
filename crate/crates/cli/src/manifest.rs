//! Per-stage manifest: what went in, what came out, and how.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: PipelineConfig,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Paths under `root` are recorded relative to it.
fn digest(root: &Path, path: &Path) -> Result<FileDigest> {
    let shown = path.strip_prefix(root).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: sha256_file(path)?,
    })
}

pub struct ManifestBuilder<'a> {
    root: &'a Path,
    command: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> ManifestBuilder<'a> {
    pub fn new(root: &'a Path, command: &'static str) -> Self {
        Self {
            root,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.outputs.push(path.into());
        self
    }

    pub fn write(&self, stage_dir: &Path, config: &PipelineConfig) -> Result<PathBuf> {
        let mut versions = BTreeMap::new();
        versions.insert("contrasim".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest".to_string(), "1".to_string());
        let m = Manifest {
            command: self.command.to_string(),
            seed: config.seed,
            versions,
            inputs: self
                .inputs
                .iter()
                .map(|p| digest(self.root, p))
                .collect::<Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| digest(self.root, p))
                .collect::<Result<_>>()?,
            config: config.clone(),
        };
        let path = stage_dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
