//! Run manifests.
//!
//! A manifest is a key-value file written before a command does any work.
//! It holds the fully resolved configuration under its usual keys, plus
//!
//! ```text
//! manifest.command = <command name>
//! manifest.input.<name> = <sha256 of the input file>
//! manifest.output.<name> = <path the command writes>
//! ```
//!
//! Passing a manifest back through `--config` reproduces the run: the
//! `manifest.*` keys are ignored on input.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataset::hex;
use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: KvMap,
    pub inputs: Vec<(String, PathBuf)>,
    pub outputs: Vec<(String, PathBuf)>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: KvMap) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, name: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.push((name.to_string(), path.into()));
        self
    }

    pub fn output(mut self, name: &str, path: impl Into<PathBuf>) -> Self {
        self.outputs.push((name.to_string(), path.into()));
        self
    }

    pub fn to_kv(&self) -> Result<KvMap> {
        let mut m = self.config.clone();
        m.set("manifest.command", &self.command);
        for (name, path) in &self.inputs {
            m.set(format!("manifest.input.{name}"), file_sha256(path)?);
        }
        for (name, path) in &self.outputs {
            m.set(format!("manifest.output.{name}"), path.display());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let text = self.to_kv()?.to_text();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Drops `manifest.*` keys so a manifest can serve as a config file.
pub fn strip_manifest_keys(m: &KvMap) -> KvMap {
    let mut out = KvMap::new();
    for (k, v) in m.iter() {
        if !k.starts_with("manifest.") {
            out.set(k, v);
        }
    }
    out
}
