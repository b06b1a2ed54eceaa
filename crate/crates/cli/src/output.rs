//! Output directory handling: atomic file writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    /// File path as given, or `builtin-example`.
    pub source: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Timings live in a separate file.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputRecord>,
    pub options: serde_json::Value,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Collects the files of one run, each written with temp file + rename.
pub struct OutputDir {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
    timings: BTreeMap<String, serde_json::Value>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), artifacts: BTreeMap::new(), timings: BTreeMap::new() })
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let target = self.root.join(name);
        let dir = target.parent().unwrap_or(&self.root);
        fs::create_dir_all(dir)?;
        let mut tmp = NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        self.write_raw(name, bytes)?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Like `write_json`, with a `manifest` key added to the top-level object.
    pub fn write_report<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(std::io::Error::other)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("manifest".into(), MANIFEST.into());
        }
        self.write_json(name, &v)
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn record_timing(&mut self, key: &str, value: impl Serialize) {
        self.timings.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    /// Writes the timings file and then the manifest listing every artifact.
    pub fn finish(self, command: &'static str, inputs: Vec<InputRecord>, options: serde_json::Value) -> std::io::Result<()> {
        let mut timings = serde_json::to_string_pretty(&self.timings).map_err(std::io::Error::other)?;
        timings.push('\n');
        self.write_raw(TIMINGS, timings.as_bytes())?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs,
            options,
            artifacts: self
                .artifacts
                .iter()
                .map(|(file, sha256)| ArtifactRecord { file: file.clone(), sha256: sha256.clone() })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_raw(MANIFEST, text.as_bytes())
    }
}
