use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{config_err, Outcome, RunConfig};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects files of a run and their checksums.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl Output {
    pub fn create(dir: &Path) -> Outcome<Self> {
        std::fs::create_dir_all(dir).map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Outcome<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes through a `Write`-taking serializer.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> loewner_core::error::Result<()>,
    ) -> Outcome<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| config_err(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

pub fn load(path: &Path) -> Outcome<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("manifest {}: {e}", path.display())))
}
