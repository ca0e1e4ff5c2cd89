//! `manifest.json`: what a run emitted and under which configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: RunStatus,
    pub files: Vec<FileEntry>,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn entry(dir: &Path, name: &str) -> CliResult<FileEntry> {
        let bytes = std::fs::read(dir.join(name))?;
        Ok(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        })
    }

    /// Adds or refreshes the entry for `name`.
    pub fn record(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        let e = Self::entry(dir, name)?;
        match self.files.iter_mut().find(|f| f.path == name) {
            Some(f) => *f = e,
            None => self.files.push(e),
        }
        Ok(())
    }

    /// Writes through a temporary file and a rename, so readers never see
    /// a partial manifest.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let tmp = dir.join(".manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self).map_err(ganlab::Error::from)?)?;
        std::fs::rename(tmp, dir.join(MANIFEST))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|_| CliError::Missing(path.clone()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }
}
