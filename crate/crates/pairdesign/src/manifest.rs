//! Run manifests: what was run, on which inputs, and when. Written next to
//! each output as `<output>.manifest.json` so the output itself stays a pure
//! function of its inputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::digest::bytes_digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        Ok(Self { path: path.display().to_string(), sha256: bytes_digest(&std::fs::read(path)?) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub output: FileDigest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    /// Recompute every digest and report the first file that changed.
    pub fn verify(&self) -> Result<(), String> {
        for f in self.inputs.iter().chain(std::iter::once(&self.output)) {
            let now = FileDigest::of(Path::new(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            if now.sha256 != f.sha256 {
                return Err(format!("{} changed since the run", f.path));
            }
        }
        Ok(())
    }
}
