use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON of the command's settings.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, serde_json::Value>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects what a command read and wrote, then writes the manifest.
pub struct Recorder {
    manifest: RunManifest,
    inputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        let canonical = serde_json::to_vec(&config).expect("config serialises");
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config_hash: hex::encode(Sha256::digest(&canonical)),
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                summary: BTreeMap::new(),
                started_unix: now(),
                finished_unix: 0,
            },
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("summary serialises");
        self.manifest.summary.insert(key.to_string(), v);
    }

    /// Writes `manifest_path`, digesting `outputs` (relative to its directory).
    pub fn finish(mut self, manifest_path: &Path, outputs: &[PathBuf]) -> Result<RunManifest, CliError> {
        for p in &self.inputs {
            self.manifest.inputs.push(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            });
        }
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        for p in outputs {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            self.manifest.outputs.push(FileDigest {
                path: rel.display().to_string(),
                sha256: sha256_file(p)?,
            });
        }
        self.manifest.finished_unix = now();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(manifest_path, text + "\n").map_err(|e| CliError::io(manifest_path, e))?;
        Ok(self.manifest)
    }
}

/// Re-reads a manifest and reports outputs whose digest no longer matches.
pub fn verify(manifest_path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for o in &m.outputs {
        if sha256_file(&dir.join(&o.path))? != o.sha256 {
            bad.push(o.path.clone());
        }
    }
    Ok(bad)
}

/// Where a command's manifest goes: `DIR/manifest.json` for directory outputs,
/// `NAME.manifest.json` beside a file output.
pub fn manifest_path(out: &Path) -> PathBuf {
    if is_file_output(out) {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.manifest.json"))
    } else {
        out.join("manifest.json")
    }
}

pub fn is_file_output(out: &Path) -> bool {
    out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
