//! Run manifests: what was run, on which inputs, with which resolved settings.
//!
//! Artifacts embed a copy without timestamps so that reruns stay
//! byte-identical; the full manifest with wall-clock times goes to a
//! `<stem>.manifest.json` sidecar next to the primary output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "tlime";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Full argument vector, program name first.
    pub command: Vec<String>,
    pub working_dir: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<InputHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes =
        fs::read(path).map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: u64) -> Self {
        let working_dir = std::env::current_dir()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        RunManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command,
            working_dir,
            seed,
            config: Value::Null,
            inputs: Vec::new(),
            timing: None,
        }
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) -> CliResult<()> {
        self.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputHash {
            role: role.into(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Copy for embedding: everything except wall-clock fields.
    pub fn embedded(&self) -> RunManifest {
        RunManifest {
            timing: None,
            ..self.clone()
        }
    }

    /// Inputs whose current content no longer matches the recorded hash.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|i| {
                sha256_file(Path::new(&i.path))
                    .map(|h| h != i.sha256)
                    .unwrap_or(true)
            })
            .map(|i| i.path.clone())
            .collect()
    }

    /// Looks for a manifest either at the top level of `text` or under a
    /// `manifest` key.
    pub fn extract(text: &str) -> CliResult<RunManifest> {
        let value: Value = serde_json::from_str(text)?;
        let inner = value.get("manifest").cloned().unwrap_or(value);
        serde_json::from_value(inner)
            .map_err(|e| CliError::data(format!("no run manifest found: {e}")))
    }
}

/// Records start time and writes the sidecar once the command is done.
pub struct Recorder {
    started: chrono::DateTime<chrono::Utc>,
    clock: std::time::Instant,
}

impl Recorder {
    pub fn start() -> Self {
        Recorder {
            started: chrono::Utc::now(),
            clock: std::time::Instant::now(),
        }
    }

    pub fn finish(&self, manifest: &RunManifest, sidecar: &Path) -> CliResult<()> {
        let full = RunManifest {
            timing: Some(Timing {
                started_at: self
                    .started
                    .to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                finished_at: chrono::Utc::now()
                    .to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                wall_seconds: self.clock.elapsed().as_secs_f64(),
            }),
            ..manifest.clone()
        };
        write_json(sidecar, &full)
    }
}

/// `dir/name.ext` -> `dir/name.manifest.json`; a bare prefix gets the suffix appended.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

/// Payload plus its embedded manifest, flattened into one JSON object.
#[derive(Serialize)]
pub struct WithManifest<'a, T: Serialize> {
    #[serde(flatten)]
    pub payload: &'a T,
    pub manifest: RunManifest,
}
