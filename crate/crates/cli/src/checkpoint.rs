//! Versioned JSON checkpoints of the filtering history.
//!
//! Floats are written in shortest round-trip form, so loading reproduces
//! every parameter bit for bit. Files are written to a temporary sibling and
//! renamed into place; a reader never sees a partial checkpoint.

use std::io::Write;
use std::path::{Path, PathBuf};

use hmnn::{FilterState, StepDiagnostics};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Root seed of the run that produced the history.
    pub seed: u64,
    /// Completed steps; equals `state.steps()`.
    pub step: usize,
    pub state: FilterState,
    /// Per-step diagnostics; empty when the history was saved without them.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Resolved config of the producing run.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(state: FilterState, seed: u64, diagnostics: Vec<StepDiagnostics>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            seed,
            step: state.steps(),
            state,
            diagnostics,
            config: None,
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| CliError::Io(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CliError::Data(msg) => CliError::Data(format!("checkpoint {}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| CliError::Data(format!("corrupt checkpoint ({e})")))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            Some(v) => {
                return Err(CliError::Data(format!(
                    "checkpoint format version {v} is not supported (expected {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(CliError::Data("checkpoint has no format_version".into())),
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| CliError::Data(format!("malformed checkpoint ({e})")))?;
        let diag_ok = ckpt.diagnostics.is_empty() || ckpt.diagnostics.len() == ckpt.step;
        if ckpt.step != ckpt.state.steps() || !diag_ok {
            return Err(CliError::Data(format!(
                "checkpoint step {} disagrees with its history ({} parameter sets, {} diagnostics)",
                ckpt.step,
                ckpt.state.steps(),
                ckpt.diagnostics.len()
            )));
        }
        ckpt.state
            .kernel
            .validate()
            .map_err(|e| CliError::Data(format!("checkpoint kernel: {e}")))?;
        let n = ckpt.state.shape.num_weights();
        if std::iter::once(&ckpt.state.initial)
            .chain(&ckpt.state.history)
            .any(|p| p.len() != n)
        {
            return Err(CliError::Data("checkpoint parameters do not match its network".into()));
        }
        Ok(ckpt)
    }
}

/// Writes `state` as a checkpoint.
pub fn serialize_checkpoint(state: &FilterState, seed: u64, path: &Path) -> CliResult<()> {
    Checkpoint::new(state.clone(), seed, Vec::new()).save(path)
}

/// Reads the filtering history stored at `path`.
pub fn load_checkpoint(path: &Path) -> CliResult<FilterState> {
    Ok(Checkpoint::load(path)?.state)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}
