//! Checkpoint directory: `state.json` (digest-protected loop state),
//! `selection.jsonl` (one line per selected candidate) and `report.json`.
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{RunReport, SelectionRecord, SelfTrainState};

pub const FORMAT_VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.json";
pub const SELECTION_FILE: &str = "selection.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("checkpoint {path} has format version {found}, expected {FORMAT_VERSION}")]
    Version { path: PathBuf, found: u32 },
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format_version: u32,
    digest: String,
    state: SelfTrainState,
}

#[derive(Serialize)]
struct SelectionLine<'a> {
    format_version: u32,
    #[serde(flatten)]
    record: &'a SelectionRecord,
}

fn digest(state: &SelfTrainState) -> String {
    let bytes = serde_json::to_vec(state).expect("state serializes");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

/// Write `bytes` to `path` atomically.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn state_path(dir: &Path) -> PathBuf {
    dir.join(STATE_FILE)
}

pub fn save_checkpoint(state: &SelfTrainState, report: &RunReport, dir: &Path) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut log = Vec::new();
    for record in &state.history {
        serde_json::to_writer(&mut log, &SelectionLine { format_version: FORMAT_VERSION, record })
            .expect("selection serializes");
        log.push(b'\n');
    }
    write_atomic(&dir.join(SELECTION_FILE), &log)?;

    let mut rep = serde_json::to_vec_pretty(report).expect("report serializes");
    rep.push(b'\n');
    write_atomic(&dir.join(REPORT_FILE), &rep)?;

    // state last: it is the commit point for a resume
    let file = StateFile { format_version: FORMAT_VERSION, digest: digest(state), state: state.clone() };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("state serializes");
    bytes.push(b'\n');
    write_atomic(&state_path(dir), &bytes)
}

pub fn load_checkpoint(dir: &Path) -> Result<SelfTrainState, CheckpointError> {
    let path = state_path(dir);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let corrupt = |reason: String| CheckpointError::CorruptCheckpoint { path: path.clone(), reason };
    let version = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| corrupt(e.to_string()))?
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(CheckpointError::Version { path: path.clone(), found: version as u32 });
    }
    let file: StateFile = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if digest(&file.state) != file.digest {
        return Err(corrupt("content digest mismatch".into()));
    }
    Ok(file.state)
}

pub fn load_report(dir: &Path) -> Result<RunReport, CheckpointError> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::CorruptCheckpoint { path, reason: e.to_string() })
}
