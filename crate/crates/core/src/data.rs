//! Observations and the newline-delimited JSON dataset format.
//!
//! One observation per line: `{"id": string, "text": string, "label": 0|1}`.
//! `label` may be omitted for prediction inputs.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    /// Opaque payload forwarded to the oracle: a text body or a content
    /// reference for other modalities.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl Observation {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<u8>) -> Self {
        Observation {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate observation id {0:?}")]
    DuplicateId(String),
    #[error("observation {0:?} has no label")]
    MissingLabel(String),
    #[error("dataset is empty")]
    Empty,
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parse one dataset line. Rejects labels other than 0 and 1 and empty ids.
pub fn parse_dataset_line(line: &str) -> Result<Observation, String> {
    let obs: Observation = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if obs.id.is_empty() {
        return Err("empty observation id".into());
    }
    if let Some(label) = obs.label {
        if label > 1 {
            return Err(format!("label must be 0 or 1, got {label}"));
        }
    }
    Ok(obs)
}

/// Parse a whole NDJSON document. Blank lines are skipped; ids must be unique.
pub fn parse_dataset(input: impl BufRead) -> Result<Vec<Observation>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let obs = parse_dataset_line(&line).map_err(|message| DatasetError::Parse {
            line: i + 1,
            message,
        })?;
        if !seen.insert(obs.id.clone()) {
            return Err(DatasetError::DuplicateId(obs.id));
        }
        out.push(obs);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Observation>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(std::io::BufReader::new(file))
}

pub fn write_dataset(path: &Path, observations: &[Observation]) -> std::io::Result<()> {
    let mut out = String::new();
    for obs in observations {
        out.push_str(&serde_json::to_string(obs).expect("observation serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Labels of a training set, failing on the first unlabeled observation.
pub fn labels(observations: &[Observation]) -> Result<Vec<u8>, DatasetError> {
    if observations.is_empty() {
        return Err(DatasetError::Empty);
    }
    observations
        .iter()
        .map(|o| o.label.ok_or_else(|| DatasetError::MissingLabel(o.id.clone())))
        .collect()
}
