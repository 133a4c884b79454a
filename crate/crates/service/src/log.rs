use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ServiceError;

pub const DECISIONS_FILE: &str = "decisions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubjectType {
    Rule,
    PnExtraction,
    AlternativeCandidate,
}

impl SubjectType {
    /// Accepts the variant name or its snake_case form.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "Rule" | "rule" | "rules" => Some(Self::Rule),
            "PnExtraction" | "pn_extraction" | "pn" => Some(Self::PnExtraction),
            "AlternativeCandidate" | "alternative_candidate" | "alternative" => Some(Self::AlternativeCandidate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
    Edit,
}

/// One reviewer action as stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub timestamp: DateTime<Utc>,
    pub user: String,
    pub subject_type: SubjectType,
    pub subject_id: String,
    pub decision: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

impl ReviewDecision {
    pub fn payload_str(&self, key: &str) -> Option<&str> {
        self.payload.as_ref()?.get(key)?.as_str()
    }

    pub fn comment(&self) -> Option<String> {
        self.payload_str("comment").map(str::to_string)
    }
}

/// Append-only JSON-lines file; every append is synced before it returns.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
}

impl DecisionLog {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, decision: &ReviewDecision) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(decision).map_err(|e| ServiceError::Log(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| ServiceError::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| ServiceError::io(&self.path, e))
    }
}

/// Reads every decision in file order. A final line without its newline is
/// a torn write and is dropped; any other unreadable line is an error.
pub fn read_log(path: &Path) -> Result<Vec<ReviewDecision>, ServiceError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut lineno = 0usize;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| ServiceError::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<ReviewDecision>(text) {
            Ok(d) => out.push(d),
            Err(_) if !complete => break,
            Err(e) => return Err(ServiceError::Log(format!("{}:{lineno}: {e}", path.display()))),
        }
    }
    Ok(out)
}

/// Fold order: by timestamp, ties kept in file order.
pub fn fold_order(mut decisions: Vec<ReviewDecision>) -> Vec<ReviewDecision> {
    decisions.sort_by_key(|d| d.timestamp);
    decisions
}
