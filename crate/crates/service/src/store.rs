//! Append-only session event log: one JSON envelope per line in a single
//! file. Every accepted mutation is written and synced before it is applied,
//! so replaying the file rebuilds the exact service state after a crash.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::condition::Condition;
use crate::error::ServiceError;
use crate::session::Answer;
use crate::survey::SurveyAnswers;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignedPair {
    pub pair_id: String,
    /// Show the pair's second segment first.
    pub swapped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        condition: Condition,
        token: String,
        block: usize,
        replacement_of: Option<Uuid>,
        pairs: Vec<AssignedPair>,
    },
    Responded {
        item_id: String,
        answer: Answer,
    },
    SurveySubmitted {
        answers: SurveyAnswers,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub session: Uuid,
    pub at_ms: u64,
    pub event: Event,
}

struct Inner {
    file: Option<File>,
    next_seq: u64,
}

pub struct EventStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl EventStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> EventStore {
        EventStore { path: None, inner: Mutex::new(Inner { file: None, next_seq: 0 }) }
    }

    /// Opens (creating if needed) the log at `path` and returns it with the
    /// events already recorded.
    pub fn open(path: &Path) -> Result<(EventStore, Vec<Envelope>), ServiceError> {
        let mut events = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let env: Envelope = serde_json::from_str(&line)
                    .map_err(|e| ServiceError::Store(format!("{} line {}: {e}", path.display(), i + 1)))?;
                events.push(env);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let next_seq = events.last().map_or(0, |e| e.seq + 1);
        let store =
            EventStore { path: Some(path.to_path_buf()), inner: Mutex::new(Inner { file: Some(file), next_seq }) };
        Ok((store, events))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Durably records an event and returns its envelope.
    pub fn append(&self, session: Uuid, event: Event) -> Result<Envelope, ServiceError> {
        let mut inner = self.inner.lock();
        let env = Envelope { seq: inner.next_seq, session, at_ms: now_ms(), event };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&env).map_err(|e| ServiceError::Store(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        inner.next_seq += 1;
        Ok(env)
    }
}
