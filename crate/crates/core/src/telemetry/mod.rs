//! Append-only session logs, summaries, exports and the statistics used to
//! compare cohorts.

pub mod analysis;
mod events;
pub mod export;
pub mod stats;
mod summary;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::SessionConfig;

pub(crate) use events::Validator;
pub use events::{ActionSource, CollisionKind, EventBody, EventKind, HintSource, SessionEvent};
pub use summary::{summarize, SessionSummary, SummaryError, Totals, TrialSummary};

pub const LOG_FORMAT: &str = "facehint-session";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event {index} violates log ordering: {reason}")]
    Ordering { index: u64, reason: String },
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
}

/// First line of every session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub config: SessionConfig,
}

impl LogHeader {
    pub fn new(session_id: impl Into<String>, config: SessionConfig) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            session_id: session_id.into(),
            config,
        }
    }
}

/// When the file sink is flushed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// Flush to the OS after every event, before `record` returns.
    #[default]
    PerEvent,
    /// Flush only on [`SessionLog::flush`] and drop. For batch simulation.
    Batched,
}

struct Sink {
    writer: BufWriter<Box<dyn Write + Send>>,
    durability: Durability,
}

/// A session's event log. Events are validated, written to the sink (if
/// any) and only then appended in memory.
pub struct SessionLog {
    header: LogHeader,
    events: Vec<SessionEvent>,
    validator: Validator,
    sink: Option<Sink>,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog")
            .field("session_id", &self.header.session_id)
            .field("events", &self.events.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl SessionLog {
    pub fn in_memory(header: LogHeader) -> Self {
        SessionLog {
            header,
            events: Vec::new(),
            validator: Validator::default(),
            sink: None,
        }
    }

    /// Log that also streams to `writer`; the header line is written immediately.
    pub fn with_writer(
        header: LogHeader,
        writer: Box<dyn Write + Send>,
        durability: Durability,
    ) -> Result<Self, LogError> {
        let mut sink = Sink {
            writer: BufWriter::new(writer),
            durability,
        };
        serde_json::to_writer(&mut sink.writer, &header).map_err(io::Error::from)?;
        sink.writer.write_all(b"\n")?;
        if durability == Durability::PerEvent {
            sink.writer.flush()?;
        }
        Ok(SessionLog {
            header,
            events: Vec::new(),
            validator: Validator::default(),
            sink: Some(sink),
        })
    }

    pub fn create_file(
        header: LogHeader,
        path: &Path,
        durability: Durability,
    ) -> Result<Self, LogError> {
        let file = File::create(path)?;
        Self::with_writer(header, Box::new(file), durability)
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t_ms)
    }

    /// Validates, persists and appends one event.
    pub fn record(&mut self, t_ms: u64, body: EventBody) -> Result<&SessionEvent, LogError> {
        let event = SessionEvent {
            seq: self.validator.next_seq(),
            t_ms,
            body,
        };
        let mut next = self.validator.clone();
        next.apply(&event).map_err(|reason| LogError::Ordering {
            index: event.seq,
            reason,
        })?;
        if let Some(sink) = &mut self.sink {
            serde_json::to_writer(&mut sink.writer, &event).map_err(io::Error::from)?;
            sink.writer.write_all(b"\n")?;
            if sink.durability == Durability::PerEvent {
                sink.writer.flush()?;
            }
        }
        self.validator = next;
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        if let Some(sink) = &mut self.sink {
            sink.writer.flush()?;
        }
        Ok(())
    }

    pub fn summarize(&self) -> Result<SessionSummary, SummaryError> {
        summarize(&self.header, &self.events)
    }
}

impl Drop for SessionLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
