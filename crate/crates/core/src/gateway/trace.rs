//! Append-only run trace: exactly one record per gateway call (success or
//! failure) plus one record per planning attempt. Written as JSON lines when
//! a file is attached; always kept in memory for accounting.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    LlmCall {
        request_id: u64,
        template: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<usize>,
        backend: String,
        /// "ok", "permanent_error", "retries_exhausted", or "timeout".
        outcome: String,
        retries: u32,
        prompt_tokens: usize,
        completion_tokens: usize,
        latency_ms: u64,
        /// Full prompt text, kept so runs can be audited offline.
        prompt: String,
    },
    PlanAttempt {
        attempt: usize,
        template: String,
        coverage_deficiencies: usize,
        format_defects: usize,
    },
}

pub struct TraceLog {
    events: Mutex<Vec<TraceEvent>>,
    file: Option<Mutex<File>>,
}

impl TraceLog {
    pub fn in_memory() -> Self {
        Self {
            events: Mutex::new(Vec::new()),
            file: None,
        }
    }

    /// Also tee every record to `path`, one JSON object per line.
    pub fn with_file(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            events: Mutex::new(Vec::new()),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn record(&self, event: TraceEvent) {
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&event).expect("trace event serializes");
            let mut f = file.lock().unwrap();
            // Trace IO failure must not take the run down.
            let _ = writeln!(f, "{line}");
        }
        self.events.lock().unwrap().push(event);
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.lock().unwrap().clone()
    }

    /// Number of gateway call records (any outcome).
    pub fn call_count(&self) -> usize {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter(|e| matches!(e, TraceEvent::LlmCall { .. }))
            .count()
    }

    /// (prompt_tokens, completion_tokens) summed over all call records.
    pub fn token_totals(&self) -> (usize, usize) {
        let events = self.events.lock().unwrap();
        let mut prompt = 0;
        let mut completion = 0;
        for e in events.iter() {
            if let TraceEvent::LlmCall {
                prompt_tokens,
                completion_tokens,
                ..
            } = e
            {
                prompt += prompt_tokens;
                completion += completion_tokens;
            }
        }
        (prompt, completion)
    }
}
