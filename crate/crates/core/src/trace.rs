//! Per-delivery run trace and its JSONL form.
//!
//! One JSON object per line, keys in a fixed order:
//!
//! ```text
//! {"round":1,"recv":"p_1","src":"p_2","forged":false,"payload":[...]}
//! {"decide":{"id":"p_1","value":3,"round":4}}
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::Forgery;
use crate::engine::Decision;
use crate::types::{Payload, ProcessorId, Round};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveryRecord {
    pub round: Round,
    pub recv: ProcessorId,
    pub src: ProcessorId,
    pub forged: bool,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideRecord {
    pub decide: Decision,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceEvent {
    Delivery(DeliveryRecord),
    Decide(DecideRecord),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn deliveries(&self) -> impl Iterator<Item = &DeliveryRecord> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Delivery(d) => Some(d),
            TraceEvent::Decide(_) => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Decide(d) => Some(&d.decide),
            TraceEvent::Delivery(_) => None,
        })
    }

    /// The forged deliveries, as a replayable adversary script.
    pub fn forgeries(&self) -> Vec<(Round, Forgery)> {
        self.deliveries()
            .filter(|d| d.forged)
            .map(|d| (d.round, Forgery { receiver: d.recv, claimed_sender: d.src, payload: d.payload.clone() }))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace events always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(line).map_err(|source| TraceError::Parse { line: idx + 1, source })?;
            events.push(event);
        }
        Ok(Trace { events })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        for event in &self.events {
            serde_json::to_writer(&mut w, event).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: idx + 1, source })?;
            events.push(event);
        }
        Ok(Trace { events })
    }
}

/// Writes `trace` as JSONL to `path`.
pub fn emit_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    trace.write_to(path)
}
