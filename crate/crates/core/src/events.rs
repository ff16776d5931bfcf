//! Session event log. One JSON object per line, in the order things happened.

use serde::{Deserialize, Serialize};

use crate::doc::{Author, DocId};
use crate::orchestrator::PointKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestReason {
    Initial,
    TranscriptEdited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    Frozen,
    Stale,
    Duplicate,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    SessionCreated {
        chunk_length_words: u32,
    },
    UtteranceAppended {
        utt_seq: u64,
        track_id: String,
        speaker_label: String,
        start_time_s: f64,
        end_time_s: f64,
        words: usize,
        revision: u64,
    },
    UtteranceDiscarded {
        utt_seq: u64,
    },
    PointCreated {
        summary_id: u64,
        kind: PointKind,
        start_seq: u64,
        end_seq: u64,
        words: usize,
    },
    SummarizeRequested {
        summary_id: u64,
        request_seq: u64,
        reason: RequestReason,
        words: usize,
    },
    ResponseApplied {
        summary_id: u64,
        request_seq: u64,
    },
    ResponseDiscarded {
        summary_id: u64,
        request_seq: u64,
        reason: DiscardReason,
    },
    PointFrozen {
        summary_id: u64,
        author: Author,
    },
    UserEdit {
        doc_id: DocId,
        author: Author,
        base_revision: u64,
        revision: u64,
    },
    EditRejected {
        doc_id: DocId,
        author: Author,
        error: String,
    },
    ChunkLengthChanged {
        chunk_length_words: u32,
    },
    EndOfStream {
        last_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Position in the session log, from 1.
    pub n: u64,
    /// Session clock in seconds (stream time in replays).
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

/// Parses an `events.log` body, skipping blank lines.
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
