//! Audio chunk format, sessions, and the ingestion front door.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Bus, BusError};
use crate::wire::{self, AudioMsg, TOPIC_AUDIO};

pub const SAMPLE_RATE: u32 = 16_000;
pub const CHUNK_SAMPLES: usize = 16_000;
pub const CHUNK_BYTES: usize = CHUNK_SAMPLES * 2;
pub const CHUNK_SECONDS: f64 = 1.0;

pub const MIN_CHUNK_LENGTH_WORDS: u32 = 10;
pub const MAX_CHUNK_LENGTH_WORDS: u32 = 2000;
pub const DEFAULT_CHUNK_LENGTH_WORDS: u32 = 100;
/// Values offered by the UI density selector.
pub const CHUNK_LENGTH_CHOICES: [u32; 3] = [50, 100, 200];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        SessionId(s.to_string())
    }
}

/// One second of mono s16le PCM at 16 kHz from a single track.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub session_id: SessionId,
    pub track_id: String,
    pub chunk_seq: u64,
    #[serde(with = "crate::wire::base64_bytes")]
    pub pcm: Vec<u8>,
}

impl fmt::Debug for AudioChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioChunk")
            .field("session_id", &self.session_id)
            .field("track_id", &self.track_id)
            .field("chunk_seq", &self.chunk_seq)
            .field("pcm_bytes", &self.pcm.len())
            .finish()
    }
}

impl AudioChunk {
    pub fn from_samples(
        session_id: SessionId,
        track_id: impl Into<String>,
        chunk_seq: u64,
        samples: &[i16],
    ) -> Self {
        Self {
            session_id,
            track_id: track_id.into(),
            chunk_seq,
            pcm: samples_to_bytes(samples),
        }
    }

    pub fn samples(&self) -> Vec<i16> {
        bytes_to_samples(&self.pcm)
    }

    pub fn stream_time_s(&self) -> f64 {
        self.chunk_seq as f64 * CHUNK_SECONDS
    }
}

pub fn samples_to_bytes(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

pub fn bytes_to_samples(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    /// Milliseconds since the unix epoch.
    pub created_at: u64,
    pub chunk_length_words: u32,
    pub tracks: BTreeSet<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("chunk_length_words must be in [{MIN_CHUNK_LENGTH_WORDS}, {MAX_CHUNK_LENGTH_WORDS}], got {0}")]
    InvalidChunkLength(u32),
    #[error("audio chunk must be exactly {CHUNK_BYTES} bytes, got {0}")]
    Format(usize),
    #[error("chunk {got} out of order for track {track}; expected {expected}")]
    Sequencing {
        track: String,
        expected: u64,
        got: u64,
    },
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("invalid track id {0:?}")]
    InvalidTrack(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

pub fn validate_chunk_length(words: u32) -> Result<u32, IngestError> {
    if (MIN_CHUNK_LENGTH_WORDS..=MAX_CHUNK_LENGTH_WORDS).contains(&words) {
        Ok(words)
    } else {
        Err(IngestError::InvalidChunkLength(words))
    }
}

#[derive(Debug)]
struct SessionEntry {
    session: Session,
    next_seq: BTreeMap<String, u64>,
    closed: bool,
}

/// Validates uploads and publishes accepted chunks on the `audio` topic,
/// keyed by `session:track`.
#[derive(Debug)]
pub struct Ingest {
    bus: Bus,
    next_id: AtomicU64,
    sessions: Mutex<HashMap<SessionId, Arc<Mutex<SessionEntry>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkAck {
    pub chunk_seq: u64,
    pub enqueue_seq: u64,
    pub new_track: bool,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn audio_key(session: &SessionId, track: &str) -> String {
    format!("{session}:{track}")
}

impl Ingest {
    pub fn new(bus: Bus) -> Self {
        Self {
            bus,
            next_id: AtomicU64::new(1),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn entry(&self, sid: &SessionId) -> Result<Arc<Mutex<SessionEntry>>, IngestError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(sid)
            .cloned()
            .ok_or_else(|| IngestError::NotFound(sid.clone()))
    }

    pub fn create_session(&self, chunk_length_words: Option<u32>) -> Result<Session, IngestError> {
        let words =
            validate_chunk_length(chunk_length_words.unwrap_or(DEFAULT_CHUNK_LENGTH_WORDS))?;
        let id = SessionId(format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst)));
        let session = Session {
            session_id: id.clone(),
            created_at: now_millis(),
            chunk_length_words: words,
            tracks: BTreeSet::new(),
        };
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(
                id,
                Arc::new(Mutex::new(SessionEntry {
                    session: session.clone(),
                    next_seq: BTreeMap::new(),
                    closed: false,
                })),
            );
        Ok(session)
    }

    pub fn session(&self, sid: &SessionId) -> Option<Session> {
        let entry = self.entry(sid).ok()?;
        let e = entry.lock().unwrap_or_else(|e| e.into_inner());
        Some(e.session.clone())
    }

    pub fn is_closed(&self, sid: &SessionId) -> Option<bool> {
        let entry = self.entry(sid).ok()?;
        let closed = entry.lock().unwrap_or_else(|e| e.into_inner()).closed;
        Some(closed)
    }

    pub fn ingest_chunk(
        &self,
        sid: &SessionId,
        track_id: &str,
        chunk_seq: u64,
        payload: &[u8],
    ) -> Result<ChunkAck, IngestError> {
        if track_id.is_empty() || track_id.contains(':') {
            return Err(IngestError::InvalidTrack(track_id.to_string()));
        }
        let entry = self.entry(sid)?;
        let mut e = entry.lock().unwrap_or_else(|e| e.into_inner());
        if e.closed {
            return Err(IngestError::NotFound(sid.clone()));
        }
        if payload.len() != CHUNK_BYTES {
            return Err(IngestError::Format(payload.len()));
        }
        let expected = e.next_seq.get(track_id).copied().unwrap_or(0);
        if chunk_seq != expected {
            return Err(IngestError::Sequencing {
                track: track_id.to_string(),
                expected,
                got: chunk_seq,
            });
        }
        let chunk = AudioChunk {
            session_id: sid.clone(),
            track_id: track_id.to_string(),
            chunk_seq,
            pcm: payload.to_vec(),
        };
        // publish before touching state so a rejected publish leaves no trace
        let enqueue_seq = self.bus.publish(
            TOPIC_AUDIO,
            &audio_key(sid, track_id),
            wire::encode(&AudioMsg::Chunk(chunk)),
        )?;
        let new_track = e.session.tracks.insert(track_id.to_string());
        e.next_seq.insert(track_id.to_string(), chunk_seq + 1);
        Ok(ChunkAck {
            chunk_seq,
            enqueue_seq,
            new_track,
        })
    }

    pub fn set_chunk_length(&self, sid: &SessionId, words: u32) -> Result<(), IngestError> {
        let entry = self.entry(sid)?;
        let mut e = entry.lock().unwrap_or_else(|e| e.into_inner());
        if e.closed {
            return Err(IngestError::NotFound(sid.clone()));
        }
        e.session.chunk_length_words = validate_chunk_length(words)?;
        Ok(())
    }

    /// Stops accepting audio and asks the segmenter to flush what it holds.
    pub fn close_session(&self, sid: &SessionId) -> Result<(), IngestError> {
        let entry = self.entry(sid)?;
        let mut e = entry.lock().unwrap_or_else(|e| e.into_inner());
        if e.closed {
            return Err(IngestError::NotFound(sid.clone()));
        }
        self.bus.publish(
            TOPIC_AUDIO,
            &sid.0,
            wire::encode(&AudioMsg::Close {
                session_id: sid.clone(),
            }),
        )?;
        e.closed = true;
        Ok(())
    }
}
