//! Voice-activity-gated utterance segmentation.
//!
//! Each track owns a buffer that only ever holds speech chunks. A silent
//! chunk ends the utterance: the buffer is flushed and cleared. A speech chunk
//! that would push the buffer past `max_utterance_chunks` forces a flush
//! first. Flushed utterances from all tracks of a session then pass through
//! [`UtteranceOrderer`], which releases them in `(end_time, track_id)` order
//! and stamps the session-wide `finalize_seq`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audio::{AudioChunk, SessionId, CHUNK_SECONDS};

pub const DEFAULT_VAD_THRESHOLD_DBFS: f64 = -40.0;
pub const DEFAULT_MAX_UTTERANCE_CHUNKS: usize = 30;

/// Speech/silence classifier for one chunk. Must be deterministic.
pub trait VoiceDetector: Send + Sync {
    fn is_speech(&self, samples: &[i16]) -> bool;
}

/// RMS level of `samples` relative to full scale (32768). Digital silence is
/// `-inf`.
pub fn rms_dbfs(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let sum_sq: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    let rms = (sum_sq / samples.len() as f64).sqrt();
    if rms == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * (rms / 32768.0).log10()
    }
}

/// Energy gate: speech iff the chunk RMS is at or above `threshold_dbfs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyVad {
    pub threshold_dbfs: f64,
}

impl Default for EnergyVad {
    fn default() -> Self {
        Self {
            threshold_dbfs: DEFAULT_VAD_THRESHOLD_DBFS,
        }
    }
}

impl VoiceDetector for EnergyVad {
    fn is_speech(&self, samples: &[i16]) -> bool {
        rms_dbfs(samples) >= self.threshold_dbfs
    }
}

pub fn detect_speech(vad: &dyn VoiceDetector, chunk: &AudioChunk) -> bool {
    vad.is_speech(&chunk.samples())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackBuffer {
    pub track_id: String,
    pub chunks: Vec<AudioChunk>,
}

impl TrackBuffer {
    pub fn new(track_id: impl Into<String>) -> Self {
        Self {
            track_id: track_id.into(),
            chunks: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn speech_start_time_s(&self) -> Option<f64> {
        self.chunks.first().map(AudioChunk::stream_time_s)
    }

    pub fn last_speech_time_s(&self) -> Option<f64> {
        self.chunks.last().map(AudioChunk::stream_time_s)
    }

    fn take(&mut self) -> Option<FlushedUtterance> {
        let first = self.chunks.first()?;
        let last = self.chunks.last()?;
        let flushed = FlushedUtterance {
            session_id: first.session_id.clone(),
            track_id: self.track_id.clone(),
            start_chunk: first.chunk_seq,
            end_chunk: last.chunk_seq + 1,
            audio: self
                .chunks
                .iter()
                .flat_map(|c| c.pcm.iter().copied())
                .collect(),
        };
        self.chunks.clear();
        Some(flushed)
    }
}

/// A flushed buffer that has not been ordered yet.
#[derive(Clone, PartialEq, Eq)]
pub struct FlushedUtterance {
    pub session_id: SessionId,
    pub track_id: String,
    /// chunk_seq of the first buffered chunk
    pub start_chunk: u64,
    /// one past the chunk_seq of the last buffered chunk
    pub end_chunk: u64,
    pub audio: Vec<u8>,
}

impl fmt::Debug for FlushedUtterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlushedUtterance")
            .field("track_id", &self.track_id)
            .field("start_chunk", &self.start_chunk)
            .field("end_chunk", &self.end_chunk)
            .field("audio_bytes", &self.audio.len())
            .finish()
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceAudio {
    pub session_id: SessionId,
    pub track_id: String,
    #[serde(with = "crate::wire::base64_bytes")]
    pub audio: Vec<u8>,
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub finalize_seq: u64,
}

impl fmt::Debug for UtteranceAudio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtteranceAudio")
            .field("track_id", &self.track_id)
            .field("start_time_s", &self.start_time_s)
            .field("end_time_s", &self.end_time_s)
            .field("finalize_seq", &self.finalize_seq)
            .field("audio_bytes", &self.audio.len())
            .finish()
    }
}

/// Feeds one classified chunk into a track buffer.
///
/// Returns the utterance that this chunk completed, if any.
pub fn advance(
    buffer: &mut TrackBuffer,
    chunk: AudioChunk,
    is_speech: bool,
    max_utterance_chunks: usize,
) -> Option<FlushedUtterance> {
    if is_speech {
        let flushed = if buffer.chunks.len() >= max_utterance_chunks.max(1) {
            buffer.take()
        } else {
            None
        };
        buffer.chunks.push(chunk);
        flushed
    } else {
        buffer.take()
    }
}

/// Releases flushed utterances of one session in nondecreasing end time,
/// ties broken by ascending track id.
///
/// A track that has processed chunks up to `next_expected - 1` can only
/// produce utterances ending at `next_expected` or later, so an utterance is
/// safe to release once its end lies strictly before every track's
/// `next_expected`.
#[derive(Debug, Default)]
pub struct UtteranceOrderer {
    next_expected: BTreeMap<String, u64>,
    held: Vec<FlushedUtterance>,
    next_finalize_seq: u64,
}

impl UtteranceOrderer {
    pub fn new() -> Self {
        Self {
            next_expected: BTreeMap::new(),
            held: Vec::new(),
            next_finalize_seq: 1,
        }
    }

    pub fn register_track(&mut self, track_id: &str) {
        self.next_expected.entry(track_id.to_string()).or_insert(0);
    }

    /// Records that `track_id` has finished processing `chunk_seq`.
    pub fn observe(&mut self, track_id: &str, chunk_seq: u64) {
        let e = self.next_expected.entry(track_id.to_string()).or_insert(0);
        *e = (*e).max(chunk_seq + 1);
    }

    pub fn push(&mut self, u: FlushedUtterance) {
        self.register_track(&u.track_id);
        self.held.push(u);
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    pub fn last_finalize_seq(&self) -> u64 {
        self.next_finalize_seq - 1
    }

    fn watermark(&self) -> u64 {
        self.next_expected.values().copied().min().unwrap_or(0)
    }

    pub fn drain_ready(&mut self) -> Vec<UtteranceAudio> {
        let watermark = self.watermark();
        self.release(|u| u.end_chunk < watermark)
    }

    /// Releases everything; used at end of session.
    pub fn drain_all(&mut self) -> Vec<UtteranceAudio> {
        self.release(|_| true)
    }

    fn release(&mut self, ready: impl Fn(&FlushedUtterance) -> bool) -> Vec<UtteranceAudio> {
        let (mut out, keep): (Vec<_>, Vec<_>) = self.held.drain(..).partition(|u| ready(u));
        self.held = keep;
        out.sort_by(|a, b| {
            a.end_chunk
                .cmp(&b.end_chunk)
                .then_with(|| a.track_id.cmp(&b.track_id))
        });
        out.into_iter()
            .map(|u| {
                let seq = self.next_finalize_seq;
                self.next_finalize_seq += 1;
                UtteranceAudio {
                    session_id: u.session_id,
                    track_id: u.track_id,
                    audio: u.audio,
                    start_time_s: u.start_chunk as f64 * CHUNK_SECONDS,
                    end_time_s: u.end_chunk as f64 * CHUNK_SECONDS,
                    finalize_seq: seq,
                }
            })
            .collect()
    }
}

/// All per-track state machines of one session plus its orderer.
pub struct SessionSegmenter {
    vad: Arc<dyn VoiceDetector>,
    max_utterance_chunks: usize,
    buffers: BTreeMap<String, TrackBuffer>,
    orderer: UtteranceOrderer,
}

impl fmt::Debug for SessionSegmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionSegmenter")
            .field("max_utterance_chunks", &self.max_utterance_chunks)
            .field("buffers", &self.buffers)
            .field("orderer", &self.orderer)
            .finish()
    }
}

impl SessionSegmenter {
    pub fn new(vad: Arc<dyn VoiceDetector>, max_utterance_chunks: usize) -> Self {
        Self {
            vad,
            max_utterance_chunks,
            buffers: BTreeMap::new(),
            orderer: UtteranceOrderer::new(),
        }
    }

    pub fn register_track(&mut self, track_id: &str) {
        self.orderer.register_track(track_id);
        self.buffers
            .entry(track_id.to_string())
            .or_insert_with(|| TrackBuffer::new(track_id));
    }

    pub fn process(&mut self, chunk: AudioChunk) -> Vec<UtteranceAudio> {
        let track = chunk.track_id.clone();
        let seq = chunk.chunk_seq;
        self.register_track(&track);
        let speech = detect_speech(self.vad.as_ref(), &chunk);
        let buffer = self.buffers.get_mut(&track).expect("registered above");
        if let Some(u) = advance(buffer, chunk, speech, self.max_utterance_chunks) {
            self.orderer.push(u);
        }
        self.orderer.observe(&track, seq);
        self.orderer.drain_ready()
    }

    /// Flushes every non-empty buffer and releases all held utterances.
    pub fn close(&mut self) -> Vec<UtteranceAudio> {
        for buffer in self.buffers.values_mut() {
            if let Some(u) = buffer.take() {
                self.orderer.push(u);
            }
        }
        self.orderer.drain_all()
    }

    pub fn last_finalize_seq(&self) -> u64 {
        self.orderer.last_finalize_seq()
    }
}
