//! Transcription backends and the re-sequencing stage in front of the
//! transcript document.

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::SAMPLE_RATE;
use crate::retry::RetryPolicy;
use crate::segmenter::UtteranceAudio;

pub const TRANSCRIPTION_FAILED: &str = "[transcription failed]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_seq: u64,
    pub track_id: String,
    pub speaker_label: String,
    pub text: String,
    pub start_time_s: f64,
    pub end_time_s: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("http error: {0}")]
    Http(#[from] reqwest::Error),
    #[error("backend returned status {0}")]
    Status(u16),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("audio encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read mock manifest {path}: {source}")]
    ManifestIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid mock manifest {path}: {source}")]
    ManifestFormat {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot build http client: {0}")]
    Client(#[from] reqwest::Error),
}

pub trait AsrBackend: Send + Sync {
    fn transcribe(&self, audio: &UtteranceAudio) -> Result<String, BackendError>;
}

/// Hex SHA-256 of raw PCM bytes; the lookup key for [`MockAsr`].
pub fn audio_fingerprint(pcm: &[u8]) -> String {
    let digest = Sha256::digest(pcm);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Table-driven test double: fingerprint of the utterance audio -> text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockAsr {
    entries: HashMap<String, String>,
}

impl MockAsr {
    pub fn new(entries: HashMap<String, String>) -> Self {
        Self { entries }
    }

    /// Reads a JSON object mapping fingerprints to texts.
    pub fn from_manifest(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::ManifestIo {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|source| ConfigError::ManifestFormat {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn insert(&mut self, pcm: &[u8], text: impl Into<String>) {
        self.entries.insert(audio_fingerprint(pcm), text.into());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mock_transcribe(&self, pcm: &[u8]) -> String {
        let hash = audio_fingerprint(pcm);
        match self.entries.get(&hash) {
            Some(text) => text.clone(),
            None => format!("UNKNOWN-{}", &hash[..8]),
        }
    }
}

impl AsrBackend for MockAsr {
    fn transcribe(&self, audio: &UtteranceAudio) -> Result<String, BackendError> {
        Ok(self.mock_transcribe(&audio.audio))
    }
}

/// Wraps raw s16le mono PCM in a WAV container.
pub fn wav_bytes(pcm: &[u8]) -> Result<Vec<u8>, BackendError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::with_capacity(pcm.len() + 44));
    {
        let mut writer = hound::WavWriter::new(&mut out, spec)
            .map_err(|e| BackendError::Encode(e.to_string()))?;
        for s in crate::audio::bytes_to_samples(pcm) {
            writer
                .write_sample(s)
                .map_err(|e| BackendError::Encode(e.to_string()))?;
        }
        writer
            .finalize()
            .map_err(|e| BackendError::Encode(e.to_string()))?;
    }
    Ok(out.into_inner())
}

/// `POST {base}/transcribe` with a WAV body; the response body is the text.
#[derive(Debug, Clone)]
pub struct RemoteAsr {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteAsr {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ConfigError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            url: format!("{}/transcribe", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl AsrBackend for RemoteAsr {
    fn transcribe(&self, audio: &UtteranceAudio) -> Result<String, BackendError> {
        let body = wav_bytes(&audio.audio)?;
        let resp = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "audio/wav")
            .body(body)
            .send()?;
        if !resp.status().is_success() {
            return Err(BackendError::Status(resp.status().as_u16()));
        }
        Ok(resp.text()?)
    }
}

/// Picks a backend from an `ASR_URL`-style value: `mock:<manifest-path>`,
/// bare `mock:` for an empty table, or an http base URL.
pub fn backend_from_url(url: &str) -> Result<Arc<dyn AsrBackend>, ConfigError> {
    match url.strip_prefix("mock:") {
        Some("") => Ok(Arc::new(MockAsr::default())),
        Some(path) => Ok(Arc::new(MockAsr::from_manifest(Path::new(path))?)),
        None => Ok(Arc::new(RemoteAsr::new(url, Duration::from_secs(60))?)),
    }
}

/// One transcript line never contains a newline.
pub fn clean_transcript(raw: &str) -> String {
    raw.replace(['\r', '\n'], " ").trim().to_string()
}

/// Backend plus retry policy; never fails outward.
#[derive(Clone)]
pub struct Transcriber {
    backend: Arc<dyn AsrBackend>,
    retry: RetryPolicy,
}

impl Transcriber {
    pub fn new(backend: Arc<dyn AsrBackend>, retry: RetryPolicy) -> Self {
        Self { backend, retry }
    }

    /// Returns cleaned text; empty means the utterance should be discarded.
    /// After the retry budget is spent the failure sentinel is returned so the
    /// timeline stays intact.
    pub fn transcribe(&self, audio: &UtteranceAudio) -> String {
        if audio.audio.is_empty() {
            return String::new();
        }
        match self
            .retry
            .run("transcription", |_| self.backend.transcribe(audio))
        {
            Ok(text) => clean_transcript(&text),
            Err(e) => {
                log::error!(
                    "transcription of utterance {} failed: {e}",
                    audio.finalize_seq
                );
                TRANSCRIPTION_FAILED.to_string()
            }
        }
    }
}

/// Hold-back buffer that releases utterances strictly in `utt_seq` order.
///
/// Sequence numbers start at 1. A `None` entry marks a discarded (empty)
/// transcription, which still lets later utterances through.
#[derive(Debug)]
pub struct Resequencer {
    next: u64,
    held: BTreeMap<u64, Option<Utterance>>,
}

impl Default for Resequencer {
    fn default() -> Self {
        Self {
            next: 1,
            held: BTreeMap::new(),
        }
    }
}

impl Resequencer {
    /// Offers `seq`; returns every utterance that became appendable, in order.
    /// Already-released or already-held sequence numbers are ignored.
    pub fn offer(&mut self, seq: u64, utterance: Option<Utterance>) -> Vec<Utterance> {
        if seq < self.next || self.held.contains_key(&seq) {
            return Vec::new();
        }
        self.held.insert(seq, utterance);
        let mut out = Vec::new();
        while let Some(entry) = self.held.remove(&self.next) {
            out.extend(entry);
            self.next += 1;
        }
        out
    }

    /// Highest sequence number fully released (appended or discarded).
    pub fn released_through(&self) -> u64 {
        self.next - 1
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }
}
