//! Replay manifest (TOML).
//!
//! ```toml
//! version = 1
//! chunk_length_words = 50
//!
//! [[tracks]]
//! track_id = "t1"
//! speaker_label = "Vojta"
//! utterances = [
//!     { start_s = 0, duration_s = 3, text = "a different DHCP server" },
//! ]
//!
//! [[tracks]]
//! track_id = "t2"
//! wav = "t2.wav"            # 16 kHz mono 16-bit, relative to the manifest
//!
//! [[actions]]
//! at_s = 20
//! action = "edit"
//! doc = "transcript"
//! op = "replace"
//! find = "care"
//! with = "Kea"
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::audio::{validate_chunk_length, DEFAULT_CHUNK_LENGTH_WORDS};
use crate::doc::{DocId, Operation};
use crate::segmenter::DEFAULT_MAX_UTTERANCE_CHUNKS;

pub const MANIFEST_VERSION: u32 = 1;
/// Each scripted utterance gets its own tone frequency; this bounds them.
pub const MAX_SCRIPTED_UTTERANCES: usize = 1000;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ManifestError {
    ManifestError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Fast,
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default = "default_chunk_length")]
    pub chunk_length_words: u32,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub tracks: Vec<TrackSpec>,
    #[serde(default)]
    pub actions: Vec<ScheduledAction>,
}

fn default_chunk_length() -> u32 {
    DEFAULT_CHUNK_LENGTH_WORDS
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    pub track_id: String,
    #[serde(default)]
    pub speaker_label: Option<String>,
    #[serde(default)]
    pub utterances: Vec<ScriptedUtterance>,
    #[serde(default)]
    pub wav: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedUtterance {
    pub start_s: u64,
    pub duration_s: u64,
    pub text: String,
}

impl ScriptedUtterance {
    pub fn end_s(&self) -> u64 {
        self.start_s + self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScheduledAction {
    pub at_s: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Edit {
        doc: DocId,
        #[serde(flatten)]
        edit: EditSpec,
    },
    SetChunkLength {
        words: u32,
    },
    Summarize {
        start_seq: u64,
        end_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum EditSpec {
    /// Replaces the first occurrence of `find`.
    Replace { find: String, with: String },
    /// Deletes the first line containing `contains`, newline included.
    DeleteLine { contains: String },
    /// Components against the document at injection time.
    Raw { components: Operation },
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let m: Manifest = toml::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// Reads and validates; relative WAV paths are resolved against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for t in &mut m.tracks {
            if let Some(w) = &t.wav {
                if w.is_relative() {
                    t.wav = Some(base.join(w));
                }
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(invalid(format!(
                "unsupported version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        validate_chunk_length(self.chunk_length_words).map_err(|e| invalid(e.to_string()))?;
        let mut ids = HashSet::new();
        let mut scripted = 0;
        for t in &self.tracks {
            if t.track_id.is_empty() || t.track_id.contains([':', '/']) {
                return Err(invalid(format!("bad track id {:?}", t.track_id)));
            }
            if !ids.insert(t.track_id.as_str()) {
                return Err(invalid(format!("duplicate track id {:?}", t.track_id)));
            }
            if t.wav.is_some() && !t.utterances.is_empty() {
                return Err(invalid(format!(
                    "track {:?} has both a wav source and scripted utterances",
                    t.track_id
                )));
            }
            let mut free_from = 0;
            for (i, u) in t.utterances.iter().enumerate() {
                if u.duration_s == 0 || u.duration_s > DEFAULT_MAX_UTTERANCE_CHUNKS as u64 {
                    return Err(invalid(format!(
                        "track {:?} utterance {i}: duration must be 1..={DEFAULT_MAX_UTTERANCE_CHUNKS} s",
                        t.track_id
                    )));
                }
                if i > 0 && u.start_s < free_from {
                    return Err(invalid(format!(
                        "track {:?} utterance {i} overlaps the previous one or leaves no silent second before it",
                        t.track_id
                    )));
                }
                if u.text.contains(['\n', '\r']) {
                    return Err(invalid(format!(
                        "track {:?} utterance {i}: text spans lines",
                        t.track_id
                    )));
                }
                free_from = u.end_s() + 1;
            }
            scripted += t.utterances.len();
        }
        if scripted > MAX_SCRIPTED_UTTERANCES {
            return Err(invalid(format!(
                "at most {MAX_SCRIPTED_UTTERANCES} scripted utterances"
            )));
        }
        for a in &self.actions {
            if !a.at_s.is_finite() || a.at_s < 0.0 {
                return Err(invalid(format!("action time {} out of range", a.at_s)));
            }
            match &a.action {
                Action::SetChunkLength { words } => {
                    validate_chunk_length(*words).map_err(|e| invalid(e.to_string()))?;
                }
                Action::Summarize { start_seq, end_seq } => {
                    crate::doc::SegmentRange::new(*start_seq, *end_seq)
                        .map_err(|e| invalid(e.to_string()))?;
                }
                Action::Edit { .. } => {}
            }
        }
        Ok(())
    }
}
