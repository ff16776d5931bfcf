//! Payloads carried on the bus topics. All are JSON; PCM is base64.

use serde::{Deserialize, Serialize};

use crate::asr::Utterance;
use crate::audio::{AudioChunk, SessionId};
use crate::segmenter::UtteranceAudio;

pub const TOPIC_AUDIO: &str = "audio";
pub const TOPIC_UTTERANCE_AUDIO: &str = "utterance-audio";
pub const TOPIC_UTTERANCE_TEXT: &str = "utterance-text";
pub const TOPIC_SUMMARIZE_REQUEST: &str = "summarize-request";
pub const TOPIC_SUMMARIZE_RESPONSE: &str = "summarize-response";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AudioMsg {
    Chunk(AudioChunk),
    Close { session_id: SessionId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum UtteranceAudioMsg {
    Utterance(UtteranceAudio),
    EndOfStream {
        session_id: SessionId,
        last_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum UtteranceTextMsg {
    Utterance {
        session_id: SessionId,
        utterance: Utterance,
    },
    EndOfStream {
        session_id: SessionId,
        last_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeRequest {
    pub session: SessionId,
    pub summary_id: u64,
    pub request_seq: u64,
    pub segment_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeResponse {
    pub session: SessionId,
    pub summary_id: u64,
    pub request_seq: u64,
    pub summary_text: String,
}

pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("bus payloads always serialize")
}

pub fn decode<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub(crate) mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}
