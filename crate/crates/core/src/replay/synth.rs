//! Chunk streams for replay tracks.
//!
//! Scripted speech is a sine tone with a frequency unique to each utterance,
//! so every utterance's audio (and fingerprint) is distinct. Gaps are low
//! level noise from a seeded generator, well under the VAD threshold.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asr::MockAsr;
use crate::audio::{samples_to_bytes, CHUNK_SAMPLES, SAMPLE_RATE};

use super::manifest::{Manifest, TrackSpec};

const TONE_AMPLITUDE: f64 = 8000.0;
const NOISE_AMPLITUDE: i16 = 16;
const BASE_FREQ_HZ: f64 = 180.0;
const FREQ_STEP_HZ: f64 = 6.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("wav {path}: {source}")]
    Wav { path: String, source: hound::Error },
    #[error("wav {path}: need 16 kHz mono 16-bit PCM, got {rate} Hz, {channels} ch, {bits} bit")]
    WavFormat {
        path: String,
        rate: u32,
        channels: u16,
        bits: u16,
    },
}

/// One track's chunks, each exactly one second of PCM bytes.
#[derive(Debug, Clone)]
pub struct TrackAudio {
    pub track_id: String,
    pub chunks: Vec<Vec<u8>>,
}

fn tone_freq(utterance_index: usize) -> f64 {
    BASE_FREQ_HZ + FREQ_STEP_HZ * utterance_index as f64
}

fn tone_samples(freq: f64, n: usize) -> Vec<i16> {
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (TONE_AMPLITUDE * (2.0 * PI * freq * t).sin()).round() as i16
        })
        .collect()
}

fn noise_chunk(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let samples: Vec<i16> = (0..CHUNK_SAMPLES)
        .map(|_| rng.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE))
        .collect();
    samples_to_bytes(&samples)
}

/// Seconds of audio a track needs.
pub fn track_len_s(track: &TrackSpec) -> Result<u64, SynthError> {
    match &track.wav {
        Some(path) => Ok(read_wav(path)?.len().div_ceil(CHUNK_SAMPLES) as u64),
        None => Ok(track
            .utterances
            .iter()
            .map(|u| u.end_s())
            .max()
            .unwrap_or(0)),
    }
}

fn read_wav(path: &Path) -> Result<Vec<i16>, SynthError> {
    let name = path.display().to_string();
    let reader = hound::WavReader::open(path).map_err(|source| SynthError::Wav {
        path: name.clone(),
        source,
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE
        || spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(SynthError::WavFormat {
            path: name,
            rate: spec.sample_rate,
            channels: spec.channels,
            bits: spec.bits_per_sample,
        });
    }
    reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(|source| SynthError::Wav { path: name, source })
}

/// Builds every track's chunk stream, all padded to the same length with
/// at least one trailing silent chunk, plus the mock transcription map for
/// the scripted utterances.
pub fn synthesize(
    manifest: &Manifest,
    seed: u64,
) -> Result<(Vec<TrackAudio>, MockAsr), SynthError> {
    let mut total = 0;
    for t in &manifest.tracks {
        total = total.max(track_len_s(t)?);
    }
    let total_chunks = if manifest.tracks.is_empty() {
        0
    } else {
        total as usize + 1
    };
    let mut asr = MockAsr::default();
    let mut out = Vec::with_capacity(manifest.tracks.len());
    let mut utterance_index = 0;
    for (ti, track) in manifest.tracks.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (ti as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut chunks: Vec<Vec<u8>> = Vec::with_capacity(total_chunks);
        if let Some(path) = &track.wav {
            let samples = read_wav(path)?;
            for c in samples.chunks(CHUNK_SAMPLES) {
                let mut c = c.to_vec();
                c.resize(CHUNK_SAMPLES, 0);
                chunks.push(samples_to_bytes(&c));
            }
        } else {
            for u in &track.utterances {
                while (chunks.len() as u64) < u.start_s {
                    chunks.push(noise_chunk(&mut rng));
                }
                let n = u.duration_s as usize * CHUNK_SAMPLES;
                let pcm = samples_to_bytes(&tone_samples(tone_freq(utterance_index), n));
                utterance_index += 1;
                asr.insert(&pcm, u.text.clone());
                chunks.extend(pcm.chunks(CHUNK_SAMPLES * 2).map(<[u8]>::to_vec));
            }
        }
        while chunks.len() < total_chunks {
            chunks.push(noise_chunk(&mut rng));
        }
        out.push(TrackAudio {
            track_id: track.track_id.clone(),
            chunks,
        });
    }
    Ok((out, asr))
}
