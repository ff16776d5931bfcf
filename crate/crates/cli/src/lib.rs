//! Library side of `minuteman-replay`: argument handling, output files and
//! the two drivers (in-process and against a running server).

pub mod remote;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use minuteman_core::replay::{
    self, Manifest, ManifestError, Mode, ReplayError, ReplayOptions, SynthError,
};
use minuteman_core::{asr, summarizer, PreprocessConfig, RetryPolicy, Summarizer};
use thiserror::Error;

pub const TRANSCRIPT_FILE: &str = "transcript.txt";
pub const MINUTES_FILE: &str = "minutes.txt";
pub const EVENTS_FILE: &str = "events.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fast,
    Realtime,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fast => Mode::Fast,
            ModeArg::Realtime => Mode::Realtime,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "minuteman-replay",
    version,
    about = "Replay a meeting manifest and write its transcript and minutes"
)]
pub struct Args {
    /// Meeting manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Overrides the manifest's mode; fast when neither sets it.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Output directory for transcript.txt, minutes.txt and events.log.
    #[arg(long, required_unless_present = "emit_asr_map")]
    pub out: Option<PathBuf>,

    /// Drive a running server at this base URL instead of an in-process pipeline.
    #[arg(long)]
    pub server: Option<String>,

    /// Seed for the background noise between scripted utterances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// ASR backend for in-process runs: `mock:<map.json>` or an http URL.
    /// Scripted tracks use the generated mock table when unset.
    #[arg(long)]
    pub asr_url: Option<String>,

    /// Summarizer backend for in-process runs: `mock:` or an http URL.
    #[arg(long, default_value = "mock:")]
    pub summarizer_url: String,

    /// Write the generated mock ASR table (fingerprint -> text) and exit.
    /// A server started with `ASR_URL=mock:<path>` then recognizes the
    /// scripted utterances.
    #[arg(long)]
    pub emit_asr_map: Option<PathBuf>,

    /// Wall seconds per virtual second in realtime mode.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Remote(#[from] remote::RemoteError),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for anything wrong with the manifest or its inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Manifest(_)
            | CliError::Synth(_)
            | CliError::Replay(ReplayError::Synth(_)) => 2,
            _ => 1,
        }
    }
}

/// Final state of a replayed session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outputs {
    pub transcript: String,
    pub minutes: String,
    pub events: String,
}

impl Outputs {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let io = |path: PathBuf| move |source| CliError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, body) in [
            (TRANSCRIPT_FILE, &self.transcript),
            (MINUTES_FILE, &self.minutes),
            (EVENTS_FILE, &self.events),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let manifest = Manifest::load(&args.manifest)?;
    if let Some(path) = &args.emit_asr_map {
        let (_, table) = replay::synthesize(&manifest, args.seed)?;
        let json = serde_json::to_string_pretty(&table).expect("mock table serializes");
        return std::fs::write(path, json).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        });
    }
    let mode: Mode = args
        .mode
        .map(Mode::from)
        .or(manifest.mode)
        .unwrap_or_default();
    let outputs = match &args.server {
        Some(url) => remote::replay_remote(
            &manifest,
            &remote::RemoteOptions {
                base_url: url.trim_end_matches('/').to_string(),
                mode,
                seed: args.seed,
                time_scale: args.time_scale,
            },
        )?,
        None => {
            let opts = ReplayOptions {
                mode,
                seed: args.seed,
                asr: match &args.asr_url {
                    Some(u) => Some(
                        asr::backend_from_url(u).map_err(|e| CliError::Config(e.to_string()))?,
                    ),
                    None => None,
                },
                summarizer: Summarizer::new(
                    summarizer::backend_from_url(&args.summarizer_url)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    PreprocessConfig::default(),
                    RetryPolicy::default(),
                ),
                time_scale: args.time_scale,
            };
            let out = replay::replay(&manifest, &opts)?;
            Outputs {
                transcript: out.transcript,
                minutes: out.minutes,
                events: out.events,
            }
        }
    };
    let dir = args.out.as_deref().expect("clap requires --out");
    outputs.write(dir)?;
    log::info!("wrote {}", dir.display());
    Ok(())
}
