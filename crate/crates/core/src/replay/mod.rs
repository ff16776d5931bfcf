//! Scripted and recorded meeting replays.

pub mod manifest;
pub mod runner;
pub mod synth;

pub use manifest::{
    Action, EditSpec, Manifest, ManifestError, Mode, ScheduledAction, ScriptedUtterance, TrackSpec,
};
pub use runner::{build_edit, replay, ReplayError, ReplayOptions, ReplayOutput, REPLAY_AUTHOR};
pub use synth::{synthesize, SynthError, TrackAudio};
