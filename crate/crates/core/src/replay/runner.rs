//! Drives a manifest through a stepped pipeline on a virtual clock.
//!
//! Chunk `k` of every track is delivered at `t = k + 1`, when its second of
//! audio is complete. At equal times, due re-summarization checks run
//! first, then scheduled actions, then chunk delivery. After the last chunk
//! the session is closed and the run continues until nothing is pending and
//! twice the debounce window has passed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::asr::{AsrBackend, Transcriber};
use crate::audio::SessionId;
use crate::doc::{Author, DocId, EditOp, Operation, SegmentRange};
use crate::pipeline::{Clock, ManualClock, Pipeline, PipelineConfig, PipelineError};
use crate::retry::RetryPolicy;
use crate::summarizer::Summarizer;

use super::manifest::{Action, EditSpec, Manifest, Mode, ScheduledAction};
use super::synth::{synthesize, SynthError};

pub const REPLAY_AUTHOR: &str = "replay-user";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("action at {at_s} s: {detail}")]
    Action { at_s: f64, detail: String },
}

#[derive(Clone)]
pub struct ReplayOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Replaces the generated mock transcription table.
    pub asr: Option<Arc<dyn AsrBackend>>,
    pub summarizer: Summarizer,
    /// Wall seconds per virtual second in realtime mode.
    pub time_scale: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Fast,
            seed: 0,
            asr: None,
            summarizer: Summarizer::mock(),
            time_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutput {
    pub session_id: SessionId,
    pub transcript: String,
    pub minutes: String,
    pub events: String,
}

/// Builds the operation an injected edit stands for, against `text`.
pub fn build_edit(text: &str, spec: &EditSpec) -> Result<Operation, String> {
    let len = text.chars().count();
    let mut op = Operation::new();
    match spec {
        EditSpec::Replace { find, with } => {
            if find.is_empty() {
                return Err("empty search text".into());
            }
            let at = text
                .find(find.as_str())
                .ok_or_else(|| format!("{find:?} not found"))?;
            let start = text[..at].chars().count();
            let n = find.chars().count();
            op.retain(start)
                .delete(n)
                .insert(with)
                .retain(len - start - n);
        }
        EditSpec::DeleteLine { contains } => {
            let mut start = 0;
            let mut found = None;
            for line in text.split_inclusive('\n') {
                let n = line.chars().count();
                if line.contains(contains.as_str()) {
                    found = Some((start, n));
                    break;
                }
                start += n;
            }
            let (start, n) = found.ok_or_else(|| format!("no line contains {contains:?}"))?;
            op.retain(start).delete(n).retain(len - start - n);
        }
        EditSpec::Raw { components } => {
            if components.base_len() != len {
                return Err(format!(
                    "raw edit covers {} chars, document has {len}",
                    components.base_len()
                ));
            }
            op = components.clone();
        }
    }
    Ok(op)
}

fn perform(p: &Pipeline, sid: &SessionId, scheduled: &ScheduledAction) -> Result<(), ReplayError> {
    let fail = |detail: String| ReplayError::Action {
        at_s: scheduled.at_s,
        detail,
    };
    match &scheduled.action {
        Action::Edit { doc, edit } => {
            let (text, revision) = p.with_editor(sid, |ed| {
                let d = ed.doc(*doc);
                (d.text(), d.revision())
            })?;
            let components = build_edit(&text, edit).map_err(fail)?;
            let op = EditOp {
                doc_id: *doc,
                base_revision: revision,
                author: Author::user(REPLAY_AUTHOR),
                components,
            };
            p.apply_edit(sid, op).map_err(|e| fail(e.to_string()))?;
        }
        Action::SetChunkLength { words } => p.set_chunk_length(sid, *words)?,
        Action::Summarize { start_seq, end_seq } => {
            let range = SegmentRange::new(*start_seq, *end_seq).map_err(|e| fail(e.to_string()))?;
            p.request_on_demand(sid, range)?;
        }
    }
    Ok(())
}

fn min_time(candidates: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    candidates.into_iter().flatten().reduce(f64::min)
}

pub fn replay(manifest: &Manifest, opts: &ReplayOptions) -> Result<ReplayOutput, ReplayError> {
    let (tracks, mock) = synthesize(manifest, opts.seed)?;
    let backend: Arc<dyn AsrBackend> = match &opts.asr {
        Some(b) => b.clone(),
        None => Arc::new(mock),
    };
    let cfg = PipelineConfig::new(
        Transcriber::new(backend, RetryPolicy::default()),
        opts.summarizer.clone(),
    );
    let clock = Arc::new(ManualClock::default());
    let p = Pipeline::manual(&cfg, clock.clone());
    let sid = p
        .create_session(Some(manifest.chunk_length_words))?
        .session_id;
    for t in &manifest.tracks {
        if let Some(label) = &t.speaker_label {
            p.set_speaker_label(&sid, &t.track_id, label)?;
        }
    }

    let mut actions: Vec<&ScheduledAction> = manifest.actions.iter().collect();
    actions.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let total_chunks = tracks.first().map_or(0, |t| t.chunks.len());
    let debounce = cfg.debounce_s;
    let started = Instant::now();
    let mut next_chunk = 0usize;
    let mut next_action = 0usize;
    let mut closed = false;
    let mut last_activity = 0.0f64;

    let wait_until = |t: f64| {
        if opts.mode == Mode::Realtime {
            let target = started + Duration::from_secs_f64(t * opts.time_scale);
            if let Some(d) = target.checked_duration_since(Instant::now()) {
                std::thread::sleep(d);
            }
        }
    };

    if total_chunks == 0 {
        p.close_session(&sid)?;
        p.pump();
        closed = true;
    }

    loop {
        let deadline = p.with_editor(&sid, |ed| ed.next_deadline())?;
        let t = min_time([
            (next_chunk < total_chunks).then(|| (next_chunk + 1) as f64),
            actions.get(next_action).map(|a| a.at_s),
            deadline,
        ]);
        let Some(t) = t else { break };
        let t = t.max(clock.now());
        wait_until(t);
        clock.set(t);
        last_activity = t;

        p.tick();
        p.pump();

        while let Some(a) = actions.get(next_action).filter(|a| a.at_s <= t) {
            perform(&p, &sid, a)?;
            p.pump();
            next_action += 1;
        }

        if next_chunk < total_chunks && (next_chunk + 1) as f64 <= t {
            for track in &tracks {
                p.ingest_chunk(
                    &sid,
                    &track.track_id,
                    next_chunk as u64,
                    &track.chunks[next_chunk],
                )?;
            }
            next_chunk += 1;
            p.pump();
            if next_chunk == total_chunks {
                p.close_session(&sid)?;
                p.pump();
                closed = true;
            }
        }
    }
    debug_assert!(closed);

    // quiescence: settle for twice the debounce window
    let end = last_activity + 2.0 * debounce;
    wait_until(end);
    clock.set(end);
    p.tick();
    p.pump();

    let out = p.with_editor(&sid, |ed| {
        if !ed.is_quiescent() {
            log::warn!("{sid}: replay finished with work outstanding");
        }
        ReplayOutput {
            session_id: sid.clone(),
            transcript: ed.doc(DocId::Transcript).text(),
            minutes: ed.doc(DocId::Summary).text(),
            events: ed.events_log(),
        }
    })?;
    Ok(out)
}
