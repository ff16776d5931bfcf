//! Per-session editor backend: both pads, the orchestrator, and the log.
//!
//! Every mutation of a session goes through one `Editor`, so transcript,
//! summary and orchestrator state change under a single writer.

use std::collections::HashMap;

use crate::asr::{Resequencer, Utterance};
use crate::audio::SessionId;
use crate::doc::{word_count, AppliedOp, DocError, DocId, EditOp, LineDoc, SegmentRange, Snapshot};
use crate::events::{Event, EventRecord};
use crate::orchestrator::{Effects, Orchestrator};
use crate::wire::{SummarizeRequest, SummarizeResponse};

/// Something connected clients need to hear about.
#[derive(Debug, Clone, PartialEq)]
pub enum EditorUpdate {
    Applied(AppliedOp),
    Debug(bool),
}

pub type UpdateSink = Box<dyn Fn(&EditorUpdate) + Send>;

pub struct Editor {
    session: SessionId,
    transcript: LineDoc,
    summary: LineDoc,
    orch: Orchestrator,
    reseq: Resequencer,
    labels: HashMap<String, String>,
    log: Vec<EventRecord>,
    sink: Option<UpdateSink>,
    debug: bool,
    end_at: Option<u64>,
    ended: bool,
}

impl std::fmt::Debug for Editor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Editor")
            .field("session", &self.session)
            .field("transcript_revision", &self.transcript.revision())
            .field("summary_revision", &self.summary.revision())
            .field("events", &self.log.len())
            .finish_non_exhaustive()
    }
}

impl Editor {
    pub fn new(session: SessionId, chunk_length_words: u32) -> Self {
        let mut ed = Self {
            orch: Orchestrator::new(session.clone(), chunk_length_words),
            session,
            transcript: LineDoc::new(DocId::Transcript),
            summary: LineDoc::new(DocId::Summary),
            reseq: Resequencer::default(),
            labels: HashMap::new(),
            log: Vec::new(),
            sink: None,
            debug: false,
            end_at: None,
            ended: false,
        };
        ed.record(0.0, Event::SessionCreated { chunk_length_words });
        ed
    }

    pub fn with_debounce(mut self, seconds: f64) -> Self {
        self.orch = self.orch.with_debounce(seconds);
        self
    }

    pub fn set_sink(&mut self, sink: UpdateSink) {
        self.sink = Some(sink);
    }

    pub fn session(&self) -> &SessionId {
        &self.session
    }

    pub fn doc(&self, id: DocId) -> &LineDoc {
        match id {
            DocId::Transcript => &self.transcript,
            DocId::Summary => &self.summary,
        }
    }

    pub fn snapshot(&self, id: DocId) -> Snapshot {
        self.doc(id).snapshot()
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn events_log(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&rec.to_line());
            out.push('\n');
        }
        out
    }

    pub fn debug(&self) -> bool {
        self.debug
    }

    pub fn set_debug(&mut self, enabled: bool) {
        self.debug = enabled;
        self.notify(&EditorUpdate::Debug(enabled));
    }

    /// Display name for a track; defaults to the track id.
    pub fn set_speaker_label(&mut self, track_id: &str, label: &str) {
        self.labels.insert(track_id.to_string(), label.to_string());
    }

    pub fn speaker_label(&self, track_id: &str) -> String {
        self.labels
            .get(track_id)
            .cloned()
            .unwrap_or_else(|| track_id.to_string())
    }

    pub fn set_chunk_length(&mut self, now: f64, words: u32) {
        if words != self.orch.threshold() {
            self.orch.set_threshold(words);
            self.record(
                now,
                Event::ChunkLengthChanged {
                    chunk_length_words: words,
                },
            );
        }
    }

    pub fn outstanding_requests(&self) -> usize {
        self.orch.outstanding_requests()
    }

    pub fn next_deadline(&self) -> Option<f64> {
        self.orch.next_deadline()
    }

    /// True once the end of the utterance stream has been released.
    pub fn ended(&self) -> bool {
        self.ended
    }

    /// Every utterance has been appended, nothing is awaiting a summary and
    /// no re-summarization check is scheduled.
    pub fn is_quiescent(&self) -> bool {
        self.ended && self.outstanding_requests() == 0 && self.next_deadline().is_none()
    }

    fn record(&mut self, t: f64, event: Event) {
        let n = self.log.len() as u64 + 1;
        self.log.push(EventRecord { n, t, event });
    }

    fn notify(&self, update: &EditorUpdate) {
        if let Some(sink) = &self.sink {
            sink(update);
        }
    }

    fn absorb(&mut self, now: f64, fx: Effects) -> Vec<SummarizeRequest> {
        for op in &fx.summary_ops {
            self.notify(&EditorUpdate::Applied(op.clone()));
        }
        for e in fx.events {
            self.record(now, e);
        }
        fx.requests
    }

    /// Takes a transcription result by sequence number. `None` (or empty
    /// text) marks an utterance with nothing to show. Results are appended
    /// strictly in sequence order.
    pub fn on_utterance(
        &mut self,
        now: f64,
        seq: u64,
        utterance: Option<Utterance>,
    ) -> Vec<SummarizeRequest> {
        let utterance = utterance.filter(|u| !u.text.trim().is_empty());
        let mut requests = Vec::new();
        let mut expected = self.reseq.released_through() + 1;
        for mut u in self.reseq.offer(seq, utterance) {
            // numbers skipped between releases were discards
            for utt_seq in expected..u.utt_seq {
                self.record(now, Event::UtteranceDiscarded { utt_seq });
            }
            expected = u.utt_seq + 1;
            u.speaker_label = self.speaker_label(&u.track_id);
            match self.transcript.append_utterance(&u) {
                Ok(Some(op)) => {
                    self.record(
                        now,
                        Event::UtteranceAppended {
                            utt_seq: u.utt_seq,
                            track_id: u.track_id.clone(),
                            speaker_label: u.speaker_label.clone(),
                            start_time_s: u.start_time_s,
                            end_time_s: u.end_time_s,
                            words: word_count(&u.text),
                            revision: op.revision,
                        },
                    );
                    self.notify(&EditorUpdate::Applied(op));
                    let fx = self.orch.on_utterance_appended(
                        &self.transcript,
                        &mut self.summary,
                        u.utt_seq,
                    );
                    requests.extend(self.absorb(now, fx));
                }
                Ok(None) => {}
                Err(e) => log::error!("{}: dropping utterance {}: {e}", self.session, u.utt_seq),
            }
        }
        for utt_seq in expected..=self.reseq.released_through() {
            self.record(now, Event::UtteranceDiscarded { utt_seq });
        }
        if let Some(last) = self.end_at {
            self.on_end_of_stream(now, last);
        }
        requests
    }

    /// The stream ends after `last_seq`. Takes effect once every utterance
    /// up to it has been appended or discarded.
    pub fn on_end_of_stream(&mut self, now: f64, last_seq: u64) {
        self.end_at = Some(last_seq);
        if !self.ended && self.reseq.released_through() >= last_seq {
            self.ended = true;
            self.record(now, Event::EndOfStream { last_seq });
        }
    }

    pub fn on_summary_response(&mut self, now: f64, resp: &SummarizeResponse) {
        let fx = self.orch.on_summary_response(&mut self.summary, resp);
        self.absorb(now, fx);
    }

    pub fn request_on_demand(
        &mut self,
        now: f64,
        range: SegmentRange,
    ) -> (u64, Vec<SummarizeRequest>) {
        let (id, fx) = self
            .orch
            .request_on_demand(&self.transcript, &mut self.summary, range);
        (id, self.absorb(now, fx))
    }

    /// Applies a client edit. System authorship cannot be claimed here.
    pub fn apply_user_edit(&mut self, now: f64, op: EditOp) -> Result<AppliedOp, DocError> {
        if op.author.is_system() {
            return Err(DocError::Malformed("clients may not edit as system".into()));
        }
        let base_revision = op.base_revision;
        let doc_id = op.doc_id;
        let author = op.author.clone();
        let result = match doc_id {
            DocId::Transcript => self
                .transcript
                .apply_edit(op)
                .map(|a| (a, Effects::default())),
            DocId::Summary => self.apply_summary_edit(op),
        };
        match result {
            Ok((applied, fx)) => {
                self.record(
                    now,
                    Event::UserEdit {
                        doc_id,
                        author,
                        base_revision,
                        revision: applied.revision,
                    },
                );
                self.notify(&EditorUpdate::Applied(applied.clone()));
                if doc_id == DocId::Transcript && !applied.components.is_noop() {
                    self.orch.note_transcript_edit(now);
                }
                self.absorb(now, fx);
                Ok(applied)
            }
            Err(e) => {
                self.record(
                    now,
                    Event::EditRejected {
                        doc_id,
                        author,
                        error: e.to_string(),
                    },
                );
                Err(e)
            }
        }
    }

    fn apply_summary_edit(&mut self, op: EditOp) -> Result<(AppliedOp, Effects), DocError> {
        let author = op.author.clone();
        let rebased = self.summary.rebase(&op)?;
        let before = self.summary.lines().to_vec();
        let touched = self.summary.content().touched_lines(&rebased);
        let applied = self.summary.apply_at_head(rebased, author.clone())?;
        let fx = self
            .orch
            .on_summary_edit(&before, &touched, &self.summary, &author);
        Ok((applied, fx))
    }

    /// Runs the debounced re-summarization check if it is due.
    pub fn tick(&mut self, now: f64) -> Vec<SummarizeRequest> {
        let fx = self.orch.tick(now, &self.transcript, &mut self.summary);
        self.absorb(now, fx)
    }
}
