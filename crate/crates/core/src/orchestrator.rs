//! Summary point lifecycle: auto trigger, on-demand points, edit-driven
//! re-summarization and freezing.
//!
//! The orchestrator owns no documents. Each call receives the session's
//! transcript and summary pads and reports what it did as [`Effects`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::audio::SessionId;
use crate::doc::{word_count, AppliedOp, Author, DocError, Line, LineAttrs, LineDoc, SegmentRange};
use crate::events::{DiscardReason, Event, RequestReason};
use crate::wire::{SummarizeRequest, SummarizeResponse};

pub const PLACEHOLDER: &str = "[summarizing…]";
pub const UPDATING_SUFFIX: &str = " [updating…]";
pub const NO_MATCHING_LINES: &str = "[no matching transcript lines]";
pub const DEFAULT_DEBOUNCE_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    Auto,
    OnDemand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointState {
    Pending,
    Generated,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub summary_id: u64,
    pub kind: PointKind,
    pub range: SegmentRange,
    pub state: PointState,
    /// Text of the point's pad line as last seen; empty once a user deletes it.
    pub text: String,
    pub source_snapshot: String,
    pub request_seq: u64,
}

/// What a call did: requests to publish, summary pad ops, log entries.
#[derive(Debug, Default)]
pub struct Effects {
    pub requests: Vec<SummarizeRequest>,
    pub summary_ops: Vec<AppliedOp>,
    pub events: Vec<Event>,
}

impl Effects {
    pub fn extend(&mut self, other: Effects) {
        self.requests.extend(other.requests);
        self.summary_ops.extend(other.summary_ops);
        self.events.extend(other.events);
    }
}

#[derive(Debug, Clone)]
pub struct Orchestrator {
    session: SessionId,
    threshold: u32,
    debounce_s: f64,
    last_summarized_seq: u64,
    points: BTreeMap<u64, SummaryPoint>,
    next_summary_id: u64,
    last_request_seq: u64,
    in_flight: BTreeSet<u64>,
    resummarize_at: Option<f64>,
}

impl Orchestrator {
    pub fn new(session: SessionId, chunk_length_words: u32) -> Self {
        Self {
            session,
            threshold: chunk_length_words,
            debounce_s: DEFAULT_DEBOUNCE_S,
            last_summarized_seq: 0,
            points: BTreeMap::new(),
            next_summary_id: 1,
            last_request_seq: 0,
            in_flight: BTreeSet::new(),
            resummarize_at: None,
        }
    }

    pub fn with_debounce(mut self, seconds: f64) -> Self {
        self.debounce_s = seconds;
        self
    }

    pub fn debounce_s(&self) -> f64 {
        self.debounce_s
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    /// Only later trigger evaluations see the new value.
    pub fn set_threshold(&mut self, chunk_length_words: u32) {
        self.threshold = chunk_length_words;
    }

    pub fn last_summarized_seq(&self) -> u64 {
        self.last_summarized_seq
    }

    pub fn points(&self) -> impl Iterator<Item = &SummaryPoint> {
        self.points.values()
    }

    pub fn point(&self, summary_id: u64) -> Option<&SummaryPoint> {
        self.points.get(&summary_id)
    }

    /// Requests issued whose response has not arrived yet.
    pub fn outstanding_requests(&self) -> usize {
        self.in_flight.len()
    }

    /// Virtual time at which the pending re-summarization check runs.
    pub fn next_deadline(&self) -> Option<f64> {
        self.resummarize_at
    }

    fn request(
        &mut self,
        summary_id: u64,
        segment_text: String,
        reason: RequestReason,
        fx: &mut Effects,
    ) {
        self.last_request_seq += 1;
        let request_seq = self.last_request_seq;
        let point = self.points.get_mut(&summary_id).expect("point exists");
        point.request_seq = request_seq;
        point.state = PointState::Pending;
        self.in_flight.insert(request_seq);
        fx.events.push(Event::SummarizeRequested {
            summary_id,
            request_seq,
            reason,
            words: word_count(&segment_text),
        });
        fx.requests.push(SummarizeRequest {
            session: self.session.clone(),
            summary_id,
            request_seq,
            segment_text,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn create_point(
        &mut self,
        kind: PointKind,
        range: SegmentRange,
        snapshot: String,
        text: &str,
        state: PointState,
        summary: &mut LineDoc,
        fx: &mut Effects,
    ) -> u64 {
        let summary_id = self.next_summary_id;
        self.next_summary_id += 1;
        fx.summary_ops
            .push(summary.append_line(text, LineAttrs::summary(summary_id)));
        fx.events.push(Event::PointCreated {
            summary_id,
            kind,
            start_seq: range.start_seq,
            end_seq: range.end_seq,
            words: word_count(&snapshot),
        });
        self.points.insert(
            summary_id,
            SummaryPoint {
                summary_id,
                kind,
                range,
                state,
                text: text.to_string(),
                source_snapshot: snapshot,
                request_seq: 0,
            },
        );
        summary_id
    }

    /// Auto trigger, evaluated after an utterance line was appended.
    pub fn on_utterance_appended(
        &mut self,
        transcript: &LineDoc,
        summary: &mut LineDoc,
        new_utt_seq: u64,
    ) -> Effects {
        let mut fx = Effects::default();
        if new_utt_seq <= self.last_summarized_seq {
            return fx;
        }
        let range = SegmentRange::new(self.last_summarized_seq + 1, new_utt_seq)
            .expect("start is at least 1 and not past the end");
        let segment = transcript.extract_segment(range);
        if word_count(&segment.text) < self.threshold as usize {
            return fx;
        }
        let id = self.create_point(
            PointKind::Auto,
            range,
            segment.text.clone(),
            PLACEHOLDER,
            PointState::Pending,
            summary,
            &mut fx,
        );
        self.request(id, segment.text, RequestReason::Initial, &mut fx);
        self.last_summarized_seq = new_utt_seq;
        fx
    }

    /// Adds a point for a user-selected range. Never moves the auto cursor.
    pub fn request_on_demand(
        &mut self,
        transcript: &LineDoc,
        summary: &mut LineDoc,
        range: SegmentRange,
    ) -> (u64, Effects) {
        let mut fx = Effects::default();
        let segment = transcript.extract_segment(range);
        if segment.is_empty() {
            let id = self.create_point(
                PointKind::OnDemand,
                range,
                String::new(),
                NO_MATCHING_LINES,
                PointState::Generated,
                summary,
                &mut fx,
            );
            return (id, fx);
        }
        let id = self.create_point(
            PointKind::OnDemand,
            range,
            segment.text.clone(),
            PLACEHOLDER,
            PointState::Pending,
            summary,
            &mut fx,
        );
        self.request(id, segment.text, RequestReason::Initial, &mut fx);
        (id, fx)
    }

    pub fn on_summary_response(
        &mut self,
        summary: &mut LineDoc,
        resp: &SummarizeResponse,
    ) -> Effects {
        let mut fx = Effects::default();
        let known = self.in_flight.remove(&resp.request_seq);
        let discard = |reason| Event::ResponseDiscarded {
            summary_id: resp.summary_id,
            request_seq: resp.request_seq,
            reason,
        };
        let Some(point) = self.points.get_mut(&resp.summary_id) else {
            log::warn!("response for unknown summary point {}", resp.summary_id);
            fx.events.push(discard(DiscardReason::Unknown));
            return fx;
        };
        if point.state == PointState::Frozen {
            fx.events.push(discard(DiscardReason::Frozen));
            return fx;
        }
        if resp.request_seq != point.request_seq {
            let reason = if resp.request_seq < point.request_seq && resp.request_seq > 0 {
                DiscardReason::Stale
            } else {
                DiscardReason::Unknown
            };
            fx.events.push(discard(reason));
            return fx;
        }
        if point.state == PointState::Generated && !known {
            // redelivery of a response that was already applied
            fx.events.push(discard(DiscardReason::Duplicate));
            return fx;
        }
        let text = crate::doc::sanitize_line(&resp.summary_text);
        if let Some(idx) = summary.find_summary_line(point.summary_id) {
            if let Some(op) = summary.replace_line_text(idx, &text, Author::System) {
                fx.summary_ops.push(op);
            }
        }
        point.text = text;
        point.state = PointState::Generated;
        fx.events.push(Event::ResponseApplied {
            summary_id: resp.summary_id,
            request_seq: resp.request_seq,
        });
        fx
    }

    /// A user changed the transcript at `now`; the check runs once edits
    /// have been quiet for the debounce window.
    pub fn note_transcript_edit(&mut self, now: f64) {
        self.resummarize_at = Some(now + self.debounce_s);
    }

    /// Runs the re-summarization check if its deadline has passed.
    pub fn tick(&mut self, now: f64, transcript: &LineDoc, summary: &mut LineDoc) -> Effects {
        match self.resummarize_at {
            Some(at) if at <= now => {
                self.resummarize_at = None;
                self.resummarize_changed(transcript, summary)
            }
            _ => Effects::default(),
        }
    }

    /// Re-extracts every non-frozen point and requests a new summary for
    /// those whose source text changed.
    pub fn resummarize_changed(&mut self, transcript: &LineDoc, summary: &mut LineDoc) -> Effects {
        let mut fx = Effects::default();
        let ids: Vec<u64> = self
            .points
            .values()
            .filter(|p| p.state != PointState::Frozen)
            .map(|p| p.summary_id)
            .collect();
        for id in ids {
            let point = &self.points[&id];
            let segment = transcript.extract_segment(point.range);
            if segment.text == point.source_snapshot {
                continue;
            }
            let still_placeholder = point.state == PointState::Pending
                && (point.text == PLACEHOLDER || point.text.ends_with(UPDATING_SUFFIX));
            if !still_placeholder && !point.text.ends_with(UPDATING_SUFFIX) {
                let marked = format!("{}{UPDATING_SUFFIX}", point.text);
                if let Some(idx) = summary.find_summary_line(id) {
                    if let Some(op) = summary.replace_line_text(idx, &marked, Author::System) {
                        fx.summary_ops.push(op);
                    }
                }
                self.points.get_mut(&id).expect("listed above").text = marked;
            }
            self.points
                .get_mut(&id)
                .expect("listed above")
                .source_snapshot = segment.text.clone();
            self.request(id, segment.text, RequestReason::TranscriptEdited, &mut fx);
        }
        fx
    }

    /// Freezes points after a user edit of the summary pad.
    ///
    /// `before` are the pad lines the edit was applied to and `touched` the
    /// indices (into `before`) of lines whose characters it deleted or
    /// inserted into. Points whose line text changed or vanished are frozen
    /// too, which covers lines joined into a neighbour.
    pub fn on_summary_edit(
        &mut self,
        before: &[Line],
        touched: &BTreeSet<usize>,
        summary: &LineDoc,
        author: &Author,
    ) -> Effects {
        let mut fx = Effects::default();
        if author.is_system() {
            return fx;
        }
        let mut hit: BTreeSet<u64> = touched
            .iter()
            .filter_map(|&i| before.get(i).and_then(|l| l.attrs.summary_id))
            .collect();
        let now: BTreeMap<u64, &str> = summary
            .lines()
            .iter()
            .filter_map(|l| l.attrs.summary_id.map(|id| (id, l.text.as_str())))
            .collect();
        for line in before {
            if let Some(id) = line.attrs.summary_id {
                if now.get(&id) != Some(&line.text.as_str()) {
                    hit.insert(id);
                }
            }
        }
        for id in hit {
            let Some(point) = self.points.get_mut(&id) else {
                continue;
            };
            point.text = now.get(&id).map_or_else(String::new, |t| t.to_string());
            if point.state != PointState::Frozen {
                point.state = PointState::Frozen;
                fx.events.push(Event::PointFrozen {
                    summary_id: id,
                    author: author.clone(),
                });
            }
        }
        fx
    }
}

/// Checks that the auto points partition `1..=last_summarized_seq`.
pub fn auto_ranges_partition(orch: &Orchestrator) -> Result<(), DocError> {
    let mut next = 1;
    for p in orch.points().filter(|p| p.kind == PointKind::Auto) {
        if p.range.start_seq != next {
            return Err(DocError::InvalidRange {
                start_seq: p.range.start_seq,
                end_seq: p.range.end_seq,
            });
        }
        next = p.range.end_seq + 1;
    }
    if next != orch.last_summarized_seq() + 1 {
        return Err(DocError::InvalidRange {
            start_seq: next,
            end_seq: orch.last_summarized_seq(),
        });
    }
    Ok(())
}
