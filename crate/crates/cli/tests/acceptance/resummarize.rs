use std::collections::BTreeMap;

use minuteman_core::doc::{Author, DocId, EditOp, Line, Operation};
use minuteman_core::events::{parse_log, DiscardReason, Event, RequestReason};
use minuteman_core::replay::{replay, Manifest, ReplayOptions};
use minuteman_core::wire::{SummarizeRequest, SummarizeResponse};
use minuteman_core::{Editor, SessionId, Utterance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, Utt};

const DEBOUNCE_S: f64 = 2.0;
const STEPS: [f64; 6] = [0.5, 1.9, 2.0, 2.1, 3.0, 5.0];

fn segment_text(lines: &[Line], start: u64, end: u64) -> String {
    let seqs: Vec<Option<u64>> = lines.iter().map(|l| l.attrs.utt_seq).collect();
    oracle::extract(&seqs, start, end)
        .into_iter()
        .map(|i| lines[i].text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

struct Run {
    ed: Editor,
    rng: ChaCha8Rng,
    /// `summary_id -> (start, end)`
    ranges: BTreeMap<u64, (u64, u64)>,
    /// Source text as of the last request, per point.
    sent: BTreeMap<u64, String>,
    expected: BTreeMap<u64, usize>,
    deadline: Option<f64>,
    original: Vec<String>,
    latest: BTreeMap<u64, u64>,
    pending: Vec<SummarizeRequest>,
}

impl Run {
    fn new(seed: u64) -> Self {
        let mut ed = Editor::new(SessionId("s1".into()), 10).with_debounce(DEBOUNCE_S);
        let mut pending = Vec::new();
        for seq in 1..=12u64 {
            let text = (0..5)
                .map(|j| format!("u{seq}w{j}"))
                .collect::<Vec<_>>()
                .join(" ");
            let u = Utterance {
                utt_seq: seq,
                track_id: "t1".into(),
                speaker_label: String::new(),
                text,
                start_time_s: 0.0,
                end_time_s: 0.0,
            };
            pending.extend(ed.on_utterance(0.0, seq, Some(u)));
        }
        let ranges: BTreeMap<u64, (u64, u64)> = ed
            .orchestrator()
            .points()
            .map(|p| (p.summary_id, (p.range.start_seq, p.range.end_seq)))
            .collect();
        let lines = ed.doc(DocId::Transcript).lines().to_vec();
        let sent = ranges
            .iter()
            .map(|(&id, &(s, e))| (id, segment_text(&lines, s, e)))
            .collect();
        let mut run = Self {
            ed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            expected: ranges.keys().map(|&id| (id, 0)).collect(),
            ranges,
            sent,
            deadline: None,
            original: lines.iter().map(|l| l.text.clone()).collect(),
            latest: BTreeMap::new(),
            pending: Vec::new(),
        };
        run.track(pending);
        // answer the initial requests so edits start from settled lines
        while !run.pending.is_empty() {
            run.deliver(0).expect("initial responses apply");
        }
        run
    }

    fn track(&mut self, reqs: Vec<SummarizeRequest>) {
        for r in &reqs {
            self.latest.insert(r.summary_id, r.request_seq);
        }
        self.pending.extend(reqs);
    }

    /// Runs due checks at `now` and predicts which points get re-requested.
    fn tick(&mut self, now: f64) {
        if let Some(at) = self.deadline {
            if at <= now {
                self.deadline = None;
                let lines = self.ed.doc(DocId::Transcript).lines().to_vec();
                for (&id, &(s, e)) in &self.ranges {
                    let text = segment_text(&lines, s, e);
                    if self.sent[&id] != text {
                        *self.expected.get_mut(&id).unwrap() += 1;
                        self.sent.insert(id, text);
                    }
                }
            }
        }
        let reqs = self.ed.tick(now);
        self.track(reqs);
    }

    fn edit(&mut self, now: f64, kind: u32) {
        let doc = self.ed.doc(DocId::Transcript);
        let lines = doc.lines();
        let i = self.rng.random_range(0..lines.len());
        let start: usize = lines[..i].iter().map(|l| l.text.chars().count() + 1).sum();
        let len = lines[i].text.chars().count();
        let total = doc.len_chars();
        let mut op = Operation::new();
        match kind {
            // a real change at the end of the line
            0 => {
                op.retain(start + len)
                    .insert(" more")
                    .retain(total - start - len);
            }
            // replace a character with itself
            1 => {
                let c = lines[i].text.chars().next().unwrap().to_string();
                op.retain(start)
                    .delete(1)
                    .insert(&c)
                    .retain(total - start - 1);
            }
            // put the line back the way it was appended
            _ => {
                let orig = self.original[i].clone();
                op.retain(start)
                    .delete(len)
                    .insert(&orig)
                    .retain(total - start - len);
            }
        }
        let edit = EditOp {
            doc_id: DocId::Transcript,
            base_revision: doc.revision(),
            author: Author::user("tester"),
            components: op,
        };
        self.ed
            .apply_user_edit(now, edit)
            .expect("edit against head");
        self.deadline = Some(now + DEBOUNCE_S);
    }

    /// Delivers one pending response and checks it was applied only if it
    /// answers the latest request for its point.
    fn deliver(&mut self, step: usize) -> Result<(), String> {
        let i = self.rng.random_range(0..self.pending.len());
        let req = if self.rng.random_bool(0.8) {
            self.pending.swap_remove(i)
        } else {
            self.pending[i].clone()
        };
        let summary = self.ed.doc(DocId::Summary);
        let before = summary
            .find_summary_line(req.summary_id)
            .map(|l| summary.lines()[l].text.clone());
        let reply = format!("reply {}", req.request_seq);
        let events = self.ed.events().len();
        self.ed.on_summary_response(
            0.0,
            &SummarizeResponse {
                session: req.session.clone(),
                summary_id: req.summary_id,
                request_seq: req.request_seq,
                summary_text: reply.clone(),
            },
        );
        let summary = self.ed.doc(DocId::Summary);
        let after = summary
            .find_summary_line(req.summary_id)
            .map(|l| summary.lines()[l].text.clone());
        let latest = self.latest[&req.summary_id] == req.request_seq;
        let applied = self.ed.events()[events..]
            .iter()
            .any(|r| matches!(r.event, Event::ResponseApplied { .. }));
        let fresh = latest && before.as_deref() != Some(reply.as_str());
        if fresh {
            if after.as_deref() != Some(reply.as_str()) || !applied {
                return Err(format!(
                    "step {step}: latest response {} not applied",
                    req.request_seq
                ));
            }
        } else if after != before || applied {
            return Err(format!(
                "step {step}: response {} for point {} changed the pad though request {} is newer or already applied",
                req.request_seq, req.summary_id, self.latest[&req.summary_id]
            ));
        }
        Ok(())
    }

    fn counted(&self) -> BTreeMap<u64, usize> {
        let mut n: BTreeMap<u64, usize> = self.ranges.keys().map(|&id| (id, 0)).collect();
        for r in self.ed.events() {
            if let Event::SummarizeRequested {
                summary_id,
                reason: RequestReason::TranscriptEdited,
                ..
            } = r.event
            {
                *n.entry(summary_id).or_default() += 1;
            }
        }
        n
    }
}

/// `noop_only` restricts edits to self-replacements.
fn random_run(seed: u64, noop_only: bool) -> Result<usize, String> {
    let mut run = Run::new(seed);
    let mut now = 0.0;
    for step in 0..40 {
        now += STEPS[run.rng.random_range(0..STEPS.len())];
        run.tick(now);
        let kind = if noop_only {
            1
        } else {
            run.rng.random_range(0..3)
        };
        run.edit(now, kind);
        while !run.pending.is_empty() && run.rng.random_bool(0.5) {
            run.deliver(step).map_err(|e| format!("seed {seed}: {e}"))?;
        }
    }
    run.tick(now + 10.0);
    while !run.pending.is_empty() {
        run.deliver(usize::MAX)
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }
    let got = run.counted();
    if got != run.expected {
        return Err(format!(
            "seed {seed}: re-requests per point {got:?}, oracle {:?}",
            run.expected
        ));
    }
    let stale = run.ed.events().iter().any(|r| {
        matches!(
            r.event,
            Event::ResponseDiscarded {
                reason: DiscardReason::Stale,
                ..
            }
        )
    });
    if noop_only && got.values().any(|&n| n > 0) {
        return Err(format!(
            "seed {seed}: self-replacements caused requests {got:?}"
        ));
    }
    Ok(got.values().sum::<usize>() + usize::from(stale))
}

fn replay_requests(with: &str) -> Result<usize, String> {
    let utts = vec![
        Utt {
            track: "t1".into(),
            start_s: 0,
            duration_s: 4,
            text: "a different DHCP server named care so we can try it".into(),
        },
        Utt {
            track: "t2".into(),
            start_s: 5,
            duration_s: 3,
            text: "sure we will set it up on the lab machine tomorrow".into(),
        },
    ];
    let extra = format!(
        "\n[[actions]]\nat_s = 12\naction = \"edit\"\ndoc = \"transcript\"\nop = \"replace\"\nfind = \"named care\"\nwith = \"{with}\"\n"
    );
    let manifest =
        Manifest::parse(&oracle::manifest_toml(10, &utts, &extra)).map_err(|e| e.to_string())?;
    let out = replay(&manifest, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    let log = parse_log(&out.events).map_err(|e| e.to_string())?;
    Ok(log
        .iter()
        .filter(|r| {
            matches!(
                r.event,
                Event::SummarizeRequested {
                    reason: RequestReason::TranscriptEdited,
                    ..
                }
            )
        })
        .count())
}

pub fn check() -> Result<String, String> {
    let mut requests = 0;
    for seed in 0..200 {
        requests += random_run(seed, false)?;
    }
    for seed in 1000..1050 {
        random_run(seed, true)?;
    }
    let kea = replay_requests("named Kea")?;
    if kea != 1 {
        return Err(format!("care -> Kea caused {kea} re-requests, expected 1"));
    }
    let same = replay_requests("named care")?;
    if same != 0 {
        return Err(format!(
            "care -> care caused {same} re-requests, expected 0"
        ));
    }
    Ok(format!(
        "200 edit sequences match the debounce oracle ({requests} re-requests), 50 no-op sequences and care -> care request nothing, care -> Kea requests once"
    ))
}
