use std::collections::{BTreeMap, BTreeSet};

use minuteman_core::doc::{Author, Component, DocId, EditOp, Line, Operation, SegmentRange};
use minuteman_core::events::Event;
use minuteman_core::wire::{SummarizeRequest, SummarizeResponse};
use minuteman_core::{Editor, PointState, SessionId, Utterance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const USER: &str = "editor-user";

struct Sim {
    ed: Editor,
    rng: ChaCha8Rng,
    now: f64,
    next_seq: u64,
    pending: Vec<SummarizeRequest>,
}

/// `(start, len)` in chars of every line, newline excluded.
fn spans(lines: &[Line]) -> Vec<(usize, usize)> {
    let mut pos = 0;
    lines
        .iter()
        .map(|l| {
            let len = l.text.chars().count();
            let s = (pos, len);
            pos += len + 1;
            s
        })
        .collect()
}

/// Lines an operation reaches into: a deletion overlapping the line or its
/// newline, a deleted newline just above it (the two lines merge), or an
/// insertion anywhere from its first character to its newline.
fn reached_lines(lines: &[Line], op: &Operation) -> BTreeSet<usize> {
    let spans = spans(lines);
    let mut hit = BTreeSet::new();
    let mut pos = 0;
    for c in op.components() {
        match c {
            Component::Retain { retain } => pos += retain,
            Component::Delete { delete } => {
                for (i, &(s, len)) in spans.iter().enumerate() {
                    if pos < s + len + 1 && s < pos + delete {
                        hit.insert(i);
                        if pos + delete > s + len {
                            hit.insert(i + 1);
                        }
                    }
                }
                pos += delete;
            }
            Component::Insert { .. } => {
                for (i, &(s, len)) in spans.iter().enumerate() {
                    if s <= pos && pos <= s + len {
                        hit.insert(i);
                    }
                }
            }
        }
    }
    hit
}

fn frozen(ed: &Editor) -> BTreeMap<u64, Option<String>> {
    let summary = ed.doc(DocId::Summary);
    ed.orchestrator()
        .points()
        .filter(|p| p.state == PointState::Frozen)
        .map(|p| {
            let line = summary
                .find_summary_line(p.summary_id)
                .map(|i| summary.lines()[i].text.clone());
            (p.summary_id, line)
        })
        .collect()
}

fn line_texts(lines: &[Line]) -> BTreeMap<u64, String> {
    lines
        .iter()
        .filter_map(|l| l.attrs.summary_id.map(|id| (id, l.text.clone())))
        .collect()
}

impl Sim {
    fn new(seed: u64) -> Self {
        Self {
            ed: Editor::new(SessionId("s1".into()), 10).with_debounce(2.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0.0,
            next_seq: 1,
            pending: Vec::new(),
        }
    }

    fn append(&mut self) {
        let n = self.rng.random_range(3..9);
        let text = (0..n)
            .map(|j| format!("word{j}"))
            .collect::<Vec<_>>()
            .join(" ");
        let seq = self.next_seq;
        self.next_seq += 1;
        let u = Utterance {
            utt_seq: seq,
            track_id: if self.rng.random_bool(0.5) {
                "t1"
            } else {
                "t2"
            }
            .into(),
            speaker_label: String::new(),
            text,
            start_time_s: self.now,
            end_time_s: self.now + 1.0,
        };
        let reqs = self.ed.on_utterance(self.now, seq, Some(u));
        self.pending.extend(reqs);
    }

    fn respond(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let i = self.rng.random_range(0..self.pending.len());
        // sometimes keep it around to redeliver later
        let req = if self.rng.random_bool(0.7) {
            self.pending.swap_remove(i)
        } else {
            self.pending[i].clone()
        };
        let resp = SummarizeResponse {
            session: req.session.clone(),
            summary_id: req.summary_id,
            request_seq: req.request_seq,
            summary_text: format!("summary of request {}", req.request_seq),
        };
        self.ed.on_summary_response(self.now, &resp);
    }

    fn on_demand(&mut self) {
        let top = self.next_seq.max(2);
        let s = self.rng.random_range(1..top);
        let e = self.rng.random_range(s..top + 1);
        let (_, reqs) = self
            .ed
            .request_on_demand(self.now, SegmentRange::new(s, e).unwrap());
        self.pending.extend(reqs);
    }

    fn tick(&mut self) {
        self.now += self.rng.random_range(0.0..3.0);
        let reqs = self.ed.tick(self.now);
        self.pending.extend(reqs);
    }

    fn transcript_edit(&mut self) {
        let doc = self.ed.doc(DocId::Transcript);
        let sp = spans(doc.lines());
        if sp.is_empty() {
            return;
        }
        let (s, len) = sp[self.rng.random_range(0..sp.len())];
        let total = doc.len_chars();
        let mut op = Operation::new();
        op.retain(s + len)
            .insert(" amended")
            .retain(total - s - len);
        let edit = EditOp {
            doc_id: DocId::Transcript,
            base_revision: doc.revision(),
            author: Author::user(USER),
            components: op,
        };
        self.ed
            .apply_user_edit(self.now, edit)
            .expect("valid transcript edit");
    }

    /// A random user edit of the summary pad, built against its head.
    fn summary_op(&mut self) -> Operation {
        let doc = self.ed.doc(DocId::Summary);
        let sp = spans(doc.lines());
        let total = doc.len_chars();
        let mut op = Operation::new();
        if sp.is_empty() || self.rng.random_bool(0.1) {
            op.retain(total).insert("my own note\n");
            return op;
        }
        let i = self.rng.random_range(0..sp.len());
        let (s, len) = sp[i];
        match self.rng.random_range(0..5) {
            0 => {
                let at = s + self.rng.random_range(0..=len);
                op.retain(at).insert(" (sic)").retain(total - at);
            }
            1 => {
                op.retain(s).delete(len + 1).retain(total - s - len - 1);
            }
            2 => {
                op.retain(s).insert("inserted above\n").retain(total - s);
            }
            3 => {
                op.retain(s + len).delete(1).retain(total - s - len - 1);
            }
            _ => {
                op.retain(s)
                    .delete(len)
                    .insert("rewritten")
                    .retain(total - s - len);
            }
        }
        op
    }

    fn summary_edit(&mut self) -> Result<(), String> {
        let op = self.summary_op();
        let before_lines = self.ed.doc(DocId::Summary).lines().to_vec();
        let before_frozen = frozen(&self.ed);
        let reached: BTreeSet<u64> = reached_lines(&before_lines, &op)
            .into_iter()
            .filter_map(|i| before_lines.get(i).and_then(|l| l.attrs.summary_id))
            .collect();
        let events_before = self.ed.events().len();
        let edit_dbg = op.clone();
        let edit = EditOp {
            doc_id: DocId::Summary,
            base_revision: self.ed.doc(DocId::Summary).revision(),
            author: Author::user(USER),
            components: op,
        };
        self.ed
            .apply_user_edit(self.now, edit)
            .map_err(|e| e.to_string())?;

        let after = frozen(&self.ed);
        for id in after.keys().filter(|id| !before_frozen.contains_key(id)) {
            if !reached.contains(id) {
                return Err(format!(
                    "point {id} frozen by {edit_dbg:?}, which did not reach its line"
                ));
            }
        }
        let old = line_texts(&before_lines);
        let new = line_texts(self.ed.doc(DocId::Summary).lines());
        for (id, text) in &old {
            if new.get(id) != Some(text) && !after.contains_key(id) {
                return Err(format!("point {id} was edited by a user but is not frozen"));
            }
        }
        for r in &self.ed.events()[events_before..] {
            if let Event::PointFrozen { author, .. } = &r.event {
                if author.is_system() {
                    return Err("freeze attributed to the system".into());
                }
            }
        }
        Ok(())
    }
}

fn run(seed: u64) -> Result<(usize, usize), String> {
    let mut sim = Sim::new(seed);
    let mut freezes = 0;
    let steps = sim.rng.random_range(20..60);
    for step in 0..steps {
        let before = frozen(&sim.ed);
        let kind = sim.rng.random_range(0..10);
        match kind {
            0..=2 => sim.append(),
            3..=4 => sim.respond(),
            5 => sim.on_demand(),
            6 => sim.tick(),
            7 => sim.transcript_edit(),
            _ => sim
                .summary_edit()
                .map_err(|e| format!("seed {seed} step {step}: {e}"))?,
        }
        let after = frozen(&sim.ed);
        if before.keys().any(|id| !after.contains_key(id)) {
            return Err(format!("seed {seed} step {step}: a frozen point thawed"));
        }
        if kind < 8 && after != before {
            return Err(format!(
                "seed {seed} step {step}: system path changed frozen points {before:?} -> {after:?}"
            ));
        }
        freezes += after.len() - before.len();
    }
    // drain everything and confirm nothing frozen moves
    let before = frozen(&sim.ed);
    sim.now += 10.0;
    let reqs = sim.ed.tick(sim.now);
    sim.pending.extend(reqs);
    while !sim.pending.is_empty() {
        sim.respond();
    }
    if frozen(&sim.ed) != before {
        return Err(format!(
            "seed {seed}: final responses changed frozen points"
        ));
    }
    Ok((freezes, steps))
}

pub fn check() -> Result<String, String> {
    let mut freezes = 0;
    let mut steps = 0;
    for seed in 0..1000 {
        let (f, s) = run(seed)?;
        freezes += f;
        steps += s;
    }
    if freezes == 0 {
        return Err("no interleaving froze anything".into());
    }
    Ok(format!(
        "1000 interleavings, {steps} steps, {freezes} freezes all user-caused"
    ))
}
