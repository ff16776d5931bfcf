//! Reference computations written independently of the library code.

use minuteman_core::doc::{Component, Operation};

/// Indices of the lines a segment scan over `seqs` selects for
/// `start..=end`, computed from positions: the segment begins at the first
/// line numbered at least `start` and ends before the first later line
/// numbered above `end`, or just after the first line numbered `end`.
pub fn extract(seqs: &[Option<u64>], start: u64, end: u64) -> Vec<usize> {
    let Some(first) = seqs
        .iter()
        .position(|q| matches!(q, Some(q) if *q >= start))
    else {
        return Vec::new();
    };
    let stop = seqs[first..]
        .iter()
        .position(|q| matches!(q, Some(q) if *q >= end))
        .map(|off| first + off + usize::from(seqs[first + off] == Some(end)))
        .unwrap_or(seqs.len());
    (first..stop).collect()
}

pub fn words(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            n += 1;
        }
    }
    n
}

/// Applies `op` to plain text.
pub fn apply_text(text: &str, op: &Operation) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut pos = 0;
    for c in op.components() {
        match c {
            Component::Retain { retain } => {
                out.extend(&chars[pos..pos + retain]);
                pos += retain;
            }
            Component::Delete { delete } => pos += delete,
            Component::Insert { insert, .. } => out.push_str(insert),
        }
    }
    assert_eq!(pos, chars.len(), "operation does not cover the text");
    out
}

/// A scripted utterance for manifest generation.
#[derive(Debug, Clone)]
pub struct Utt {
    pub track: String,
    pub start_s: u64,
    pub duration_s: u64,
    pub text: String,
}

impl Utt {
    pub fn end_s(&self) -> u64 {
        self.start_s + self.duration_s
    }
}

/// Builds a manifest; each track is labelled with its own id.
pub fn manifest_toml(threshold: u32, utts: &[Utt], extra: &str) -> String {
    let mut tracks: Vec<&str> = utts.iter().map(|u| u.track.as_str()).collect();
    tracks.sort();
    tracks.dedup();
    let mut out = format!("version = 1\nchunk_length_words = {threshold}\n");
    for t in tracks {
        out.push_str(&format!(
            "\n[[tracks]]\ntrack_id = \"{t}\"\nspeaker_label = \"{t}\"\nutterances = [\n"
        ));
        for u in utts.iter().filter(|u| u.track == t) {
            out.push_str(&format!(
                "  {{ start_s = {}, duration_s = {}, text = \"{}\" }},\n",
                u.start_s, u.duration_s, u.text
            ));
        }
        out.push_str("]\n");
    }
    out.push_str(extra);
    out
}

/// Expected transcript order: by end time, then track id.
pub fn append_order(utts: &[Utt]) -> Vec<Utt> {
    let mut v = utts.to_vec();
    v.sort_by(|a, b| (a.end_s(), &a.track).cmp(&(b.end_s(), &b.track)));
    v
}

/// Expected auto points for lines with the given word counts:
/// `(start_seq, end_seq, words)`.
pub fn auto_points(line_words: &[usize], threshold: usize) -> Vec<(u64, u64, usize)> {
    let mut out = Vec::new();
    let mut cursor = 0;
    let mut acc = 0;
    for (i, w) in line_words.iter().enumerate() {
        acc += w;
        if acc >= threshold {
            out.push((cursor as u64 + 1, i as u64 + 1, acc));
            cursor = i + 1;
            acc = 0;
        }
    }
    out
}
