//! Revisioned, line-attributed documents (the transcript and summary pads).
//!
//! The server is authoritative: every accepted operation is transformed
//! against everything applied since its base revision, applied, and logged
//! under the next revision number.

mod content;
mod ops;
mod segment;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use content::Content;
pub use ops::{transform, Component, Operation};
pub use segment::{extract_segment, word_count, Segment, SegmentRange};

use crate::asr::Utterance;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error("operation expects document length {got}, document has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("base revision {base} is ahead of current revision {current}")]
    FutureRevision { base: u64, current: u64 },
    #[error("malformed operation: {0}")]
    Malformed(String),
    #[error("user edits may not set line attributes")]
    AttributesNotAllowed,
    #[error("operation targets {got}, not {expected}")]
    WrongDocument { expected: DocId, got: DocId },
    #[error("utterance {seq} arrived after {max}")]
    OutOfOrder { seq: u64, max: u64 },
    #[error("invalid segment range ({start_seq}, {end_seq})")]
    InvalidRange { start_seq: u64, end_seq: u64 },
}

/// Who made an edit. Serialized as `"system"` or the user id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Author {
    System,
    User(String),
}

pub const SYSTEM_AUTHOR: &str = "system";

impl Author {
    pub fn user(id: impl Into<String>) -> Self {
        Author::User(id.into())
    }

    pub fn is_system(&self) -> bool {
        matches!(self, Author::System)
    }
}

impl fmt::Display for Author {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Author::System => f.write_str(SYSTEM_AUTHOR),
            Author::User(id) => f.write_str(id),
        }
    }
}

impl Serialize for Author {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Author {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == SYSTEM_AUTHOR {
            Author::System
        } else {
            Author::User(s)
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utt_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_id: Option<u64>,
}

impl LineAttrs {
    pub fn utterance(seq: u64) -> Self {
        Self {
            utt_seq: Some(seq),
            summary_id: None,
        }
    }

    pub fn summary(id: u64) -> Self {
        Self {
            utt_seq: None,
            summary_id: Some(id),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.utt_seq.is_none() && self.summary_id.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Line {
    pub text: String,
    pub attrs: LineAttrs,
    pub author: Author,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocId {
    Transcript,
    Summary,
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocId::Transcript => "transcript",
            DocId::Summary => "summary",
        })
    }
}

/// A client edit, anchored at the revision it was made against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub doc_id: DocId,
    pub base_revision: u64,
    pub author: Author,
    pub components: Operation,
}

/// An operation as applied and logged by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedOp {
    pub doc_id: DocId,
    /// Revision reached by applying this operation.
    pub revision: u64,
    pub components: Operation,
    pub author: Author,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub doc_id: DocId,
    pub revision: u64,
    pub lines: Vec<Line>,
}

/// Renders an utterance as a transcript line: `"<label>:  <text>"`.
pub fn utterance_line(speaker_label: &str, text: &str) -> String {
    format!("{speaker_label}:  {}", sanitize_line(text))
}

pub(crate) fn sanitize_line(text: &str) -> String {
    text.replace(['\r', '\n'], " ")
}

#[derive(Debug, Clone)]
pub struct LineDoc {
    id: DocId,
    content: Content,
    len: usize,
    history: Vec<AppliedOp>,
    appended_seqs: HashSet<u64>,
    max_utt_seq: u64,
}

impl LineDoc {
    pub fn new(id: DocId) -> Self {
        Self {
            id,
            content: Content::default(),
            len: 0,
            history: Vec::new(),
            appended_seqs: HashSet::new(),
            max_utt_seq: 0,
        }
    }

    pub fn id(&self) -> DocId {
        self.id
    }

    pub fn revision(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn lines(&self) -> &[Line] {
        &self.content.lines
    }

    pub fn content(&self) -> &Content {
        &self.content
    }

    pub fn len_chars(&self) -> usize {
        self.len
    }

    pub fn text(&self) -> String {
        self.content.text()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            doc_id: self.id,
            revision: self.revision(),
            lines: self.content.lines.clone(),
        }
    }

    /// Operations that moved the document from `from_revision` to the head.
    pub fn ops_since(&self, from_revision: u64) -> &[AppliedOp] {
        let from = (from_revision as usize).min(self.history.len());
        &self.history[from..]
    }

    fn len_at(&self, revision: u64) -> usize {
        if revision == self.revision() {
            self.len
        } else {
            self.history[revision as usize].components.base_len()
        }
    }

    /// Transforms `op` up to the head revision without applying it.
    pub fn rebase(&self, op: &EditOp) -> Result<Operation, DocError> {
        if op.doc_id != self.id {
            return Err(DocError::WrongDocument {
                expected: self.id,
                got: op.doc_id,
            });
        }
        if op.base_revision > self.revision() {
            return Err(DocError::FutureRevision {
                base: op.base_revision,
                current: self.revision(),
            });
        }
        if !op.author.is_system() && op.components.has_attributed_insert() {
            return Err(DocError::AttributesNotAllowed);
        }
        let expected = self.len_at(op.base_revision);
        if op.components.base_len() != expected {
            return Err(DocError::LengthMismatch {
                expected,
                got: op.components.base_len(),
            });
        }
        let mut current = op.components.clone();
        for applied in self.ops_since(op.base_revision) {
            current = transform(&current, &applied.components)?.0;
        }
        Ok(current)
    }

    /// Applies a (possibly stale) edit. A result that would leave the last
    /// line without its newline gets one appended, and the logged operation
    /// includes that insert.
    pub fn apply_edit(&mut self, op: EditOp) -> Result<AppliedOp, DocError> {
        let rebased = self.rebase(&op)?;
        self.apply_at_head(rebased, op.author)
    }

    /// Applies an operation built against the head revision.
    pub fn apply_at_head(
        &mut self,
        mut op: Operation,
        author: Author,
    ) -> Result<AppliedOp, DocError> {
        if op.base_len() != self.len {
            return Err(DocError::LengthMismatch {
                expected: self.len,
                got: op.base_len(),
            });
        }
        // lengths match, so applying cannot fail part-way
        let old = std::mem::take(&mut self.content);
        let mut next = old
            .apply(&op, &author)
            .expect("operation length was checked against the document");
        if next.terminate_tail(&author) {
            op.insert("\n");
        }
        self.len = op.target_len();
        self.content = next;
        let applied = AppliedOp {
            doc_id: self.id,
            revision: self.revision() + 1,
            components: op,
            author,
        };
        self.history.push(applied.clone());
        debug_assert_eq!(self.len, self.content.len_chars());
        Ok(applied)
    }

    /// Appends a system-authored line at the end.
    pub fn append_line(&mut self, text: &str, attrs: LineAttrs) -> AppliedOp {
        let mut op = Operation::new();
        op.retain(self.len)
            .insert_with(&format!("{}\n", sanitize_line(text)), attrs);
        self.apply_at_head(op, Author::System)
            .expect("append is built against the head")
    }

    /// Appends an utterance line carrying its sequence number.
    ///
    /// A redelivered sequence number is ignored (`Ok(None)`); one lower than
    /// the highest appended so far is rejected.
    pub fn append_utterance(&mut self, u: &Utterance) -> Result<Option<AppliedOp>, DocError> {
        if self.appended_seqs.contains(&u.utt_seq) {
            return Ok(None);
        }
        if u.utt_seq < self.max_utt_seq {
            return Err(DocError::OutOfOrder {
                seq: u.utt_seq,
                max: self.max_utt_seq,
            });
        }
        let applied = self.append_line(
            &utterance_line(&u.speaker_label, &u.text),
            LineAttrs::utterance(u.utt_seq),
        );
        self.appended_seqs.insert(u.utt_seq);
        self.max_utt_seq = u.utt_seq;
        Ok(Some(applied))
    }

    /// Replaces the text of line `index` as `author`. Returns `None` when the
    /// text is already equal.
    pub fn replace_line_text(
        &mut self,
        index: usize,
        text: &str,
        author: Author,
    ) -> Option<AppliedOp> {
        let line = self.content.lines.get(index)?;
        let text = sanitize_line(text);
        if line.text == text {
            return None;
        }
        let start: usize = self.content.lines[..index]
            .iter()
            .map(|l| ops::char_len(&l.text) + 1)
            .sum();
        let old_len = ops::char_len(&line.text);
        let mut op = Operation::new();
        op.retain(start)
            .delete(old_len)
            .insert(&text)
            .retain(self.len - start - old_len);
        self.apply_at_head(op, author).ok()
    }

    pub fn find_summary_line(&self, summary_id: u64) -> Option<usize> {
        self.content
            .lines
            .iter()
            .position(|l| l.attrs.summary_id == Some(summary_id))
    }

    pub fn find_utterance_line(&self, utt_seq: u64) -> Option<usize> {
        self.content
            .lines
            .iter()
            .position(|l| l.attrs.utt_seq == Some(utt_seq))
    }

    pub fn extract_segment(&self, range: SegmentRange) -> Segment {
        extract_segment(&self.content.lines, range)
    }
}
