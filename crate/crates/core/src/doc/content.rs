//! Document value and operation application.
//!
//! A line's attributes ride on its terminating newline character: editing
//! text within the line keeps them, deleting the newline drops them, and a
//! newline introduced by an insert carries that insert's attributes. Because
//! attributes belong to characters, two concurrent operations converge on
//! attributes as well as on text.

use std::collections::BTreeSet;

use super::ops::{char_len, Component, Operation};
use super::{Author, DocError, Line, LineAttrs};

/// Lines plus an optional unterminated tail. Stored documents always have an
/// empty tail; the tail exists so raw operation results can be represented.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Content {
    pub lines: Vec<Line>,
    pub tail: String,
}

fn byte_offset(s: &str, nth_char: usize) -> usize {
    s.char_indices().nth(nth_char).map_or(s.len(), |(i, _)| i)
}

struct Builder<'a> {
    author: &'a Author,
    lines: Vec<Line>,
    cur: String,
    // the output line under construction differs from any source line
    touched: bool,
    // something was retained or inserted into the output line
    started: bool,
}

impl Builder<'_> {
    fn close(&mut self, attrs: LineAttrs, source_author: Option<Author>) {
        let author = match source_author {
            Some(a) if !self.touched => a,
            _ => self.author.clone(),
        };
        self.lines.push(Line {
            text: std::mem::take(&mut self.cur),
            attrs,
            author,
        });
        self.touched = false;
        self.started = false;
    }
}

impl Content {
    pub fn from_lines(lines: Vec<Line>) -> Self {
        Self {
            lines,
            tail: String::new(),
        }
    }

    pub fn len_chars(&self) -> usize {
        self.lines
            .iter()
            .map(|l| char_len(&l.text) + 1)
            .sum::<usize>()
            + char_len(&self.tail)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&l.text);
            out.push('\n');
        }
        out.push_str(&self.tail);
        out
    }

    /// Applies `op`, consuming the old value. `author` is recorded on every
    /// line whose content the operation changes.
    pub fn apply(self, op: &Operation, author: &Author) -> Result<Content, DocError> {
        let len = self.len_chars();
        if op.base_len() != len {
            return Err(DocError::LengthMismatch {
                expected: len,
                got: op.base_len(),
            });
        }
        let mut out = Builder {
            author,
            lines: Vec::with_capacity(self.lines.len() + 1),
            cur: String::new(),
            touched: false,
            started: false,
        };
        let mut src = self.lines.into_iter();
        let mut current = src.next();
        let mut off = 0usize;
        let tail = self.tail;
        let mut tail_off = 0usize;

        for comp in op.components() {
            match comp {
                Component::Insert { insert, attrs } => {
                    let mut parts = insert.split('\n').peekable();
                    while let Some(part) = parts.next() {
                        out.cur.push_str(part);
                        if !part.is_empty() {
                            out.touched = true;
                            out.started = true;
                        }
                        if parts.peek().is_some() {
                            out.touched = true;
                            out.close(*attrs, None);
                        }
                    }
                }
                Component::Retain { retain: n } | Component::Delete { delete: n } => {
                    let deleting = matches!(comp, Component::Delete { .. });
                    let mut n = *n;
                    while n > 0 {
                        if let Some(line) = current.as_ref() {
                            let rest = &line.text[off..];
                            let rest_chars = char_len(rest);
                            if n <= rest_chars {
                                let end = byte_offset(rest, n);
                                if deleting {
                                    out.touched = true;
                                } else {
                                    out.cur.push_str(&rest[..end]);
                                    out.started = true;
                                }
                                off += end;
                                break;
                            }
                            // consumes the rest of the line including its newline
                            n -= rest_chars + 1;
                            let line = current.take().expect("checked above");
                            if deleting {
                                // with nothing built yet the whole source line
                                // vanished and the next output line starts fresh;
                                // otherwise the output line runs into the next one
                                out.touched = out.started;
                            } else if off == 0 && !out.started && !out.touched {
                                out.lines.push(line);
                            } else {
                                out.cur.push_str(&line.text[off..]);
                                out.close(line.attrs, Some(line.author));
                            }
                            current = src.next();
                            off = 0;
                        } else {
                            let rest = &tail[tail_off..];
                            let end = byte_offset(rest, n);
                            if end == rest.len() && char_len(rest) < n {
                                return Err(DocError::Malformed(
                                    "operation overruns document".into(),
                                ));
                            }
                            if deleting {
                                out.touched = true;
                            } else {
                                out.cur.push_str(&rest[..end]);
                                out.started = true;
                            }
                            tail_off += end;
                            n = 0;
                        }
                    }
                }
            }
        }
        debug_assert!(current.is_none() && tail_off == tail.len());
        Ok(Content {
            lines: out.lines,
            tail: out.cur,
        })
    }

    /// Turns a non-empty tail into a final line with no attributes.
    pub fn terminate_tail(&mut self, author: &Author) -> bool {
        if self.tail.is_empty() {
            return false;
        }
        self.lines.push(Line {
            text: std::mem::take(&mut self.tail),
            attrs: LineAttrs::default(),
            author: author.clone(),
        });
        true
    }

    /// Start offset (in chars) of every line, plus the tail start.
    pub fn line_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.lines.len() + 1);
        let mut pos = 0;
        for l in &self.lines {
            starts.push(pos);
            pos += char_len(&l.text) + 1;
        }
        starts.push(pos);
        starts
    }

    /// Indices of lines (in this document, before applying `op`) whose
    /// characters `op` deletes or inserts into. An insert made exactly at a
    /// line start that ends with a newline only adds lines above and does not
    /// count. The tail, if touched, is reported as index `lines.len()`.
    pub fn touched_lines(&self, op: &Operation) -> BTreeSet<usize> {
        let starts = self.line_starts();
        let n_lines = self.lines.len();
        let total = self.len_chars();
        // line containing char position p (p < total)
        let line_of = |p: usize| -> usize {
            match starts[..n_lines].binary_search(&p) {
                Ok(i) => i,
                Err(i) => i.saturating_sub(1),
            }
            .min(n_lines)
        };
        let line_of_pos = |p: usize| -> usize {
            if p >= starts[n_lines] {
                n_lines
            } else {
                line_of(p)
            }
        };
        let mut touched = BTreeSet::new();
        let mut pos = 0usize;
        for comp in op.components() {
            match comp {
                Component::Retain { retain } => pos += retain,
                Component::Delete { delete } => {
                    let first = line_of_pos(pos);
                    let last = line_of_pos(pos + delete - 1);
                    touched.extend(first..=last);
                    pos += delete;
                }
                Component::Insert { insert, .. } => {
                    if pos >= total && self.tail.is_empty() {
                        continue;
                    }
                    let line = line_of_pos(pos);
                    let at_start = line < n_lines && starts[line] == pos;
                    if !(at_start && insert.ends_with('\n')) {
                        touched.insert(line);
                    }
                }
            }
        }
        touched
    }
}
