//! Character-based retain/insert/delete operations and their transform.
//!
//! Lengths count Unicode scalar values; line breaks are `'\n'` characters
//! like any other. An insert may carry [`LineAttrs`], which are attached to
//! every newline it inserts.

use serde::{Deserialize, Serialize};

use super::{DocError, LineAttrs};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Retain {
        retain: usize,
    },
    Delete {
        delete: usize,
    },
    Insert {
        insert: String,
        #[serde(default, skip_serializing_if = "LineAttrs::is_empty")]
        attrs: LineAttrs,
    },
}

pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// A sequence of components covering a whole document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Component>", into = "Vec<Component>")]
pub struct Operation {
    components: Vec<Component>,
    base_len: usize,
    target_len: usize,
}

impl From<Vec<Component>> for Operation {
    fn from(components: Vec<Component>) -> Self {
        let mut op = Operation::default();
        for c in components {
            op.push(c);
        }
        op
    }
}

impl From<Operation> for Vec<Component> {
    fn from(op: Operation) -> Self {
        op.components
    }
}

impl Operation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Length of the document this operation applies to.
    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// Length of the document after applying it.
    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn is_noop(&self) -> bool {
        self.components
            .iter()
            .all(|c| matches!(c, Component::Retain { .. }))
    }

    pub fn push(&mut self, c: Component) -> &mut Self {
        match c {
            Component::Retain { retain } => self.retain(retain),
            Component::Delete { delete } => self.delete(delete),
            Component::Insert { insert, attrs } => self.insert_with(&insert, attrs),
        }
    }

    pub fn retain(&mut self, n: usize) -> &mut Self {
        if n == 0 {
            return self;
        }
        self.base_len += n;
        self.target_len += n;
        if let Some(Component::Retain { retain }) = self.components.last_mut() {
            *retain += n;
        } else {
            self.components.push(Component::Retain { retain: n });
        }
        self
    }

    pub fn delete(&mut self, n: usize) -> &mut Self {
        if n == 0 {
            return self;
        }
        self.base_len += n;
        if let Some(Component::Delete { delete }) = self.components.last_mut() {
            *delete += n;
        } else {
            self.components.push(Component::Delete { delete: n });
        }
        self
    }

    pub fn insert(&mut self, text: &str) -> &mut Self {
        self.insert_with(text, LineAttrs::default())
    }

    /// Inserts keep canonical order: an insert directly after a delete is
    /// placed before it (same effect, easier comparison).
    pub fn insert_with(&mut self, text: &str, attrs: LineAttrs) -> &mut Self {
        if text.is_empty() {
            return self;
        }
        self.target_len += char_len(text);
        let n = self.components.len();
        let slot = if matches!(self.components.last(), Some(Component::Delete { .. })) {
            n - 1
        } else {
            n
        };
        if slot > 0 {
            if let Component::Insert {
                insert,
                attrs: prev,
            } = &mut self.components[slot - 1]
            {
                if *prev == attrs {
                    insert.push_str(text);
                    return self;
                }
            }
        }
        self.components.insert(
            slot,
            Component::Insert {
                insert: text.to_string(),
                attrs,
            },
        );
        self
    }

    pub fn has_attributed_insert(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c, Component::Insert { attrs, .. } if !attrs.is_empty()))
    }
}

/// Transforms two operations made against the same document.
///
/// Returns `(a', b')` with `apply(apply(d, a), b') == apply(apply(d, b), a')`.
/// On inserts at the same position, `a`'s text ends up first.
pub fn transform(a: &Operation, b: &Operation) -> Result<(Operation, Operation), DocError> {
    if a.base_len != b.base_len {
        return Err(DocError::LengthMismatch {
            expected: b.base_len,
            got: a.base_len,
        });
    }
    let mut a_prime = Operation::new();
    let mut b_prime = Operation::new();
    let mut ia = a.components.iter().cloned();
    let mut ib = b.components.iter().cloned();
    let mut ca = ia.next();
    let mut cb = ib.next();
    loop {
        match (ca.take(), cb.take()) {
            (None, None) => break,
            (Some(Component::Insert { insert, attrs }), other) => {
                b_prime.retain(char_len(&insert));
                a_prime.insert_with(&insert, attrs);
                ca = ia.next();
                cb = other;
            }
            (other, Some(Component::Insert { insert, attrs })) => {
                a_prime.retain(char_len(&insert));
                b_prime.insert_with(&insert, attrs);
                ca = other;
                cb = ib.next();
            }
            (None, _) | (_, None) => {
                return Err(DocError::Malformed(
                    "operations cover different lengths".into(),
                ))
            }
            (Some(Component::Retain { retain: i }), Some(Component::Retain { retain: j })) => {
                let m = i.min(j);
                a_prime.retain(m);
                b_prime.retain(m);
                (ca, cb) = split_rest(
                    i,
                    j,
                    |n| Component::Retain { retain: n },
                    |n| Component::Retain { retain: n },
                );
                ca = ca.or_else(|| ia.next());
                cb = cb.or_else(|| ib.next());
            }
            (Some(Component::Delete { delete: i }), Some(Component::Delete { delete: j })) => {
                (ca, cb) = split_rest(
                    i,
                    j,
                    |n| Component::Delete { delete: n },
                    |n| Component::Delete { delete: n },
                );
                ca = ca.or_else(|| ia.next());
                cb = cb.or_else(|| ib.next());
            }
            (Some(Component::Delete { delete: i }), Some(Component::Retain { retain: j })) => {
                a_prime.delete(i.min(j));
                (ca, cb) = split_rest(
                    i,
                    j,
                    |n| Component::Delete { delete: n },
                    |n| Component::Retain { retain: n },
                );
                ca = ca.or_else(|| ia.next());
                cb = cb.or_else(|| ib.next());
            }
            (Some(Component::Retain { retain: i }), Some(Component::Delete { delete: j })) => {
                b_prime.delete(i.min(j));
                (ca, cb) = split_rest(
                    i,
                    j,
                    |n| Component::Retain { retain: n },
                    |n| Component::Delete { delete: n },
                );
                ca = ca.or_else(|| ia.next());
                cb = cb.or_else(|| ib.next());
            }
        }
    }
    Ok((a_prime, b_prime))
}

fn split_rest(
    i: usize,
    j: usize,
    mk_a: impl Fn(usize) -> Component,
    mk_b: impl Fn(usize) -> Component,
) -> (Option<Component>, Option<Component>) {
    match i.cmp(&j) {
        std::cmp::Ordering::Less => (None, Some(mk_b(j - i))),
        std::cmp::Ordering::Greater => (Some(mk_a(i - j)), None),
        std::cmp::Ordering::Equal => (None, None),
    }
}
