//! WebSocket sync messages, JSON with a `type` tag.

use minuteman_core::doc::{AppliedOp, DocId, Line, Operation, Snapshot};
use minuteman_core::EditorUpdate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMsg {
    Edit {
        doc_id: DocId,
        base_revision: u64,
        components: Operation,
        /// Ignored; the connection's assigned author is used.
        #[serde(default)]
        author: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMsg {
    Hello {
        author: String,
        session_id: String,
    },
    Snapshot {
        doc_id: DocId,
        revision: u64,
        lines: Vec<Line>,
    },
    EditApplied {
        doc_id: DocId,
        revision: u64,
        components: Operation,
        author: String,
    },
    Debug {
        enabled: bool,
    },
    Error {
        message: String,
    },
}

impl From<Snapshot> for ServerMsg {
    fn from(s: Snapshot) -> Self {
        ServerMsg::Snapshot {
            doc_id: s.doc_id,
            revision: s.revision,
            lines: s.lines,
        }
    }
}

impl From<AppliedOp> for ServerMsg {
    fn from(op: AppliedOp) -> Self {
        ServerMsg::EditApplied {
            doc_id: op.doc_id,
            revision: op.revision,
            components: op.components,
            author: op.author.to_string(),
        }
    }
}

impl From<&EditorUpdate> for ServerMsg {
    fn from(u: &EditorUpdate) -> Self {
        match u {
            EditorUpdate::Applied(op) => op.clone().into(),
            EditorUpdate::Debug(enabled) => ServerMsg::Debug { enabled: *enabled },
        }
    }
}
