//! Live meeting minutes: per-speaker audio in, an editable transcript and an
//! editable running summary out.
//!
//! Audio chunks enter through [`audio::Ingest`], are gated into utterances by
//! [`segmenter`], transcribed by an [`asr::AsrBackend`], appended to the
//! transcript [`doc::LineDoc`] and summarized in batches by the
//! [`orchestrator`]. Stages talk over the in-process [`bus`].

pub mod asr;
pub mod audio;
pub mod bus;
pub mod doc;
pub mod editor;
pub mod events;
pub mod orchestrator;
pub mod pipeline;
pub mod replay;
pub mod retry;
pub mod segmenter;
pub mod summarizer;
pub mod wire;

pub use asr::{AsrBackend, MockAsr, RemoteAsr, Transcriber, Utterance};
pub use audio::{AudioChunk, Ingest, IngestError, Session, SessionId};
pub use bus::{Bus, BusError, BusMessage, Delivery, Subscription};
pub use doc::{
    extract_segment, word_count, AppliedOp, Author, Component, DocError, DocId, EditOp, Line,
    LineAttrs, LineDoc, Operation, SegmentRange, Snapshot,
};
pub use editor::{Editor, EditorUpdate};
pub use events::{Event, EventRecord};
pub use orchestrator::{Orchestrator, PointKind, PointState, SummaryPoint};
pub use pipeline::{Clock, ManualClock, Pipeline, PipelineConfig, PipelineError, SystemClock};
pub use retry::RetryPolicy;
pub use segmenter::{EnergyVad, SessionSegmenter, UtteranceAudio, VoiceDetector};
pub use summarizer::{PreprocessConfig, Summarizer, SummarizerBackend};
