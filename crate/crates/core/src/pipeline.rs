//! Wires ingest, segmentation, transcription, the editor and summarization
//! together over the bus.
//!
//! A [`Pipeline`] runs either with worker threads ([`Pipeline::start`]) or
//! stepped by hand ([`Pipeline::manual`] plus [`Pipeline::pump`]), which is
//! what deterministic replays use.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::asr::{Transcriber, Utterance};
use crate::audio::{ChunkAck, Ingest, IngestError, Session, SessionId};
use crate::bus::{Bus, BusError, Dedup, Delivery, Subscription, DEFAULT_CAPACITY};
use crate::doc::{AppliedOp, DocError, EditOp, SegmentRange};
use crate::editor::{Editor, UpdateSink};
use crate::orchestrator::DEFAULT_DEBOUNCE_S;
use crate::segmenter::{EnergyVad, SessionSegmenter, VoiceDetector, DEFAULT_MAX_UTTERANCE_CHUNKS};
use crate::summarizer::Summarizer;
use crate::wire::{
    self, AudioMsg, SummarizeRequest, SummarizeResponse, UtteranceAudioMsg, UtteranceTextMsg,
    TOPIC_AUDIO, TOPIC_SUMMARIZE_REQUEST, TOPIC_SUMMARIZE_RESPONSE, TOPIC_UTTERANCE_AUDIO,
    TOPIC_UTTERANCE_TEXT,
};

const POLL: Duration = Duration::from_millis(50);

/// Session time in seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Seconds since construction.
#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn set(&self, t: f64) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = t;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Clone)]
pub struct PipelineConfig {
    pub bus_capacity: usize,
    pub vad: Arc<dyn VoiceDetector>,
    pub max_utterance_chunks: usize,
    pub transcriber: Transcriber,
    pub summarizer: Summarizer,
    pub debounce_s: f64,
    /// Transcription consumers in threaded mode.
    pub asr_workers: usize,
}

impl PipelineConfig {
    pub fn new(transcriber: Transcriber, summarizer: Summarizer) -> Self {
        Self {
            bus_capacity: DEFAULT_CAPACITY,
            vad: Arc::new(EnergyVad::default()),
            max_utterance_chunks: DEFAULT_MAX_UTTERANCE_CHUNKS,
            transcriber,
            summarizer,
            debounce_s: DEFAULT_DEBOUNCE_S,
            asr_workers: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("session {0} not found")]
    NotFound(SessionId),
}

type EditorTable = RwLock<HashMap<SessionId, Arc<Mutex<Editor>>>>;

fn lock(ed: &Mutex<Editor>) -> MutexGuard<'_, Editor> {
    ed.lock().unwrap_or_else(|e| e.into_inner())
}

struct Shared {
    bus: Bus,
    editors: EditorTable,
    clock: Arc<dyn Clock>,
}

impl Shared {
    fn editor(&self, sid: &SessionId) -> Option<Arc<Mutex<Editor>>> {
        self.editors
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(sid)
            .cloned()
    }

    fn all_editors(&self) -> Vec<Arc<Mutex<Editor>>> {
        let table = self.editors.read().unwrap_or_else(|e| e.into_inner());
        let mut ids: Vec<&SessionId> = table.keys().collect();
        ids.sort();
        ids.into_iter().map(|id| table[id].clone()).collect()
    }

    fn publish_requests(&self, requests: Vec<SummarizeRequest>) {
        for req in requests {
            let key = req.session.0.clone();
            if let Err(e) = self
                .bus
                .publish(TOPIC_SUMMARIZE_REQUEST, &key, wire::encode(&req))
            {
                log::error!("dropping summarize request {}: {e}", req.request_seq);
            }
        }
    }
}

type Handler = Box<dyn FnMut(&Shared, &Delivery) + Send>;

/// One consumer: a subscription plus what to do with each message.
struct Stage {
    sub: Subscription,
    dedup: Dedup,
    handler: Handler,
}

impl Stage {
    fn new(bus: &Bus, topic: &str, group: &str, handler: Handler) -> Self {
        Self {
            sub: bus
                .subscribe(topic, group)
                .expect("fixed topic names are valid"),
            dedup: Dedup::default(),
            handler,
        }
    }

    fn handle(&mut self, shared: &Shared, d: Delivery) {
        if self.dedup.first_time(&d.message) {
            (self.handler)(shared, &d);
        }
        self.sub.ack(&d);
    }

    /// Handles everything currently queued; returns how many.
    fn drain(&mut self, shared: &Shared) -> usize {
        let mut n = 0;
        while let Ok(Some(d)) = self.sub.try_recv() {
            self.handle(shared, d);
            n += 1;
        }
        n
    }

    fn run(mut self, shared: Arc<Shared>) {
        loop {
            match self.sub.recv_timeout(POLL) {
                Ok(d) => self.handle(&shared, d),
                Err(BusError::Timeout) => {}
                Err(_) => return,
            }
        }
    }
}

fn segmenter_stage(bus: &Bus, cfg: &PipelineConfig) -> Stage {
    let vad = cfg.vad.clone();
    let max = cfg.max_utterance_chunks;
    let mut sessions: HashMap<SessionId, SessionSegmenter> = HashMap::new();
    let handler = move |shared: &Shared, d: &Delivery| {
        let msg: AudioMsg = match wire::decode(&d.message.payload) {
            Ok(m) => m,
            Err(e) => return log::error!("bad audio message: {e}"),
        };
        let (sid, out) = match msg {
            AudioMsg::Chunk(chunk) => {
                let sid = chunk.session_id.clone();
                let seg = sessions
                    .entry(sid.clone())
                    .or_insert_with(|| SessionSegmenter::new(vad.clone(), max));
                let out: Vec<UtteranceAudioMsg> = seg
                    .process(chunk)
                    .into_iter()
                    .map(UtteranceAudioMsg::Utterance)
                    .collect();
                (sid, out)
            }
            AudioMsg::Close { session_id } => {
                let mut out = Vec::new();
                let mut last_seq = 0;
                if let Some(mut seg) = sessions.remove(&session_id) {
                    out.extend(seg.close().into_iter().map(UtteranceAudioMsg::Utterance));
                    last_seq = seg.last_finalize_seq();
                }
                out.push(UtteranceAudioMsg::EndOfStream {
                    session_id: session_id.clone(),
                    last_seq,
                });
                (session_id, out)
            }
        };
        for m in out {
            if let Err(e) = shared
                .bus
                .publish(TOPIC_UTTERANCE_AUDIO, &sid.0, wire::encode(&m))
            {
                log::error!("{sid}: lost utterance audio: {e}");
            }
        }
    };
    Stage::new(bus, TOPIC_AUDIO, "segmenter", Box::new(handler))
}

fn asr_stage(bus: &Bus, cfg: &PipelineConfig) -> Stage {
    let transcriber = cfg.transcriber.clone();
    let handler = move |shared: &Shared, d: &Delivery| {
        let msg: UtteranceAudioMsg = match wire::decode(&d.message.payload) {
            Ok(m) => m,
            Err(e) => return log::error!("bad utterance audio message: {e}"),
        };
        let out = match msg {
            UtteranceAudioMsg::Utterance(audio) => {
                let text = transcriber.transcribe(&audio);
                UtteranceTextMsg::Utterance {
                    session_id: audio.session_id.clone(),
                    utterance: Utterance {
                        utt_seq: audio.finalize_seq,
                        speaker_label: audio.track_id.clone(),
                        track_id: audio.track_id,
                        text,
                        start_time_s: audio.start_time_s,
                        end_time_s: audio.end_time_s,
                    },
                }
            }
            UtteranceAudioMsg::EndOfStream {
                session_id,
                last_seq,
            } => UtteranceTextMsg::EndOfStream {
                session_id,
                last_seq,
            },
        };
        if let Err(e) = shared
            .bus
            .publish(TOPIC_UTTERANCE_TEXT, &d.message.key, wire::encode(&out))
        {
            log::error!("lost transcription: {e}");
        }
    };
    Stage::new(bus, TOPIC_UTTERANCE_AUDIO, "asr", Box::new(handler))
}

fn editor_text_stage(bus: &Bus) -> Stage {
    let handler = |shared: &Shared, d: &Delivery| {
        let msg: UtteranceTextMsg = match wire::decode(&d.message.payload) {
            Ok(m) => m,
            Err(e) => return log::error!("bad utterance text message: {e}"),
        };
        let now = shared.clock.now();
        let sid = match &msg {
            UtteranceTextMsg::Utterance { session_id, .. }
            | UtteranceTextMsg::EndOfStream { session_id, .. } => session_id.clone(),
        };
        let Some(ed) = shared.editor(&sid) else {
            return log::warn!("utterance for unknown session {sid}");
        };
        let requests = {
            let mut ed = lock(&ed);
            match msg {
                UtteranceTextMsg::Utterance { utterance, .. } => {
                    ed.on_utterance(now, utterance.utt_seq, Some(utterance))
                }
                UtteranceTextMsg::EndOfStream { last_seq, .. } => {
                    ed.on_end_of_stream(now, last_seq);
                    Vec::new()
                }
            }
        };
        shared.publish_requests(requests);
    };
    Stage::new(bus, TOPIC_UTTERANCE_TEXT, "editor", Box::new(handler))
}

fn editor_response_stage(bus: &Bus) -> Stage {
    let handler = |shared: &Shared, d: &Delivery| {
        let resp: SummarizeResponse = match wire::decode(&d.message.payload) {
            Ok(m) => m,
            Err(e) => return log::error!("bad summarize response: {e}"),
        };
        match shared.editor(&resp.session) {
            Some(ed) => lock(&ed).on_summary_response(shared.clock.now(), &resp),
            None => log::warn!("response for unknown session {}", resp.session),
        }
    };
    Stage::new(bus, TOPIC_SUMMARIZE_RESPONSE, "editor", Box::new(handler))
}

fn summarizer_stage(bus: &Bus, cfg: &PipelineConfig) -> Stage {
    let summarizer = cfg.summarizer.clone();
    let handler = move |shared: &Shared, d: &Delivery| {
        let req: SummarizeRequest = match wire::decode(&d.message.payload) {
            Ok(m) => m,
            Err(e) => return log::error!("bad summarize request: {e}"),
        };
        let resp = SummarizeResponse {
            summary_text: summarizer.summarize_segment(&req.segment_text),
            session: req.session,
            summary_id: req.summary_id,
            request_seq: req.request_seq,
        };
        if let Err(e) = shared.bus.publish(
            TOPIC_SUMMARIZE_RESPONSE,
            &d.message.key,
            wire::encode(&resp),
        ) {
            log::error!("lost summary: {e}");
        }
    };
    Stage::new(
        bus,
        TOPIC_SUMMARIZE_REQUEST,
        "summarizer",
        Box::new(handler),
    )
}

pub struct Pipeline {
    shared: Arc<Shared>,
    ingest: Ingest,
    debounce_s: f64,
    // stepped mode only, in pump order
    stages: Mutex<Vec<Stage>>,
    workers: Vec<JoinHandle<()>>,
    stop: Arc<AtomicBool>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("threaded", &!self.workers.is_empty())
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    fn build(cfg: &PipelineConfig, clock: Arc<dyn Clock>) -> (Self, Vec<Stage>) {
        let bus = Bus::new(cfg.bus_capacity);
        // subscribe before anything can be published
        let stages = vec![
            segmenter_stage(&bus, cfg),
            asr_stage(&bus, cfg),
            editor_text_stage(&bus),
            summarizer_stage(&bus, cfg),
            editor_response_stage(&bus),
        ];
        let pipeline = Self {
            ingest: Ingest::new(bus.clone()),
            shared: Arc::new(Shared {
                bus,
                editors: RwLock::new(HashMap::new()),
                clock,
            }),
            debounce_s: cfg.debounce_s,
            stages: Mutex::new(Vec::new()),
            workers: Vec::new(),
            stop: Arc::new(AtomicBool::new(false)),
        };
        (pipeline, stages)
    }

    /// Stepped mode: nothing moves until [`Self::pump`] is called.
    pub fn manual(cfg: &PipelineConfig, clock: Arc<dyn Clock>) -> Self {
        let (p, stages) = Self::build(cfg, clock);
        *p.stages.lock().unwrap_or_else(|e| e.into_inner()) = stages;
        p
    }

    /// Threaded mode: every stage consumes on its own thread and a ticker
    /// runs the debounced re-summarization checks.
    pub fn start(cfg: &PipelineConfig, clock: Arc<dyn Clock>) -> Self {
        let (mut p, mut stages) = Self::build(cfg, clock);
        for _ in 1..cfg.asr_workers.max(1) {
            stages.push(asr_stage(&p.shared.bus, cfg));
        }
        for (i, stage) in stages.into_iter().enumerate() {
            let shared = p.shared.clone();
            let handle = std::thread::Builder::new()
                .name(format!("stage-{i}"))
                .spawn(move || stage.run(shared))
                .expect("spawn stage thread");
            p.workers.push(handle);
        }
        let shared = p.shared.clone();
        let stop = p.stop.clone();
        let ticker = std::thread::Builder::new()
            .name("ticker".into())
            .spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    tick_all(&shared);
                    std::thread::sleep(POLL);
                }
            })
            .expect("spawn ticker thread");
        p.workers.push(ticker);
        p
    }

    pub fn bus(&self) -> &Bus {
        &self.shared.bus
    }

    pub fn now(&self) -> f64 {
        self.shared.clock.now()
    }

    /// Handles queued messages stage by stage until every queue is empty.
    /// Returns the number of messages handled. Does nothing in threaded mode.
    pub fn pump(&self) -> usize {
        let mut stages = self.stages.lock().unwrap_or_else(|e| e.into_inner());
        let mut total = 0;
        loop {
            let n: usize = stages.iter_mut().map(|s| s.drain(&self.shared)).sum();
            if n == 0 {
                return total;
            }
            total += n;
        }
    }

    /// Runs due re-summarization checks at the current clock time.
    pub fn tick(&self) {
        tick_all(&self.shared);
    }

    pub fn create_session(
        &self,
        chunk_length_words: Option<u32>,
    ) -> Result<Session, PipelineError> {
        let session = self.ingest.create_session(chunk_length_words)?;
        let editor = Editor::new(session.session_id.clone(), session.chunk_length_words)
            .with_debounce(self.debounce_s);
        self.shared
            .editors
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.session_id.clone(), Arc::new(Mutex::new(editor)));
        Ok(session)
    }

    pub fn session(&self, sid: &SessionId) -> Option<Session> {
        self.ingest.session(sid)
    }

    pub fn is_closed(&self, sid: &SessionId) -> Option<bool> {
        self.ingest.is_closed(sid)
    }

    pub fn editor(&self, sid: &SessionId) -> Option<Arc<Mutex<Editor>>> {
        self.shared.editor(sid)
    }

    fn editor_or_404(&self, sid: &SessionId) -> Result<Arc<Mutex<Editor>>, PipelineError> {
        self.editor(sid)
            .ok_or_else(|| PipelineError::NotFound(sid.clone()))
    }

    /// Runs `f` with the session's editor locked.
    pub fn with_editor<T>(
        &self,
        sid: &SessionId,
        f: impl FnOnce(&mut Editor) -> T,
    ) -> Result<T, PipelineError> {
        let ed = self.editor_or_404(sid)?;
        let mut guard = lock(&ed);
        Ok(f(&mut guard))
    }

    pub fn set_update_sink(&self, sid: &SessionId, sink: UpdateSink) -> Result<(), PipelineError> {
        self.with_editor(sid, |ed| ed.set_sink(sink))
    }

    pub fn ingest_chunk(
        &self,
        sid: &SessionId,
        track_id: &str,
        chunk_seq: u64,
        payload: &[u8],
    ) -> Result<ChunkAck, PipelineError> {
        Ok(self
            .ingest
            .ingest_chunk(sid, track_id, chunk_seq, payload)?)
    }

    pub fn set_chunk_length(&self, sid: &SessionId, words: u32) -> Result<(), PipelineError> {
        self.ingest.set_chunk_length(sid, words)?;
        let now = self.now();
        self.with_editor(sid, |ed| ed.set_chunk_length(now, words))
    }

    pub fn close_session(&self, sid: &SessionId) -> Result<(), PipelineError> {
        Ok(self.ingest.close_session(sid)?)
    }

    pub fn set_speaker_label(
        &self,
        sid: &SessionId,
        track_id: &str,
        label: &str,
    ) -> Result<(), PipelineError> {
        self.with_editor(sid, |ed| ed.set_speaker_label(track_id, label))
    }

    pub fn set_debug(&self, sid: &SessionId, enabled: bool) -> Result<(), PipelineError> {
        self.with_editor(sid, |ed| ed.set_debug(enabled))
    }

    pub fn apply_edit(&self, sid: &SessionId, op: EditOp) -> Result<AppliedOp, PipelineError> {
        let now = self.now();
        Ok(self.with_editor(sid, |ed| ed.apply_user_edit(now, op))??)
    }

    pub fn request_on_demand(
        &self,
        sid: &SessionId,
        range: SegmentRange,
    ) -> Result<u64, PipelineError> {
        let now = self.now();
        let (id, requests) = self.with_editor(sid, |ed| ed.request_on_demand(now, range))?;
        self.shared.publish_requests(requests);
        Ok(id)
    }

    /// Stops worker threads. Called on drop.
    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.shared.bus.shutdown();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn tick_all(shared: &Shared) {
    let now = shared.clock.now();
    for ed in shared.all_editors() {
        let requests = lock(&ed).tick(now);
        shared.publish_requests(requests);
    }
}
