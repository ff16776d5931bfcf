//! HTTP and WebSocket front end for a [`Pipeline`].
//!
//! REST covers sessions, audio upload, configuration and reads; each
//! session's pads are shared over `WS /sessions/{sid}/sync`.

pub mod protocol;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use minuteman_core::doc::{Author, DocError, DocId, EditOp, SegmentRange, SYSTEM_AUTHOR};
use minuteman_core::orchestrator::SummaryPoint;
use minuteman_core::{IngestError, Pipeline, PipelineError, SessionId};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

use protocol::{ClientMsg, ServerMsg};

const BROADCAST_CAPACITY: usize = 1024;

pub struct AppState {
    pipeline: Arc<Pipeline>,
    hubs: Mutex<HashMap<SessionId, broadcast::Sender<ServerMsg>>>,
    next_author: AtomicU64,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>) -> Arc<Self> {
        Arc::new(Self {
            pipeline,
            hubs: Mutex::new(HashMap::new()),
            next_author: AtomicU64::new(1),
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    fn hub(&self, sid: &SessionId) -> Option<broadcast::Sender<ServerMsg>> {
        self.hubs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(sid)
            .cloned()
    }

    /// Display name plus a server-assigned suffix; never the system author.
    fn assign_author(&self, requested: Option<&str>) -> String {
        let base: String = requested
            .unwrap_or("")
            .chars()
            .filter(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | ' '))
            .take(40)
            .collect();
        let base = base.trim();
        let base = if base.is_empty() || base == SYSTEM_AUTHOR {
            "user"
        } else {
            base
        };
        format!(
            "{base}#{}",
            self.next_author.fetch_add(1, Ordering::Relaxed)
        )
    }
}

/// Error body `{"error": …}` with a status.
#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::NotFound(_) | PipelineError::Ingest(IngestError::NotFound(_)) => {
                StatusCode::NOT_FOUND
            }
            PipelineError::Ingest(IngestError::Sequencing { .. }) => StatusCode::CONFLICT,
            PipelineError::Ingest(IngestError::Bus(_)) | PipelineError::Bus(_) => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            PipelineError::Ingest(_) => StatusCode::BAD_REQUEST,
            PipelineError::Doc(DocError::FutureRevision { .. }) => StatusCode::CONFLICT,
            PipelineError::Doc(_) => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl From<DocError> for ApiError {
    fn from(e: DocError) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route(
            "/sessions/{sid}/tracks/{tid}/chunks/{seq}",
            post(upload_chunk),
        )
        .route("/sessions/{sid}/tracks/{tid}", put(set_track))
        .route("/sessions/{sid}/config", put(set_config))
        .route("/sessions/{sid}/close", post(close_session))
        .route("/sessions/{sid}/summarize", post(summarize))
        .route("/sessions/{sid}/debug", put(set_debug))
        .route("/sessions/{sid}/transcript", get(get_transcript))
        .route("/sessions/{sid}/summary", get(get_summary))
        .route("/sessions/{sid}/points", get(get_points))
        .route("/sessions/{sid}/status", get(get_status))
        .route("/sessions/{sid}/events", get(get_events))
        .route("/sessions/{sid}/sync", get(sync))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { "minuteman server\n" })),
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    chunk_length_words: Option<u32>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let session = state.pipeline.create_session(req.chunk_length_words)?;
    let sid = session.session_id.clone();
    let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
    let sink_tx = tx.clone();
    state.pipeline.set_update_sink(
        &sid,
        Box::new(move |u| {
            // no receivers is fine
            let _ = sink_tx.send(ServerMsg::from(u));
        }),
    )?;
    state
        .hubs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(sid.clone(), tx);
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "session_id": sid,
            "chunk_length_words": session.chunk_length_words,
        })),
    ))
}

async fn upload_chunk(
    State(state): State<Arc<AppState>>,
    Path((sid, tid, seq)): Path<(String, String, u64)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let sid = SessionId(sid);
    // publishing may block under backpressure
    let ack =
        tokio::task::spawn_blocking(move || state.pipeline.ingest_chunk(&sid, &tid, seq, &body))
            .await
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(json!({
        "chunk_seq": ack.chunk_seq,
        "enqueue_seq": ack.enqueue_seq,
        "new_track": ack.new_track,
    })))
}

#[derive(Debug, Deserialize)]
struct TrackConfig {
    speaker_label: String,
}

async fn set_track(
    State(state): State<Arc<AppState>>,
    Path((sid, tid)): Path<(String, String)>,
    Json(req): Json<TrackConfig>,
) -> ApiResult<impl IntoResponse> {
    let label = req.speaker_label.trim();
    if label.is_empty() || label.contains(['\n', ':']) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "invalid speaker label".into(),
        ));
    }
    state
        .pipeline
        .set_speaker_label(&SessionId(sid), &tid, label)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
struct Config {
    chunk_length_words: u32,
}

async fn set_config(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<Config>,
) -> ApiResult<impl IntoResponse> {
    state
        .pipeline
        .set_chunk_length(&SessionId(sid), req.chunk_length_words)?;
    Ok(Json(
        json!({ "chunk_length_words": req.chunk_length_words }),
    ))
}

async fn close_session(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<impl IntoResponse> {
    state.pipeline.close_session(&SessionId(sid))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
struct Summarize {
    start_seq: u64,
    end_seq: u64,
}

async fn summarize(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<Summarize>,
) -> ApiResult<impl IntoResponse> {
    let sid = SessionId(sid);
    if state.pipeline.editor(&sid).is_none() {
        return Err(PipelineError::NotFound(sid).into());
    }
    let range = SegmentRange::new(req.start_seq, req.end_seq)?;
    let summary_id = state.pipeline.request_on_demand(&sid, range)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "summary_id": summary_id })),
    ))
}

#[derive(Debug, Deserialize)]
struct DebugFlag {
    enabled: bool,
}

async fn set_debug(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<DebugFlag>,
) -> ApiResult<impl IntoResponse> {
    state.pipeline.set_debug(&SessionId(sid), req.enabled)?;
    Ok(Json(json!({ "enabled": req.enabled })))
}

fn plain(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn get_transcript(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<Response> {
    let text = state
        .pipeline
        .with_editor(&SessionId(sid), |ed| ed.doc(DocId::Transcript).text())?;
    Ok(plain(text))
}

async fn get_summary(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<Response> {
    let text = state
        .pipeline
        .with_editor(&SessionId(sid), |ed| ed.doc(DocId::Summary).text())?;
    Ok(plain(text))
}

async fn get_events(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<Response> {
    let text = state
        .pipeline
        .with_editor(&SessionId(sid), |ed| ed.events_log())?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn get_points(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<Json<Vec<SummaryPoint>>> {
    let points = state.pipeline.with_editor(&SessionId(sid), |ed| {
        ed.orchestrator().points().cloned().collect()
    })?;
    Ok(Json(points))
}

/// `GET /sessions/{sid}/status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub session_id: SessionId,
    pub chunk_length_words: u32,
    pub tracks: Vec<String>,
    pub closed: bool,
    /// All utterances have been appended.
    pub ended: bool,
    pub outstanding_requests: usize,
    pub resummarize_pending: bool,
    pub quiescent: bool,
    pub transcript_revision: u64,
    pub summary_revision: u64,
    pub debug: bool,
}

async fn get_status(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
) -> ApiResult<Json<Status>> {
    let sid = SessionId(sid);
    let session = state
        .pipeline
        .session(&sid)
        .ok_or_else(|| PipelineError::NotFound(sid.clone()))?;
    let closed = state.pipeline.is_closed(&sid).unwrap_or(true);
    let status = state.pipeline.with_editor(&sid, |ed| Status {
        session_id: sid.clone(),
        chunk_length_words: ed.orchestrator().threshold(),
        tracks: session.tracks.iter().cloned().collect(),
        closed,
        ended: ed.ended(),
        outstanding_requests: ed.outstanding_requests(),
        resummarize_pending: ed.next_deadline().is_some(),
        quiescent: ed.is_quiescent(),
        transcript_revision: ed.doc(DocId::Transcript).revision(),
        summary_revision: ed.doc(DocId::Summary).revision(),
        debug: ed.debug(),
    })?;
    Ok(Json(status))
}

#[derive(Debug, Deserialize)]
struct SyncQuery {
    author: Option<String>,
}

async fn sync(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Query(q): Query<SyncQuery>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let sid = SessionId(sid);
    let hub = state
        .hub(&sid)
        .ok_or_else(|| PipelineError::NotFound(sid.clone()))?;
    let author = state.assign_author(q.author.as_deref());
    Ok(ws.on_upgrade(move |socket| client_loop(state, sid, hub, author, socket)))
}

/// Snapshots of both pads plus a receiver positioned right after them.
fn join(
    state: &AppState,
    sid: &SessionId,
    hub: &broadcast::Sender<ServerMsg>,
) -> Result<(Vec<ServerMsg>, broadcast::Receiver<ServerMsg>), PipelineError> {
    // updates are sent while the editor is locked, so subscribing under the
    // same lock leaves no gap and no overlap
    state.pipeline.with_editor(sid, |ed| {
        let rx = hub.subscribe();
        let msgs = vec![
            ServerMsg::Debug {
                enabled: ed.debug(),
            },
            ed.snapshot(DocId::Transcript).into(),
            ed.snapshot(DocId::Summary).into(),
        ];
        (msgs, rx)
    })
}

async fn client_loop(
    state: Arc<AppState>,
    sid: SessionId,
    hub: broadcast::Sender<ServerMsg>,
    author: String,
    socket: WebSocket,
) {
    let (mut tx, mut rx_ws) = socket.split();
    let send =
        |m: &ServerMsg| Message::Text(serde_json::to_string(m).expect("messages serialize").into());
    let Ok((initial, mut updates)) = join(&state, &sid, &hub) else {
        return;
    };
    let hello = ServerMsg::Hello {
        author: author.clone(),
        session_id: sid.0.clone(),
    };
    for m in std::iter::once(&hello).chain(initial.iter()) {
        if tx.send(send(m)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            update = updates.recv() => match update {
                Ok(m) => {
                    if tx.send(send(&m)).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("{sid}: client {author} lagged by {n}; resending snapshots");
                    let Ok((initial, fresh)) = join(&state, &sid, &hub) else { return };
                    updates = fresh;
                    for m in &initial {
                        if tx.send(send(m)).await.is_err() {
                            return;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = rx_ws.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMsg>(&text) {
                    Ok(ClientMsg::Edit { doc_id, base_revision, components, .. }) => {
                        let op = EditOp {
                            doc_id,
                            base_revision,
                            author: Author::user(author.clone()),
                            components,
                        };
                        // the applied op reaches this client through the hub
                        state.pipeline.apply_edit(&sid, op).err().map(|e| ServerMsg::Error {
                            message: e.to_string(),
                        })
                    }
                    Err(e) => Some(ServerMsg::Error {
                        message: format!("bad message: {e}"),
                    }),
                };
                if let Some(r) = reply {
                    if tx.send(send(&r)).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}
