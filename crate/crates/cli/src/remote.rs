//! Replays a manifest against a running server over HTTP and WebSocket.
//!
//! The server keeps its own clock, so debounce windows run in wall time.
//! Chunks and actions are still sent in virtual-time order (actions before
//! chunks at equal times). In fast mode the driver waits for the transcript
//! to settle before each action so that edits see the lines they target.
//! The server must recognize the scripted audio; see `--emit-asr-map`.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use minuteman_core::doc::{Author, Content, DocId, Line};
use minuteman_core::replay::{
    build_edit, synthesize, Action, Manifest, Mode, ScheduledAction, SynthError,
};
use reqwest::blocking::{Client, Response};
use serde_json::{json, Value};
use thiserror::Error;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::Outputs;

const POLL: Duration = Duration::from_millis(50);
const SETTLE: Duration = Duration::from_millis(300);
const QUIESCENCE_TIMEOUT: Duration = Duration::from_secs(300);
const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{method} {path}: {status} {body}")]
    Status {
        method: &'static str,
        path: String,
        status: u16,
        body: String,
    },
    #[error("websocket: {0}")]
    Ws(#[from] Box<tungstenite::Error>),
    #[error("unexpected server message: {0}")]
    Protocol(String),
    #[error("action at {at_s} s: {detail}")]
    Action { at_s: f64, detail: String },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

impl From<tungstenite::Error> for RemoteError {
    fn from(e: tungstenite::Error) -> Self {
        RemoteError::Ws(Box::new(e))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteOptions {
    pub base_url: String,
    pub mode: Mode,
    pub seed: u64,
    pub time_scale: f64,
}

struct Api {
    http: Client,
    base: String,
    sid: String,
}

impl Api {
    fn check(method: &'static str, path: &str, resp: Response) -> Result<Response, RemoteError> {
        if resp.status().is_success() {
            return Ok(resp);
        }
        Err(RemoteError::Status {
            method,
            path: path.to_string(),
            status: resp.status().as_u16(),
            body: resp.text().unwrap_or_default(),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/sessions/{}{path}", self.base, self.sid)
    }

    fn get(&self, path: &str) -> Result<Response, RemoteError> {
        let resp = self.http.get(self.url(path)).send()?;
        Self::check("GET", path, resp)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Response, RemoteError> {
        let resp = self.http.post(self.url(path)).json(body).send()?;
        Self::check("POST", path, resp)
    }

    fn put(&self, path: &str, body: &Value) -> Result<Response, RemoteError> {
        let resp = self.http.put(self.url(path)).json(body).send()?;
        Self::check("PUT", path, resp)
    }

    fn chunk(&self, track: &str, seq: usize, pcm: &[u8]) -> Result<(), RemoteError> {
        let path = format!("/tracks/{track}/chunks/{seq}");
        let resp = self
            .http
            .post(self.url(&path))
            .header("content-type", "application/octet-stream")
            .body(pcm.to_vec())
            .send()?;
        Self::check("POST", &path, resp)?;
        Ok(())
    }

    fn status(&self) -> Result<Value, RemoteError> {
        Ok(self.get("/status")?.json()?)
    }
}

/// Local copy of both pads, kept current from the sync socket.
struct Mirror {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    author: String,
    pads: [(u64, Content); 2],
}

enum Reply {
    Applied,
    Rejected(String),
}

impl Mirror {
    fn connect(api: &Api) -> Result<Mirror, RemoteError> {
        let ws_base = api
            .base
            .replacen("http://", "ws://", 1)
            .replacen("https://", "wss://", 1);
        let url = format!("{ws_base}/sessions/{}/sync?author=replay-user", api.sid);
        let (ws, _) = tungstenite::connect(url)?;
        let mut m = Mirror {
            ws,
            author: String::new(),
            pads: Default::default(),
        };
        m.set_timeout(None)?;
        let hello = m.read()?;
        m.author = hello["author"]
            .as_str()
            .ok_or_else(|| RemoteError::Protocol(hello.to_string()))?
            .to_string();
        // debug flag and two snapshots
        for _ in 0..3 {
            m.read()?;
        }
        Ok(m)
    }

    fn set_timeout(&mut self, d: Option<Duration>) -> Result<(), RemoteError> {
        if let MaybeTlsStream::Plain(s) = self.ws.get_ref() {
            s.set_read_timeout(d).map_err(tungstenite::Error::Io)?;
        }
        Ok(())
    }

    fn pad(&mut self, id: DocId) -> &mut (u64, Content) {
        &mut self.pads[id as usize]
    }

    fn doc_id(v: &Value) -> Result<DocId, RemoteError> {
        serde_json::from_value(v["doc_id"].clone())
            .map_err(|_| RemoteError::Protocol(v.to_string()))
    }

    fn absorb(&mut self, msg: &Value) -> Result<(), RemoteError> {
        let bad = || RemoteError::Protocol(msg.to_string());
        match msg["type"].as_str() {
            Some("snapshot") => {
                let id = Self::doc_id(msg)?;
                let lines: Vec<Line> =
                    serde_json::from_value(msg["lines"].clone()).map_err(|_| bad())?;
                let rev = msg["revision"].as_u64().ok_or_else(bad)?;
                *self.pad(id) = (rev, Content::from_lines(lines));
            }
            Some("edit-applied") => {
                let id = Self::doc_id(msg)?;
                let rev = msg["revision"].as_u64().ok_or_else(bad)?;
                let op = serde_json::from_value(msg["components"].clone()).map_err(|_| bad())?;
                let author: Author =
                    serde_json::from_value(msg["author"].clone()).map_err(|_| bad())?;
                let pad = self.pad(id);
                if rev != pad.0 + 1 {
                    return Err(bad());
                }
                pad.1 = std::mem::take(&mut pad.1)
                    .apply(&op, &author)
                    .map_err(|_| bad())?;
                pad.0 = rev;
            }
            _ => {}
        }
        Ok(())
    }

    fn read(&mut self) -> Result<Value, RemoteError> {
        loop {
            if let Message::Text(t) = self.ws.read()? {
                let v: Value =
                    serde_json::from_str(&t).map_err(|_| RemoteError::Protocol(t.to_string()))?;
                self.absorb(&v)?;
                return Ok(v);
            }
        }
    }

    /// Applies whatever has already arrived.
    fn drain(&mut self) -> Result<(), RemoteError> {
        self.set_timeout(Some(Duration::from_millis(1)))?;
        let result = loop {
            match self.read() {
                Ok(_) => continue,
                Err(RemoteError::Ws(e)) => match *e {
                    tungstenite::Error::Io(io)
                        if matches!(
                            io.kind(),
                            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                        ) =>
                    {
                        break Ok(())
                    }
                    other => break Err(other.into()),
                },
                Err(e) => break Err(e),
            }
        };
        self.set_timeout(None)?;
        result
    }

    fn edit(
        &mut self,
        doc: DocId,
        components: minuteman_core::doc::Operation,
    ) -> Result<Reply, RemoteError> {
        let base_revision = self.pad(doc).0;
        let msg = json!({
            "type": "edit",
            "doc_id": doc,
            "base_revision": base_revision,
            "components": components,
        });
        self.ws.send(Message::Text(msg.to_string().into()))?;
        self.set_timeout(Some(REPLY_TIMEOUT))?;
        let reply = loop {
            let v = self.read()?;
            match v["type"].as_str() {
                Some("error") => {
                    break Reply::Rejected(v["message"].as_str().unwrap_or_default().to_string())
                }
                Some("edit-applied")
                    if v["author"] == self.author.as_str() && Self::doc_id(&v)? == doc =>
                {
                    break Reply::Applied
                }
                _ => {}
            }
        };
        self.set_timeout(None)?;
        Ok(reply)
    }
}

fn wait_until(started: Instant, opts: &RemoteOptions, t: f64) {
    if opts.mode == Mode::Realtime {
        let target = started + Duration::from_secs_f64(t * opts.time_scale);
        if let Some(d) = target.checked_duration_since(Instant::now()) {
            std::thread::sleep(d);
        }
    }
}

/// Waits until the transcript revision has not moved for a while.
fn settle(api: &Api) -> Result<(), RemoteError> {
    let deadline = Instant::now() + QUIESCENCE_TIMEOUT;
    let mut last = api.status()?["transcript_revision"].as_u64();
    let mut stable_since = Instant::now();
    while stable_since.elapsed() < SETTLE {
        if Instant::now() > deadline {
            return Err(RemoteError::Timeout("the transcript to settle"));
        }
        std::thread::sleep(POLL);
        let rev = api.status()?["transcript_revision"].as_u64();
        if rev != last {
            last = rev;
            stable_since = Instant::now();
        }
    }
    Ok(())
}

fn perform(api: &Api, mirror: &mut Mirror, a: &ScheduledAction) -> Result<(), RemoteError> {
    let fail = |detail: String| RemoteError::Action {
        at_s: a.at_s,
        detail,
    };
    match &a.action {
        Action::Edit { doc, edit } => {
            mirror.drain()?;
            let text = mirror.pad(*doc).1.text();
            let op = build_edit(&text, edit).map_err(fail)?;
            if let Reply::Rejected(msg) = mirror.edit(*doc, op)? {
                return Err(fail(msg));
            }
        }
        Action::SetChunkLength { words } => {
            api.put("/config", &json!({ "chunk_length_words": words }))?;
        }
        Action::Summarize { start_seq, end_seq } => {
            api.post(
                "/summarize",
                &json!({ "start_seq": start_seq, "end_seq": end_seq }),
            )?;
        }
    }
    Ok(())
}

pub fn replay_remote(manifest: &Manifest, opts: &RemoteOptions) -> Result<Outputs, RemoteError> {
    let (tracks, _) = synthesize(manifest, opts.seed)?;
    let http = Client::new();
    let resp = http
        .post(format!("{}/sessions", opts.base_url))
        .json(&json!({ "chunk_length_words": manifest.chunk_length_words }))
        .send()?;
    let created: Value = Api::check("POST", "/sessions", resp)?.json()?;
    let sid = created["session_id"]
        .as_str()
        .ok_or_else(|| RemoteError::Protocol(created.to_string()))?
        .to_string();
    let api = Api {
        http,
        base: opts.base_url.clone(),
        sid,
    };
    for t in &manifest.tracks {
        if let Some(label) = &t.speaker_label {
            api.put(
                &format!("/tracks/{}", t.track_id),
                &json!({ "speaker_label": label }),
            )?;
        }
    }
    let mut mirror = Mirror::connect(&api)?;

    let mut actions: Vec<&ScheduledAction> = manifest.actions.iter().collect();
    actions.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let total_chunks = tracks.first().map_or(0, |t| t.chunks.len());
    let started = Instant::now();
    let mut next_action = 0;
    for k in 0..total_chunks {
        let t = (k + 1) as f64;
        while let Some(a) = actions.get(next_action).filter(|a| a.at_s <= t) {
            wait_until(started, opts, a.at_s);
            if opts.mode == Mode::Fast {
                settle(&api)?;
            }
            perform(&api, &mut mirror, a)?;
            next_action += 1;
        }
        wait_until(started, opts, t);
        for track in &tracks {
            api.chunk(&track.track_id, k, &track.chunks[k])?;
        }
    }
    api.post("/close", &json!({}))?;
    for a in &actions[next_action..] {
        wait_until(started, opts, a.at_s);
        if opts.mode == Mode::Fast {
            settle(&api)?;
        }
        perform(&api, &mut mirror, a)?;
    }

    let deadline = Instant::now() + QUIESCENCE_TIMEOUT;
    while !api.status()?["quiescent"].as_bool().unwrap_or(false) {
        if Instant::now() > deadline {
            return Err(RemoteError::Timeout("pending summaries"));
        }
        std::thread::sleep(POLL);
    }
    let _ = mirror.ws.close(None);
    Ok(Outputs {
        transcript: api.get("/transcript")?.text()?,
        minutes: api.get("/summary")?.text()?,
        events: api.get("/events")?.text()?,
    })
}
