#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use minuteman_core::audio::{samples_to_bytes, CHUNK_SAMPLES};
use minuteman_core::{
    MockAsr, Pipeline, PipelineConfig, RetryPolicy, Summarizer, SystemClock, Transcriber,
};
use minuteman_gateway::{router, AppState, Status};

pub struct Server {
    pub base: String,
    pub ws_base: String,
    pub http: reqwest::Client,
}

pub fn tone(freq: f64) -> Vec<u8> {
    let s: Vec<i16> = (0..CHUNK_SAMPLES)
        .map(|i| (8000.0 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as i16)
        .collect();
    samples_to_bytes(&s)
}

pub fn silence() -> Vec<u8> {
    vec![0; CHUNK_SAMPLES * 2]
}

/// Starts a server whose mock ASR knows the given single-chunk utterances.
pub async fn start(known: &[(Vec<u8>, &str)], debounce_s: f64) -> Server {
    let mut asr = MockAsr::default();
    for (pcm, text) in known {
        asr.insert(pcm, *text);
    }
    let mut cfg = PipelineConfig::new(
        Transcriber::new(Arc::new(asr), RetryPolicy::immediate(0)),
        Summarizer::mock(),
    );
    cfg.debounce_s = debounce_s;
    let pipeline = Arc::new(Pipeline::start(&cfg, Arc::new(SystemClock::default())));
    let app = router(AppState::new(pipeline), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Server {
        base: format!("http://{addr}"),
        ws_base: format!("ws://{addr}"),
        http: reqwest::Client::new(),
    }
}

impl Server {
    pub async fn create_session(&self, words: Option<u32>) -> String {
        let body = match words {
            Some(w) => serde_json::json!({ "chunk_length_words": w }),
            None => serde_json::json!({}),
        };
        let resp = self
            .http
            .post(format!("{}/sessions", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201);
        let v: serde_json::Value = resp.json().await.unwrap();
        v["session_id"].as_str().unwrap().to_string()
    }

    pub async fn chunk(&self, sid: &str, tid: &str, seq: u64, pcm: Vec<u8>) -> reqwest::Response {
        self.http
            .post(format!(
                "{}/sessions/{sid}/tracks/{tid}/chunks/{seq}",
                self.base
            ))
            .header("content-type", "application/octet-stream")
            .body(pcm)
            .send()
            .await
            .unwrap()
    }

    pub async fn text(&self, sid: &str, which: &str) -> String {
        self.http
            .get(format!("{}/sessions/{sid}/{which}", self.base))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap()
    }

    pub async fn status(&self, sid: &str) -> Status {
        let body = self.text(sid, "status").await;
        serde_json::from_str(&body).unwrap_or_else(|e| panic!("bad status {body:?}: {e}"))
    }

    pub async fn wait_for(&self, sid: &str, what: &str, pred: impl Fn(&Status) -> bool) -> Status {
        let deadline = Instant::now() + Duration::from_secs(15);
        loop {
            let s = self.status(sid).await;
            if pred(&s) {
                return s;
            }
            assert!(
                Instant::now() < deadline,
                "timed out waiting for {what}: {s:?}"
            );
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}
