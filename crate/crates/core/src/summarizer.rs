//! Transcript clean-up and summary backends.

use std::collections::{BTreeSet, HashSet};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::asr::{BackendError, ConfigError};
use crate::retry::RetryPolicy;

pub const SUMMARIZATION_FAILED: &str = "[summarization failed]";
pub const NO_CONTENT: &str = "[no content to summarize]";
pub const DEFAULT_FILLERS: [&str; 10] = [
    "um",
    "uh",
    "like",
    "you know",
    "I mean",
    "so",
    "okay",
    "well",
    "actually",
    "basically",
];
const MOCK_SUMMARY_WORDS: usize = 8;

static STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS_EN
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub filler_words: Vec<String>,
    pub remove_stopwords: bool,
    pub stopword_list: HashSet<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filler_words: DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect(),
            remove_stopwords: true,
            stopword_list: default_stopwords(),
        }
    }
}

impl PreprocessConfig {
    pub fn fillers_only() -> Self {
        Self {
            remove_stopwords: false,
            ..Self::default()
        }
    }
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([^:]+):(\s+(.*))?$").expect("valid regex"))
}

/// Splits `"Label:  content"` into `(Some(label), content)`.
pub fn split_speaker(line: &str) -> (Option<&str>, &str) {
    match label_re().captures(line) {
        Some(c) => {
            let label = c.get(1).map_or("", |m| m.as_str());
            let rest = c.get(3).map_or("", |m| m.as_str());
            (Some(label), rest)
        }
        None => (None, line),
    }
}

fn normalize(token: &str) -> String {
    token
        .trim_matches(|c: char| !(c.is_alphanumeric() || c == '\''))
        .to_lowercase()
}

fn is_bare(token: &str) -> bool {
    token.chars().all(|c| c.is_alphanumeric() || c == '\'')
}

struct Fillers {
    // longest phrase first
    phrases: Vec<Vec<String>>,
}

impl Fillers {
    fn new(words: &[String]) -> Self {
        let mut phrases: Vec<Vec<String>> = words
            .iter()
            .map(|p| {
                p.split_whitespace()
                    .map(str::to_lowercase)
                    .collect::<Vec<_>>()
            })
            .filter(|p| !p.is_empty())
            .collect();
        phrases.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then_with(|| b.join(" ").len().cmp(&a.join(" ").len()))
        });
        Self { phrases }
    }

    fn match_at(&self, tokens: &[&str], i: usize) -> Option<usize> {
        self.phrases.iter().find_map(|p| {
            if i + p.len() > tokens.len() {
                return None;
            }
            let ok = p.iter().enumerate().all(|(k, w)| {
                let t = tokens[i + k];
                // punctuation may only trail the last word of a phrase
                (k + 1 == p.len() || is_bare(t)) && normalize(t) == *w
            });
            ok.then_some(p.len())
        })
    }
}

fn clean_tokens<'a>(
    tokens: Vec<&'a str>,
    fillers: &Fillers,
    cfg: &PreprocessConfig,
) -> Vec<std::borrow::Cow<'a, str>> {
    use std::borrow::Cow;
    let mut out: Vec<Cow<'a, str>> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if let Some(n) = fillers.match_at(&tokens, i) {
            // commas that delimited the filler go with it
            if let Some(prev) = out.last_mut() {
                if let Some(stripped) = prev.strip_suffix(',') {
                    *prev = Cow::Owned(stripped.to_string());
                }
            }
            i += n;
            continue;
        }
        let t = tokens[i];
        if !(cfg.remove_stopwords && cfg.stopword_list.contains(&normalize(t))) {
            out.push(Cow::Borrowed(t));
        }
        i += 1;
    }
    out.retain(|t| !t.is_empty());
    out
}

fn preprocess_once(text: &str, fillers: &Fillers, cfg: &PreprocessConfig) -> String {
    let mut lines = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        let (label, content) = split_speaker(line);
        let tokens = clean_tokens(content.split_whitespace().collect(), fillers, cfg);
        if tokens.is_empty() {
            continue;
        }
        let body = tokens.join(" ");
        lines.push(match label {
            Some(l) => format!("{l}: {body}"),
            None => body,
        });
    }
    lines.join("\n")
}

/// Removes filler phrases (longest first, case-insensitive, whole words) and,
/// if configured, stopwords. Speaker labels are kept, whitespace collapses to
/// single spaces, and lines left without content are dropped. Runs to a fixed
/// point, so applying it twice changes nothing.
pub fn preprocess(segment_text: &str, cfg: &PreprocessConfig) -> String {
    let fillers = Fillers::new(&cfg.filler_words);
    let mut current = preprocess_once(segment_text, &fillers, cfg);
    loop {
        let next = preprocess_once(&current, &fillers, cfg);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Deterministic stand-in for a summarization model:
/// `"<speakers> discuss: <first eight content words>"`.
pub fn mock_summarize(cleaned_text: &str) -> String {
    let mut speakers = BTreeSet::new();
    let mut words = Vec::new();
    for line in cleaned_text.lines() {
        let (label, content) = split_speaker(line.trim());
        if let Some(l) = label {
            speakers.insert(l.trim().to_string());
        }
        words.extend(
            content
                .split_whitespace()
                .take(MOCK_SUMMARY_WORDS - words.len().min(MOCK_SUMMARY_WORDS)),
        );
    }
    words.truncate(MOCK_SUMMARY_WORDS);
    let who = if speakers.is_empty() {
        "Participants".to_string()
    } else {
        speakers.into_iter().collect::<Vec<_>>().join(" and ")
    };
    format!("{who} discuss: {}", words.join(" "))
        .trim_end()
        .to_string()
}

pub trait SummarizerBackend: Send + Sync {
    fn summarize(&self, cleaned_text: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockSummarizer;

impl SummarizerBackend for MockSummarizer {
    fn summarize(&self, cleaned_text: &str) -> Result<String, BackendError> {
        Ok(mock_summarize(cleaned_text))
    }
}

#[derive(Debug, Serialize)]
struct SummarizeBody<'a> {
    text: &'a str,
}

#[derive(Debug, Deserialize)]
struct SummarizeReply {
    summary: String,
}

/// `POST {base}/summarize` with `{"text": …}`, expecting `{"summary": …}`.
#[derive(Debug, Clone)]
pub struct RemoteSummarizer {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteSummarizer {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ConfigError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            url: format!("{}/summarize", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl SummarizerBackend for RemoteSummarizer {
    fn summarize(&self, cleaned_text: &str) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&SummarizeBody { text: cleaned_text })
            .send()?;
        if !resp.status().is_success() {
            return Err(BackendError::Status(resp.status().as_u16()));
        }
        Ok(resp.json::<SummarizeReply>()?.summary)
    }
}

/// `SUMM_URL`-style selection: `mock:` or an http base URL.
pub fn backend_from_url(url: &str) -> Result<Arc<dyn SummarizerBackend>, ConfigError> {
    if url.starts_with("mock:") {
        Ok(Arc::new(MockSummarizer))
    } else {
        Ok(Arc::new(RemoteSummarizer::new(
            url,
            Duration::from_secs(120),
        )?))
    }
}

/// Preprocessing, backend call, retries, and output normalization.
#[derive(Clone)]
pub struct Summarizer {
    backend: Arc<dyn SummarizerBackend>,
    config: PreprocessConfig,
    retry: RetryPolicy,
}

impl Summarizer {
    pub fn new(
        backend: Arc<dyn SummarizerBackend>,
        config: PreprocessConfig,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            backend,
            config,
            retry,
        }
    }

    pub fn mock() -> Self {
        Self::new(
            Arc::new(MockSummarizer),
            PreprocessConfig::default(),
            RetryPolicy::immediate(3),
        )
    }

    pub fn preprocess(&self, segment_text: &str) -> String {
        preprocess(segment_text, &self.config)
    }

    /// Summarizes already-cleaned text; never fails outward.
    pub fn summarize(&self, cleaned_text: &str) -> String {
        if cleaned_text.trim().is_empty() {
            return NO_CONTENT.to_string();
        }
        match self
            .retry
            .run("summarization", |_| self.backend.summarize(cleaned_text))
        {
            Ok(s) => s.split_whitespace().collect::<Vec<_>>().join(" "),
            Err(e) => {
                log::error!("summarization failed: {e}");
                SUMMARIZATION_FAILED.to_string()
            }
        }
    }

    /// Raw transcript segment in, summary line out.
    pub fn summarize_segment(&self, segment_text: &str) -> String {
        self.summarize(&self.preprocess(segment_text))
    }
}
