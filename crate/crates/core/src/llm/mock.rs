//! Fixture-driven chat-completion mock, served over HTTP or in process.
//!
//! A fixture is JSONL, one rule per line:
//!
//! ```text
//! {"match": {"mode": "suffix", "needle": "Sentence: V was found.", "contains": ["JSON format"]},
//!  "respond": "{'technology': 'No'}", "status": 200, "delay_ms": 0}
//! ```
//!
//! Rules are tried in file order against the last user message and the
//! first match answers. Modes: `exact`, `substring`, `suffix`, `any`, and
//! `sequence`. Sequence rules sharing a needle form a queue: the n-th
//! matching request gets the n-th rule, and once the queue is drained the
//! request falls through to later rules. `contains` lists extra substrings
//! that must all be present.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, LlmClient, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Substring,
    Suffix,
    Any,
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    pub mode: MatchMode,
    #[serde(default)]
    pub needle: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
}

fn ok_status() -> u16 {
    200
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub respond: String,
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay_ms: u64,
}

impl FixtureRule {
    pub fn new(mode: MatchMode, needle: impl Into<String>, respond: impl Into<String>) -> Self {
        FixtureRule {
            matcher: Matcher {
                mode,
                needle: needle.into(),
                contains: Vec::new(),
            },
            respond: respond.into(),
            status: 200,
            delay_ms: 0,
        }
    }

    pub fn requiring(mut self, part: impl Into<String>) -> Self {
        self.matcher.contains.push(part.into());
        self
    }

    fn accepts(&self, content: &str) -> bool {
        let m = &self.matcher;
        let head = match m.mode {
            MatchMode::Exact => content == m.needle,
            MatchMode::Substring | MatchMode::Sequence => content.contains(&m.needle),
            MatchMode::Suffix => content.ends_with(&m.needle),
            MatchMode::Any => true,
        };
        head && m.contains.iter().all(|c| content.contains(c.as_str()))
    }
}

/// What an unmatched request gets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unmatched {
    Error { status: u16 },
    Respond(String),
}

impl Default for Unmatched {
    fn default() -> Self {
        Unmatched::Error { status: 404 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub content: String,
    pub delay_ms: u64,
    pub matched: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug)]
pub struct Fixture {
    rules: Vec<FixtureRule>,
    /// Position of each sequence rule within its needle group.
    queue_pos: Vec<usize>,
    consumed: Mutex<HashMap<String, usize>>,
    unmatched: Unmatched,
    /// First plain exact rule per needle; other rules are scanned in order.
    exact: HashMap<String, usize>,
    scan: Vec<usize>,
}

impl Fixture {
    pub fn new(rules: Vec<FixtureRule>) -> Self {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let queue_pos = rules
            .iter()
            .map(|r| {
                if r.matcher.mode != MatchMode::Sequence {
                    return 0;
                }
                let n = seen.entry(r.matcher.needle.as_str()).or_default();
                *n += 1;
                *n - 1
            })
            .collect();
        let mut exact = HashMap::new();
        let mut scan = Vec::new();
        for (i, r) in rules.iter().enumerate() {
            if r.matcher.mode == MatchMode::Exact && r.matcher.contains.is_empty() {
                exact.entry(r.matcher.needle.clone()).or_insert(i);
            } else {
                scan.push(i);
            }
        }
        Fixture {
            rules,
            queue_pos,
            consumed: Mutex::new(HashMap::new()),
            unmatched: Unmatched::default(),
            exact,
            scan,
        }
    }

    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule = serde_json::from_str(line).map_err(|e| FixtureError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            rules.push(rule);
        }
        Ok(Fixture::new(rules))
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Fixture::parse(&text)
    }

    pub fn with_unmatched(mut self, unmatched: Unmatched) -> Self {
        self.unmatched = unmatched;
        self
    }

    pub fn rules(&self) -> &[FixtureRule] {
        &self.rules
    }

    pub fn to_jsonl(&self) -> String {
        self.rules
            .iter()
            .map(|r| serde_json::to_string(r).expect("rules serialize") + "\n")
            .collect()
    }

    /// Rewinds every sequence queue.
    pub fn reset(&self) {
        self.consumed.lock().unwrap().clear();
    }

    pub fn respond(&self, content: &str) -> Reply {
        let exact = self.exact.get(content).copied();
        let mut consumed = self.consumed.lock().unwrap();
        let candidates = self
            .scan
            .iter()
            .copied()
            .take_while(|i| exact.is_none_or(|e| *i < e))
            .chain(exact);
        for i in candidates {
            let (rule, pos) = (&self.rules[i], self.queue_pos[i]);
            if !rule.accepts(content) {
                continue;
            }
            if rule.matcher.mode == MatchMode::Sequence {
                let used = consumed.entry(rule.matcher.needle.clone()).or_default();
                if *used != pos {
                    continue;
                }
                *used += 1;
            }
            return Reply {
                status: rule.status,
                content: rule.respond.clone(),
                delay_ms: rule.delay_ms,
                matched: true,
            };
        }
        match &self.unmatched {
            Unmatched::Error { status } => Reply {
                status: *status,
                content: format!("no fixture rule matches request: {}", excerpt(content)),
                delay_ms: 0,
                matched: false,
            },
            Unmatched::Respond(text) => Reply {
                status: 200,
                content: text.clone(),
                delay_ms: 0,
                matched: false,
            },
        }
    }
}

fn excerpt(s: &str) -> String {
    let n = s.chars().count();
    if n <= 160 {
        return s.to_string();
    }
    let tail: String = s.chars().skip(n - 160).collect();
    format!("...{tail}")
}

fn reply_to_result(reply: Reply, started: Instant) -> Result<ChatResponse, LlmError> {
    match reply.status {
        200..=299 => Ok(ChatResponse {
            content: reply.content,
            usage: None,
            latency_ms: started.elapsed().as_millis() as u64,
            attempts: 1,
        }),
        s if s >= 500 => Err(LlmError::Server {
            status: s,
            attempts: 1,
            body: reply.content,
        }),
        s => Err(LlmError::Request {
            status: s,
            body: reply.content,
        }),
    }
}

/// In-process client answering from a fixture, without HTTP.
pub struct ScriptedLlm {
    fixture: Arc<Fixture>,
    max_parallel: usize,
    calls: AtomicUsize,
    unmatched: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(fixture: Fixture) -> Self {
        ScriptedLlm {
            fixture: Arc::new(fixture),
            max_parallel: 1,
            calls: AtomicUsize::new(0),
            unmatched: AtomicUsize::new(0),
        }
    }

    pub fn with_max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n.max(1);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Requests no rule matched.
    pub fn unmatched(&self) -> usize {
        self.unmatched.load(Ordering::SeqCst)
    }

    pub fn fixture(&self) -> &Fixture {
        &self.fixture
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let started = Instant::now();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = self.fixture.respond(req.user_content());
        if !reply.matched {
            self.unmatched.fetch_add(1, Ordering::SeqCst);
        }
        if reply.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(reply.delay_ms));
        }
        reply_to_result(reply, started)
    }

    fn max_parallel(&self) -> usize {
        self.max_parallel
    }
}

#[derive(Debug, Default)]
pub struct MockStats {
    requests: AtomicUsize,
    unmatched: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl MockStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn unmatched(&self) -> usize {
        self.unmatched.load(Ordering::SeqCst)
    }

    /// Highest number of requests seen in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

struct AppState {
    fixture: Arc<Fixture>,
    stats: Arc<MockStats>,
    served: AtomicUsize,
}

/// A running mock endpoint. Dropping it shuts the server down.
pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<MockStats>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &MockStats {
        &self.stats
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `fixture` on an ephemeral localhost port.
pub fn serve_mock(fixture: Fixture) -> std::io::Result<MockServer> {
    serve_mock_on(fixture, "127.0.0.1:0")
}

pub fn serve_mock_on(fixture: Fixture, addr: &str) -> std::io::Result<MockServer> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stats = Arc::new(MockStats::default());
    let state = Arc::new(AppState {
        fixture: Arc::new(fixture),
        stats: stats.clone(),
        served: AtomicUsize::new(0),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name(format!("mock-llm-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("mock server listener: {e}");
                        return;
                    }
                };
                let app = Router::new()
                    .route("/chat/completions", post(chat))
                    .route("/v1/chat/completions", post(chat))
                    .with_state(state);
                let served = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = served.await {
                    log::error!("mock server: {e}");
                }
            });
        })?;
    Ok(MockServer {
        addr,
        stats,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

async fn chat(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let stats = &st.stats;
    stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    let response = answer(&st, &body).await;
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    response
}

async fn answer(st: &AppState, body: &[u8]) -> Response {
    let req: ChatRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                axum::Json(json!({"error": {"message": format!("invalid request body: {e}")}})),
            )
                .into_response()
        }
    };
    let reply = st.fixture.respond(req.user_content());
    if !reply.matched {
        st.stats.unmatched.fetch_add(1, Ordering::SeqCst);
    }
    if reply.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(reply.delay_ms)).await;
    }
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if !status.is_success() {
        return (
            status,
            axum::Json(json!({"error": {"message": reply.content}})),
        )
            .into_response();
    }
    let n = st.served.fetch_add(1, Ordering::SeqCst);
    let body: Value = json!({
        "id": format!("mock-{n}"),
        "object": "chat.completion",
        "model": req.model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": reply.content},
            "finish_reason": "stop",
        }],
        "usage": {
            "prompt_tokens": req.messages.iter().map(|m| m.content.split_whitespace().count()).sum::<usize>(),
            "completion_tokens": reply.content.split_whitespace().count(),
        },
    });
    (status, axum::Json(body)).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatRequest, EndpointConfig, HttpClient};

    fn ask(f: &Fixture, content: &str) -> (u16, String) {
        let r = f.respond(content);
        (r.status, r.content)
    }

    #[test]
    fn indexed_exact_rules_keep_file_order() {
        let f = Fixture::new(vec![
            FixtureRule::new(MatchMode::Exact, "a b", "exact-first"),
            FixtureRule::new(MatchMode::Substring, "b", "sub"),
            FixtureRule::new(MatchMode::Exact, "b c", "exact-late"),
            FixtureRule::new(MatchMode::Exact, "a b", "shadowed"),
            FixtureRule::new(MatchMode::Exact, "x", "needs").requiring("y"),
        ]);
        assert_eq!(ask(&f, "a b").1, "exact-first");
        assert_eq!(ask(&f, "b c").1, "sub");
        assert_eq!(ask(&f, "x").0, 404);
    }

    #[test]
    fn match_modes() {
        let f = Fixture::new(vec![
            FixtureRule::new(MatchMode::Exact, "hello", "exact"),
            FixtureRule::new(MatchMode::Suffix, "Sentence: X", "suffix").requiring("JSON"),
            FixtureRule::new(MatchMode::Substring, "needle", "substring"),
            FixtureRule::new(MatchMode::Any, "", "any"),
        ]);
        assert_eq!(ask(&f, "hello").1, "exact");
        assert_eq!(ask(&f, "reply in JSON\n\nSentence: X").1, "suffix");
        assert_eq!(ask(&f, "no keyword\n\nSentence: X").1, "any");
        assert_eq!(ask(&f, "a needle here").1, "substring");
        assert_eq!(ask(&f, "hello!").1, "any");
    }

    #[test]
    fn sequence_queue_then_fallthrough() {
        let mut rules: Vec<FixtureRule> = (0..5)
            .map(|i| FixtureRule::new(MatchMode::Sequence, "", format!("r{i}")))
            .collect();
        rules.push(FixtureRule::new(MatchMode::Any, "", "done"));
        let f = Fixture::new(rules);
        let got: Vec<String> = (0..7).map(|_| ask(&f, "q").1).collect();
        assert_eq!(got, ["r0", "r1", "r2", "r3", "r4", "done", "done"]);
        f.reset();
        assert_eq!(ask(&f, "q").1, "r0");
    }

    #[test]
    fn separate_needles_are_separate_queues() {
        let f = Fixture::parse(
            "{\"match\":{\"mode\":\"sequence\",\"needle\":\"a\"},\"respond\":\"a1\"}\n\
             {\"match\":{\"mode\":\"sequence\",\"needle\":\"b\"},\"respond\":\"b1\"}\n\
             {\"match\":{\"mode\":\"sequence\",\"needle\":\"a\"},\"respond\":\"a2\"}\n",
        )
        .unwrap();
        assert_eq!(ask(&f, "b").1, "b1");
        assert_eq!(ask(&f, "a").1, "a1");
        assert_eq!(ask(&f, "a").1, "a2");
        assert_eq!(ask(&f, "a").0, 404);
    }

    #[test]
    fn unmatched_policy() {
        let f = Fixture::new(Vec::new());
        assert_eq!(ask(&f, "x").0, 404);
        let f = Fixture::new(Vec::new()).with_unmatched(Unmatched::Respond("T".into()));
        assert_eq!(ask(&f, "x"), (200, "T".to_string()));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err =
            Fixture::parse("\n{\"match\":{\"mode\":\"bogus\"},\"respond\":\"x\"}").unwrap_err();
        assert!(matches!(err, FixtureError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn jsonl_round_trip() {
        let f = Fixture::new(vec![
            FixtureRule::new(MatchMode::Suffix, "s", "r").requiring("c"),
            FixtureRule {
                status: 503,
                delay_ms: 3,
                ..FixtureRule::new(MatchMode::Sequence, "", "x")
            },
        ]);
        let again = Fixture::parse(&f.to_jsonl()).unwrap();
        assert_eq!(again.rules(), f.rules());
    }

    #[test]
    fn http_and_in_process_agree() {
        let text = "{\"match\":{\"mode\":\"exact\",\"needle\":\"one\"},\"respond\":\"1\"}\n\
                    {\"match\":{\"mode\":\"any\"},\"respond\":\"other\"}";
        let server = serve_mock(Fixture::parse(text).unwrap()).unwrap();
        let http = HttpClient::new(EndpointConfig::new(server.base_url(), "m")).unwrap();
        let local = ScriptedLlm::new(Fixture::parse(text).unwrap());
        for q in ["one", "two", "one"] {
            let r = ChatRequest::new("m", "sys", q);
            assert_eq!(
                http.complete(&r).unwrap().content,
                local.complete(&r).unwrap().content
            );
        }
        assert_eq!(local.calls(), 3);
        assert_eq!(server.stats().requests(), 3);
        assert_eq!(server.stats().unmatched(), 0);
    }
}
