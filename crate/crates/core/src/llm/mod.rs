//! Chat-completion client, batch execution and a fixture-driven mock.

pub mod json;
pub mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use json::{extract_json_object, ExtractionError, JsonObject, TriState};
pub use mock::{serve_mock, Fixture, FixtureRule, MatchMode, MockServer, ScriptedLlm, Unmatched};

pub const ENV_ENDPOINT: &str = "THEMEMINER_ENDPOINT";
pub const ENV_API_KEY: &str = "THEMEMINER_API_KEY";
pub const ENV_MAX_PARALLEL: &str = "THEMEMINER_MAX_PARALLEL";

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// System prompt followed by one user turn, at temperature 0.
    pub fn new(model: &str, system: &str, user: impl Into<String>) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage {
                    role: Role::System,
                    content: system.to_string(),
                },
                ChatMessage {
                    role: Role::User,
                    content: user.into(),
                },
            ],
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Content of the last user message, which fixtures match against.
    pub fn user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 4,
            backoff_base_ms: 500,
            backoff_factor: 2.0,
        }
    }
}

impl RetryConfig {
    /// Sleep before attempt `attempt + 1`, where `attempt` is 1-based.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms as f64 * self.backoff_factor.powi(attempt as i32 - 1);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub retry: RetryConfig,
    pub max_parallel: usize,
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout_ms", &self.timeout_ms)
            .field("retry", &self.retry)
            .field("max_parallel", &self.max_parallel)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout_ms: 120_000,
            retry: RetryConfig::default(),
            max_parallel: 4,
        }
    }

    /// Applies endpoint, key and parallelism overrides from the environment.
    pub fn apply_env(&mut self) -> Result<(), LlmError> {
        self.apply_vars(|k| std::env::var(k).ok())
    }

    fn apply_vars(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), LlmError> {
        if let Some(url) = var(ENV_ENDPOINT) {
            self.base_url = url;
        }
        if let Some(key) = var(ENV_API_KEY) {
            self.api_key = Some(key);
        }
        if let Some(n) = var(ENV_MAX_PARALLEL) {
            self.max_parallel = n.trim().parse().map_err(|_| {
                LlmError::Config(format!(
                    "{ENV_MAX_PARALLEL}={n:?} is not a positive integer"
                ))
            })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.retry.max_attempts == 0 {
            return Err(LlmError::Config(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(LlmError::Config("timeout_ms must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(LlmError::Config("max_parallel must be at least 1".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server error {status} after {attempts} attempt(s): {body}")]
    Server {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("request rejected with status {status}: {body}")]
    Request { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Decode(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::Transport { attempts, .. } | LlmError::Server { attempts, .. } => *attempts,
            LlmError::Request { .. } | LlmError::Decode(_) => 1,
            LlmError::Config(_) => 0,
        }
    }
}

/// Anything that answers chat requests. Implementations must be shareable
/// across worker threads.
pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Requests this client may have in flight at once.
    fn max_parallel(&self) -> usize {
        1
    }
}

/// Blocking HTTP client for `<base_url>/chat/completions`.
pub struct HttpClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient { cfg, agent })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn attempt(&self, body: &Value) -> Result<(u16, String), String> {
        let mut req = self
            .agent
            .post(&self.cfg.completions_url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

fn body_excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

/// Reads `choices[0].message.content` and optional usage counts.
pub fn parse_completion(body: &str) -> Result<(String, Option<Usage>), LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            LlmError::Decode(format!(
                "no choices[0].message.content in {}",
                body_excerpt(body)
            ))
        })?;
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((content.to_string(), usage))
}

impl LlmClient for HttpClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let started = Instant::now();
        let max = self.cfg.retry.max_attempts;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let retryable = match self.attempt(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    let (content, usage) = parse_completion(&text)?;
                    return Ok(ChatResponse {
                        content,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                    });
                }
                Ok((status, text)) if status >= 500 => LlmError::Server {
                    status,
                    attempts: attempt,
                    body: body_excerpt(&text),
                },
                Ok((status, text)) => {
                    return Err(LlmError::Request {
                        status,
                        body: body_excerpt(&text),
                    })
                }
                Err(message) => LlmError::Transport {
                    attempts: attempt,
                    message,
                },
            };
            if attempt >= max {
                return Err(retryable);
            }
            log::debug!("attempt {attempt}/{max} failed: {retryable}");
            std::thread::sleep(self.cfg.retry.backoff(attempt));
        }
    }

    fn max_parallel(&self) -> usize {
        self.cfg.max_parallel
    }
}

/// Applies `f` to every item with at most `max_parallel` calls running at
/// once. Results come back in input order.
pub fn parallel_map<T, R, F>(items: &[T], max_parallel: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_parallel.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Runs keyed requests with bounded parallelism. Output keeps input order;
/// a failed request only affects its own entry.
pub fn complete_batch<K, C>(
    client: &C,
    reqs: Vec<(K, ChatRequest)>,
) -> Vec<(K, Result<ChatResponse, LlmError>)>
where
    K: Send + Sync,
    C: LlmClient + ?Sized,
{
    let results = parallel_map(&reqs, client.max_parallel(), |(_, r)| client.complete(r));
    reqs.into_iter().map(|(k, _)| k).zip(results).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(url: &str) -> EndpointConfig {
        let mut cfg = EndpointConfig::new(url, "test-model");
        cfg.retry = RetryConfig {
            max_attempts: 3,
            backoff_base_ms: 1,
            backoff_factor: 2.0,
        };
        cfg.timeout_ms = 5_000;
        cfg
    }

    fn fixture(text: &str) -> Fixture {
        Fixture::parse(text).unwrap()
    }

    fn req(user: &str) -> ChatRequest {
        ChatRequest::new("test-model", "system", user)
    }

    #[test]
    fn request_invariants() {
        let r = req("hi");
        assert_eq!(r.messages[0].role, Role::System);
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.max_tokens, 1024);
        assert_eq!(r.user_content(), "hi");
    }

    #[test]
    fn echo_fixture() {
        let server = serve_mock(fixture(r#"{"match":{"mode":"any"},"respond":"A"}"#)).unwrap();
        let client = HttpClient::new(quick(&server.base_url())).unwrap();
        let resp = client.complete(&req("anything")).unwrap();
        assert_eq!(resp.content, "A");
        assert_eq!(resp.attempts, 1);
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let f = fixture(
            "{\"match\":{\"mode\":\"sequence\"},\"respond\":\"overloaded\",\"status\":503}\n\
             {\"match\":{\"mode\":\"sequence\"},\"respond\":\"overloaded\",\"status\":500}\n\
             {\"match\":{\"mode\":\"sequence\"},\"respond\":\"B\"}",
        );
        let server = serve_mock(f).unwrap();
        let client = HttpClient::new(quick(&server.base_url())).unwrap();
        let resp = client.complete(&req("x")).unwrap();
        assert_eq!(resp.content, "B");
        assert_eq!(resp.attempts, 3);
        assert_eq!(server.stats().requests(), 3);
    }

    #[test]
    fn exhausted_retries_report_last_status() {
        let server = serve_mock(fixture(
            r#"{"match":{"mode":"any"},"respond":"down","status":502}"#,
        ))
        .unwrap();
        let client = HttpClient::new(quick(&server.base_url())).unwrap();
        let err = client.complete(&req("x")).unwrap_err();
        assert!(
            matches!(
                err,
                LlmError::Server {
                    status: 502,
                    attempts: 3,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = serve_mock(fixture(
            r#"{"match":{"mode":"any"},"respond":"bad request","status":400}"#,
        ))
        .unwrap();
        let client = HttpClient::new(quick(&server.base_url())).unwrap();
        match client.complete(&req("x")) {
            Err(LlmError::Request { status, body }) => {
                assert_eq!(status, 400);
                assert!(body.contains("bad request"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(server.stats().requests(), 1);
    }

    #[test]
    fn connection_refused_is_transport_error() {
        let port = std::net::TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let client = HttpClient::new(quick(&format!("http://127.0.0.1:{port}"))).unwrap();
        let err = client.complete(&req("x")).unwrap_err();
        assert!(
            matches!(err, LlmError::Transport { attempts: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn empty_batch() {
        let llm = ScriptedLlm::new(fixture(r#"{"match":{"mode":"any"},"respond":"A"}"#));
        let out: Vec<(usize, _)> = complete_batch(&llm, Vec::new());
        assert!(out.is_empty());
    }

    #[test]
    fn batch_respects_parallel_bound() {
        let server = serve_mock(fixture(
            r#"{"match":{"mode":"any"},"respond":"ok","delay_ms":5}"#,
        ))
        .unwrap();
        let mut cfg = quick(&server.base_url());
        cfg.max_parallel = 4;
        let client = HttpClient::new(cfg).unwrap();
        let reqs: Vec<(usize, ChatRequest)> =
            (0..100).map(|i| (i, req(&format!("r{i}")))).collect();
        let out = complete_batch(&client, reqs);
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(|(_, r)| r.as_ref().unwrap().content == "ok"));
        let peak = server.stats().peak_in_flight();
        assert!(peak <= 4, "peak {peak}");
        assert!(peak >= 2, "requests never overlapped (peak {peak})");
    }

    #[test]
    fn batch_order_survives_latency_jitter() {
        let mut lines = Vec::new();
        for i in 0..40 {
            let delay = (i * 7919) % 13;
            lines.push(format!(
                r#"{{"match":{{"mode":"exact","needle":"q{i}"}},"respond":"a{i}","delay_ms":{delay}}}"#
            ));
        }
        let server = serve_mock(fixture(&lines.join("\n"))).unwrap();
        let mut cfg = quick(&server.base_url());
        cfg.max_parallel = 8;
        let client = HttpClient::new(cfg).unwrap();
        let reqs: Vec<(String, ChatRequest)> = (0..40)
            .map(|i| (format!("k{i}"), req(&format!("q{i}"))))
            .collect();
        let out = complete_batch(&client, reqs);
        for (i, (k, r)) in out.iter().enumerate() {
            assert_eq!(k, &format!("k{i}"));
            assert_eq!(r.as_ref().unwrap().content, format!("a{i}"));
        }
    }

    #[test]
    fn batch_isolates_item_errors() {
        let llm = ScriptedLlm::new(fixture(
            "{\"match\":{\"mode\":\"exact\",\"needle\":\"bad\"},\"respond\":\"no\",\"status\":422}\n\
             {\"match\":{\"mode\":\"any\"},\"respond\":\"fine\"}",
        ))
        .with_max_parallel(3);
        let reqs = vec![(1, req("good")), (2, req("bad")), (3, req("good"))];
        let out = complete_batch(&llm, reqs);
        assert!(out[0].1.is_ok());
        assert!(matches!(
            out[1].1,
            Err(LlmError::Request { status: 422, .. })
        ));
        assert!(out[2].1.is_ok());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = EndpointConfig::new("http://localhost:1", "m");
        let vars = |k: &str| match k {
            ENV_ENDPOINT => Some("http://example.test/v1".to_string()),
            ENV_API_KEY => Some("secret".to_string()),
            ENV_MAX_PARALLEL => Some("16".to_string()),
            _ => None,
        };
        cfg.apply_vars(vars).unwrap();
        assert_eq!(
            cfg.completions_url(),
            "http://example.test/v1/chat/completions"
        );
        assert_eq!(cfg.max_parallel, 16);
        assert!(!format!("{cfg:?}").contains("secret"));
        assert!(!serde_json::to_string(&cfg).unwrap().contains("secret"));
        let mut bad = EndpointConfig::new("x", "m");
        assert!(bad
            .apply_vars(|k| (k == ENV_MAX_PARALLEL).then(|| "0".to_string()))
            .is_err());
    }

    #[test]
    fn backoff_grows_geometrically() {
        let r = RetryConfig {
            max_attempts: 5,
            backoff_base_ms: 100,
            backoff_factor: 2.0,
        };
        let d: Vec<u64> = (1..=4).map(|a| r.backoff(a).as_millis() as u64).collect();
        assert_eq!(d, [100, 200, 400, 800]);
    }

    #[test]
    fn completion_body_parsing() {
        let (c, u) = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"X"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#,
        )
        .unwrap();
        assert_eq!(c, "X");
        assert_eq!(u.unwrap().completion_tokens, 1);
        assert!(matches!(parse_completion("{}"), Err(LlmError::Decode(_))));
    }
}
