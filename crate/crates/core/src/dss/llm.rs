//! LLM access with exact-replay fixtures.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AlbmError, Result};
use crate::io::write_atomic;

/// Where responses come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    /// Answer from the cache when possible, otherwise call the model and cache the answer.
    Live,
    /// Answer only from recorded fixtures. Never touches the network.
    Replay,
    /// Always call the model and overwrite the fixture.
    Record,
}

impl std::str::FromStr for LlmMode {
    type Err = AlbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(LlmMode::Live),
            "replay" => Ok(LlmMode::Replay),
            "record" => Ok(LlmMode::Record),
            other => Err(AlbmError::Argument(format!(
                "unknown LLM mode {other:?} (expected live, replay or record)"
            ))),
        }
    }
}

/// Anything that turns a prompt into a completion. Errors are transport
/// failures and get retried.
pub trait Transport: Send + Sync {
    fn complete(&self, model: &str, prompt: &str) -> std::result::Result<String, String>;
}

impl<F> Transport for F
where
    F: Fn(&str, &str) -> std::result::Result<String, String> + Send + Sync,
{
    fn complete(&self, model: &str, prompt: &str) -> std::result::Result<String, String> {
        self(model, prompt)
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request: String,
    pub response: String,
    pub model: String,
    /// Seconds since the Unix epoch at recording time.
    pub timestamp: u64,
}

/// Cache key: SHA-256 over the model id and the full rendered prompt.
pub fn request_hash(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 500,
        }
    }
}

/// Spaces transport calls at least `min_interval` apart across threads.
struct RateLimiter {
    min_interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

pub struct LlmClient {
    model: String,
    mode: LlmMode,
    cache_dir: PathBuf,
    transport: Option<Box<dyn Transport>>,
    retry: RetryPolicy,
    parallelism: usize,
    limiter: RateLimiter,
}

impl LlmClient {
    /// A replay-only client reading fixtures from `cache_dir`.
    pub fn replay(model: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self::build(model.into(), LlmMode::Replay, cache_dir.into(), None)
    }

    /// A client backed by a transport, in live or record mode.
    pub fn with_transport(
        model: impl Into<String>,
        mode: LlmMode,
        cache_dir: impl Into<PathBuf>,
        transport: Box<dyn Transport>,
    ) -> Self {
        Self::build(model.into(), mode, cache_dir.into(), Some(transport))
    }

    fn build(model: String, mode: LlmMode, cache_dir: PathBuf, transport: Option<Box<dyn Transport>>) -> Self {
        Self {
            model,
            mode,
            cache_dir,
            transport,
            retry: RetryPolicy::default(),
            parallelism: 1,
            limiter: RateLimiter {
                min_interval: Duration::ZERO,
                next: Mutex::new(Instant::now()),
            },
        }
    }

    pub fn retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Maximum concurrent requests for the fan-out stages.
    pub fn parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    /// Minimum spacing between transport calls, shared by all workers.
    pub fn min_interval(mut self, interval: Duration) -> Self {
        self.limiter.min_interval = interval;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    pub fn fixture_path(&self, prompt: &str) -> PathBuf {
        self.cache_dir
            .join(format!("{}.json", request_hash(&self.model, prompt)))
    }

    /// Completes `prompt`, honoring the mode's cache rules.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        match self.mode {
            LlmMode::Replay => self.read_fixture(prompt),
            LlmMode::Live => {
                if self.fixture_path(prompt).exists() {
                    self.read_fixture(prompt)
                } else {
                    self.call_and_store(prompt)
                }
            }
            LlmMode::Record => self.call_and_store(prompt),
        }
    }

    /// Like `complete` but skips the cache outside replay, for retrying an
    /// answer that was unusable.
    pub fn complete_fresh(&self, prompt: &str) -> Result<String> {
        match self.mode {
            LlmMode::Replay => self.read_fixture(prompt),
            LlmMode::Live | LlmMode::Record => self.call_and_store(prompt),
        }
    }

    /// Runs `f` over `items` with at most `parallelism` workers, keeping
    /// input order in the output.
    pub fn fan_out<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        if self.parallelism <= 1 || items.len() <= 1 {
            return items.iter().map(f).collect();
        }
        let next = Mutex::new(0usize);
        let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..self.parallelism.min(items.len()) {
                scope.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("work queue poisoned");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&items[i]);
                    *slots[i].lock().expect("result slot poisoned") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("result slot poisoned").expect("every item processed"))
            .collect()
    }

    fn read_fixture(&self, prompt: &str) -> Result<String> {
        let path = self.fixture_path(prompt);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AlbmError::MissingFixture {
                    hash: request_hash(&self.model, prompt),
                })
            }
            Err(e) => return Err(AlbmError::io(path, e)),
        };
        let fixture: Fixture = serde_json::from_str(&text)?;
        if fixture.request != prompt || fixture.model != self.model {
            return Err(AlbmError::Format(format!(
                "fixture {} does not match its request",
                path.display()
            )));
        }
        Ok(fixture.response)
    }

    fn call_and_store(&self, prompt: &str) -> Result<String> {
        let response = self.call(prompt)?;
        let fixture = Fixture {
            request: prompt.to_string(),
            response: response.clone(),
            model: self.model.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        std::fs::create_dir_all(&self.cache_dir).map_err(|e| AlbmError::io(&self.cache_dir, e))?;
        let mut bytes = serde_json::to_vec_pretty(&fixture)?;
        bytes.push(b'\n');
        write_atomic(&self.fixture_path(prompt), &bytes)?;
        Ok(response)
    }

    fn call(&self, prompt: &str) -> Result<String> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| AlbmError::Argument("no LLM transport configured".into()))?;
        let attempts = self.retry.attempts.max(1);
        let mut backoff = Duration::from_millis(self.retry.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            self.limiter.wait();
            match transport.complete(&self.model, prompt) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    log::warn!("LLM call attempt {attempt}/{attempts} failed: {e}");
                    last = e;
                }
            }
            if attempt < attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(AlbmError::Transport {
            attempts,
            message: last,
        })
    }
}

/// Settings for a generic chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub path: String,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub model_field: String,
    pub messages_field: String,
    /// JSON pointer to the completion text in the response body.
    pub response_pointer: String,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            path: "/v1/chat/completions".into(),
            auth_env: Some("OPENAI_API_KEY".into()),
            model_field: "model".into(),
            messages_field: "messages".into(),
            response_pointer: "/choices/0/message/content".into(),
            timeout_secs: 120,
        }
    }
}

impl HttpConfig {
    pub fn request_body(&self, model: &str, prompt: &str) -> serde_json::Value {
        let mut body = serde_json::Map::new();
        body.insert(self.model_field.clone(), model.into());
        body.insert(
            self.messages_field.clone(),
            serde_json::json!([{ "role": "user", "content": prompt }]),
        );
        serde_json::Value::Object(body)
    }

    pub fn extract(&self, body: &serde_json::Value) -> std::result::Result<String, String> {
        body.pointer(&self.response_pointer)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| format!("response has no string at {}", self.response_pointer))
    }
}

#[cfg(feature = "http")]
pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

#[cfg(feature = "http")]
impl HttpTransport {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                AlbmError::Config(vec![format!("environment variable {var} is not set")])
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self { config, agent, token })
    }
}

#[cfg(feature = "http")]
impl Transport for HttpTransport {
    fn complete(&self, model: &str, prompt: &str) -> std::result::Result<String, String> {
        let url = format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            self.config.path.trim_start_matches('/')
        );
        let mut req = self.agent.post(&url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(self.config.request_body(model, prompt))
            .map_err(|e| e.to_string())?;
        let body: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        self.config.extract(&body)
    }
}
