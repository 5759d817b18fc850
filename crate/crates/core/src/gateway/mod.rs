//! Dispatching rendered prompts to a model.
//!
//! A [`Gateway`] wraps a [`Backend`] with the response cache, a per-minute
//! request cap, bounded parallelism and retry with exponential backoff.
//! Requests that still fail after the attempt budget come back as
//! [`Error::TransportExhausted`]; callers record them as "no response".

pub mod cache;
pub mod http;
pub mod synthetic;

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{cache_key, ResponseCache};
pub use http::{HttpBackend, Transport, TransportError, UreqTransport, API_KEY_ENV};
pub use synthetic::{HallucinationStyle, SyntheticBackend, SyntheticModel, SyntheticProfile};

use crate::error::{Error, Result};
use crate::ontology::OntologyKind;
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provider {
    ChatHttp,
    CompletionHttp,
    Synthetic,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::ChatHttp => "CHAT_HTTP",
            Provider::CompletionHttp => "COMPLETION_HTTP",
            Provider::Synthetic => "SYNTHETIC",
        }
    }
}

fn default_max_new_tokens() -> u32 {
    10
}
fn default_max_in_flight() -> usize {
    4
}
fn default_max_attempts() -> u32 {
    5
}
fn default_backoff_initial_ms() -> u64 {
    500
}
fn default_backoff_max_ms() -> u64 {
    30_000
}
fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub provider: Provider,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Synthetic profile file, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_initial_ms")]
    pub backoff_initial_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Per-ontology overrides of the built-in extraction patterns.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extraction_patterns: BTreeMap<OntologyKind, String>,
}

impl ModelConfig {
    pub fn synthetic(model_name: &str, seed: u64) -> Self {
        ModelConfig {
            provider: Provider::Synthetic,
            model_name: model_name.to_string(),
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
            endpoint: None,
            seed: Some(seed),
            profile: None,
            max_in_flight: default_max_in_flight(),
            requests_per_minute: None,
            max_attempts: default_max_attempts(),
            backoff_initial_ms: default_backoff_initial_ms(),
            backoff_max_ms: default_backoff_max_ms(),
            timeout_secs: default_timeout_secs(),
            extraction_patterns: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::Config(format!("temperature {} is outside [0, 1]", self.temperature)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if self.requests_per_minute == Some(0) {
            return Err(Error::Config("requests_per_minute must be positive".into()));
        }
        match self.provider {
            Provider::ChatHttp | Provider::CompletionHttp if self.endpoint.is_none() => {
                Err(Error::Config(format!("{} needs an `endpoint`", self.provider.as_str())))
            }
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("model config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub prompt: RenderedPrompt,
    pub temperature: f64,
    /// Distinguishes intentional repeats of the same prompt.
    pub repetition_tag: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub request_id: String,
    pub raw_text: String,
    pub latency: Duration,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying: timeouts, 429, 5xx, dropped connections.
    Transient(String),
    Auth(String),
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn call(&self, request: &Request) -> std::result::Result<String, BackendError>;
}

/// Time source for backoff and rate limiting.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock that advances only when slept on.
#[derive(Default)]
pub struct ManualClock {
    nanos: AtomicU64,
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

const RATE_WINDOW: Duration = Duration::from_secs(60);

/// Sliding one-minute window over request start times.
struct RateLimiter {
    cap: Option<usize>,
    starts: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    fn new(cap: Option<u32>) -> Self {
        RateLimiter {
            cap: cap.map(|c| c as usize),
            starts: Mutex::new(VecDeque::new()),
        }
    }

    fn acquire(&self, clock: &dyn Clock) {
        let Some(cap) = self.cap else {
            return;
        };
        let mut starts = self.starts.lock().expect("rate limiter lock");
        loop {
            let now = clock.now();
            while starts.front().is_some_and(|&t| t + RATE_WINDOW <= now) {
                starts.pop_front();
            }
            if starts.len() < cap {
                starts.push_back(now);
                return;
            }
            let oldest = *starts.front().expect("window is full");
            clock.sleep(oldest + RATE_WINDOW - now);
        }
    }
}

pub struct Gateway {
    config: ModelConfig,
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    backend_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(config: ModelConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        config.validate()?;
        Ok(Gateway {
            limiter: RateLimiter::new(config.requests_per_minute),
            config,
            backend,
            cache: None,
            clock: Arc::new(SystemClock::default()),
            backend_calls: AtomicUsize::new(0),
        })
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Requests actually sent to the backend, retries included.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn request(&self, prompt: RenderedPrompt, repetition_tag: u64) -> Request {
        Request {
            prompt,
            temperature: self.config.temperature,
            repetition_tag,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        let ms = self
            .config
            .backoff_initial_ms
            .saturating_mul(factor)
            .min(self.config.backoff_max_ms);
        Duration::from_millis(ms)
    }

    pub fn complete(&self, request: &Request) -> Result<ModelResponse> {
        let key = cache_key(
            self.config.provider,
            &self.config.model_name,
            request.temperature,
            &request.prompt.text,
            request.repetition_tag,
        );
        let started = self.clock.now();
        if let Some(raw_text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(ModelResponse {
                request_id: key,
                raw_text,
                latency: Duration::ZERO,
                from_cache: true,
            });
        }
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts {
            self.limiter.acquire(self.clock.as_ref());
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.call(request) {
                Ok(raw_text) => {
                    if let Some(cache) = &self.cache {
                        cache.insert(key.clone(), &self.config, &request.prompt.text, &raw_text)?;
                    }
                    return Ok(ModelResponse {
                        request_id: key,
                        raw_text,
                        latency: self.clock.now().saturating_sub(started),
                        from_cache: false,
                    });
                }
                Err(BackendError::Transient(msg)) => {
                    last_error = msg;
                    if attempt < self.config.max_attempts {
                        self.clock.sleep(self.backoff(attempt));
                    }
                }
                Err(BackendError::Auth(msg)) => return Err(Error::Auth(msg)),
                Err(BackendError::Fatal(msg)) => return Err(Error::Config(msg)),
            }
        }
        Err(Error::TransportExhausted {
            attempts: self.config.max_attempts,
            message: last_error,
        })
    }

    /// Completes every request with at most `max_in_flight` outstanding.
    /// Results are in request order. An authentication or fatal error stops
    /// scheduling; requests not yet started report that error too.
    pub fn complete_batch(&self, requests: &[Request]) -> Vec<Result<ModelResponse>> {
        let next = AtomicUsize::new(0);
        let abort: Mutex<Option<String>> = Mutex::new(None);
        let aborted = AtomicBool::new(false);
        let slots: Vec<Mutex<Option<Result<ModelResponse>>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_in_flight.min(requests.len()).max(1);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if aborted.load(Ordering::SeqCst) {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(request) = requests.get(i) else {
                        return;
                    };
                    let result = self.complete(request);
                    if let Err(e @ (Error::Auth(_) | Error::Config(_))) = &result {
                        aborted.store(true, Ordering::SeqCst);
                        abort.lock().expect("abort lock").get_or_insert_with(|| e.to_string());
                    }
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });

        let reason = abort.into_inner().expect("abort lock");
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner().expect("slot lock").unwrap_or_else(|| {
                    Err(Error::Config(format!(
                        "not sent: batch aborted ({})",
                        reason.as_deref().unwrap_or("unknown")
                    )))
                })
            })
            .collect()
    }
}

/// Builds the backend a config asks for. Synthetic configs need a profile.
pub fn build_backend(
    config: &ModelConfig,
    profile: Option<SyntheticProfile>,
    fallback_seed: u64,
) -> Result<Arc<dyn Backend>> {
    config.validate()?;
    match config.provider {
        Provider::Synthetic => {
            let profile =
                profile.ok_or_else(|| Error::Config("synthetic provider needs a profile".into()))?;
            let model = SyntheticModel::new(profile)?;
            Ok(Arc::new(SyntheticBackend::new(model, config.seed.unwrap_or(fallback_seed))))
        }
        Provider::ChatHttp | Provider::CompletionHttp => {
            let key = std::env::var(API_KEY_ENV)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| Error::Config(format!("set {API_KEY_ENV} to call {}", config.provider.as_str())))?;
            let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
            Ok(Arc::new(HttpBackend::new(config, Some(key), transport)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::ConceptId;
    use crate::prompt::{Language, PromptStyle, TemplateKey};

    fn req(text: &str, tag: u64) -> Request {
        Request {
            prompt: RenderedPrompt {
                key: TemplateKey {
                    ontology: OntologyKind::Go,
                    style: PromptStyle::Chat,
                    language: Language::En,
                },
                concept_id: ConceptId::new("GO:0001822").unwrap(),
                label: "kidney development".into(),
                text: text.into(),
            },
            temperature: 0.0,
            repetition_tag: tag,
        }
    }

    struct Flaky {
        failures_left: AtomicUsize,
        error: BackendError,
    }

    impl Backend for Flaky {
        fn call(&self, request: &Request) -> std::result::Result<String, BackendError> {
            let left = self.failures_left.load(Ordering::SeqCst);
            if left > 0 {
                self.failures_left.store(left - 1, Ordering::SeqCst);
                return Err(self.error.clone());
            }
            Ok(format!("echo {}", request.prompt.text))
        }
    }

    fn config() -> ModelConfig {
        ModelConfig {
            max_attempts: 3,
            backoff_initial_ms: 100,
            ..ModelConfig::synthetic("m", 0)
        }
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let clock = Arc::new(ManualClock::default());
        let backend = Arc::new(Flaky {
            failures_left: AtomicUsize::new(2),
            error: BackendError::Transient("429".into()),
        });
        let gw = Gateway::new(config(), backend).unwrap().with_clock(clock.clone());
        let resp = gw.complete(&req("p", 0)).unwrap();
        assert_eq!(resp.raw_text, "echo p");
        assert_eq!(gw.backend_calls(), 3);
        // 100 ms then 200 ms of backoff
        assert_eq!(clock.now(), Duration::from_millis(300));
    }

    #[test]
    fn exhausts_attempt_budget() {
        let backend = Arc::new(Flaky {
            failures_left: AtomicUsize::new(10),
            error: BackendError::Transient("503".into()),
        });
        let gw = Gateway::new(config(), backend)
            .unwrap()
            .with_clock(Arc::new(ManualClock::default()));
        assert!(matches!(
            gw.complete(&req("p", 0)),
            Err(Error::TransportExhausted { attempts: 3, .. })
        ));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let backend = Arc::new(Flaky {
            failures_left: AtomicUsize::new(10),
            error: BackendError::Auth("401".into()),
        });
        let gw = Gateway::new(config(), backend).unwrap();
        assert!(matches!(gw.complete(&req("p", 0)), Err(Error::Auth(_))));
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn cache_hits_and_repetition_tags() {
        let backend = Arc::new(Flaky {
            failures_left: AtomicUsize::new(0),
            error: BackendError::Fatal(String::new()),
        });
        let gw = Gateway::new(config(), backend).unwrap().with_cache(ResponseCache::memory());
        let first = gw.complete(&req("p", 0)).unwrap();
        let second = gw.complete(&req("p", 0)).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(first.raw_text, second.raw_text);
        assert!(!gw.complete(&req("p", 1)).unwrap().from_cache);
        assert_eq!(gw.backend_calls(), 2);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::synthetic("m", 0);
        c.temperature = 1.5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::synthetic("m", 0);
        c.max_new_tokens = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::synthetic("m", 0);
        c.provider = Provider::ChatHttp;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_json_defaults() {
        let c = ModelConfig::from_json(r#"{"provider": "CHAT_HTTP", "model_name": "gpt-4", "endpoint": "https://api.example.com/v1"}"#)
            .unwrap();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_new_tokens, 10);
        assert!(ModelConfig::from_json(r#"{"provider": "CHAT_HTTP", "model_name": "x", "bogus": 1}"#).is_err());
    }

    #[test]
    fn missing_api_key_fails_before_any_call() {
        let mut c = ModelConfig::synthetic("m", 0);
        c.provider = Provider::ChatHttp;
        c.endpoint = Some("http://127.0.0.1:9".into());
        // only meaningful when the variable is unset in the test environment
        if std::env::var(API_KEY_ENV).is_err() {
            assert!(matches!(build_backend(&c, None, 0), Err(Error::Config(_))));
        }
    }
}
