//! HTTP client for a scoring service speaking the `/v1/score` protocol.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;

use super::protocol::{ErrorResponse, LogprobsResponse, ProbsResponse, ScoreRequest, VectorResponse, SCORE_PATH};
use super::{
    default_timeout, validate_logprobs, validate_probs, Capabilities, Capability, EmbeddingGuard, ScoringBackend,
    TokenLogprobs,
};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOptions {
    /// Per-request deadline.
    pub timeout: Duration,
    /// Additional attempts after the first failure.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub max_concurrency: usize,
    /// Capabilities advertised by the service.
    pub capabilities: Capabilities,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout: default_timeout(),
            max_retries: 3,
            backoff: Duration::from_millis(100),
            max_concurrency: 8,
            capabilities: Capabilities::ALL,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    options: RemoteOptions,
    slots: Slots,
    retries: AtomicU64,
    guard: EmbeddingGuard,
}

enum Attempt {
    Retry(String),
    Fail(Error),
}

impl RemoteBackend {
    pub fn new(base_url: &str, options: RemoteOptions) -> Result<Self> {
        if !base_url.starts_with("http://") {
            return Err(Error::validation(
                "backend",
                format!("unsupported URL {base_url:?}; expected http://host:port"),
            ));
        }
        if options.max_concurrency == 0 {
            return Err(Error::validation("max_concurrency", "must be at least 1"));
        }
        options.capabilities.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build();
        Ok(RemoteBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            slots: Slots {
                free: Mutex::new(options.max_concurrency),
                cv: Condvar::new(),
            },
            options,
            retries: AtomicU64::new(0),
            guard: EmbeddingGuard::default(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Retries performed so far across all calls.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn attempt<T: DeserializeOwned>(&self, req: &ScoreRequest) -> std::result::Result<T, Attempt> {
        let url = format!("{}{SCORE_PATH}", self.base_url);
        let mut resp = match self.agent.post(&url).send_json(req) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading response: {e}")))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&body)
                .map_err(|e| Attempt::Fail(super::protocol(format!("malformed response body: {e}"))));
        }
        let message = serde_json::from_str::<ErrorResponse>(&body)
            .map(|e| e.error)
            .unwrap_or(body);
        if status == super::server::UNSUPPORTED_STATUS {
            let what = message.strip_prefix("backend does not support ").unwrap_or(&message);
            return Err(Attempt::Fail(Error::Capability(what.to_string())));
        }
        if status >= 500 || status == 429 {
            Err(Attempt::Retry(format!("status {status}: {message}")))
        } else {
            Err(Attempt::Fail(Error::Backend(BackendError::Server { status, message })))
        }
    }

    fn call<T: DeserializeOwned>(&self, req: &ScoreRequest) -> Result<T> {
        let _slot = self.slots.acquire();
        let mut delay = self.options.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(req) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempts > self.options.max_retries {
                        return Err(Error::Backend(BackendError::Transport { attempts, message }));
                    }
                    log::debug!("retrying {} after: {message}", self.base_url);
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
}

impl ScoringBackend for RemoteBackend {
    fn describe(&self) -> String {
        self.base_url.clone()
    }

    fn capabilities(&self) -> Capabilities {
        self.options.capabilities
    }

    fn conditional_logprobs(&self, text: &str) -> Result<TokenLogprobs> {
        self.options.capabilities.require(Capability::ConditionalLogprobs)?;
        let r: LogprobsResponse = self.call(&ScoreRequest::CausalLogprobs { text: text.to_string() })?;
        let out = TokenLogprobs {
            tokens: r.tokens,
            logprobs: r.logprobs,
        };
        validate_logprobs(&out)?;
        Ok(out)
    }

    fn mask_candidate_probs(&self, text: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        self.options.capabilities.require(Capability::MaskCandidateProbs)?;
        let r: ProbsResponse = self.call(&ScoreRequest::MaskCandidates {
            text: text.to_string(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
        })?;
        validate_probs(&r.probs, candidates.len())?;
        Ok(r.probs)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.options.capabilities.require(Capability::SentenceEmbedding)?;
        let r: VectorResponse = self.call(&ScoreRequest::Embed { text: text.to_string() })?;
        self.guard.check(&r.vector)?;
        Ok(r.vector)
    }
}
