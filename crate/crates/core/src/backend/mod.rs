//! Scoring backends: a small capability-tagged interface over language
//! models, with table-driven, in-process and HTTP implementations.

pub mod conformance;
pub mod inprocess;
pub mod mock;
pub mod protocol;
pub mod remote;
pub mod server;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use inprocess::InProcessBackend;
pub use mock::{MockBackend, MockTable};
pub use remote::{RemoteBackend, RemoteOptions};
pub use server::ScoringServer;

use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    ConditionalLogprobs,
    MaskCandidateProbs,
    SentenceEmbedding,
}

impl Capability {
    pub const ALL: [Capability; 3] = [
        Capability::ConditionalLogprobs,
        Capability::MaskCandidateProbs,
        Capability::SentenceEmbedding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::ConditionalLogprobs => "conditional_logprobs",
            Capability::MaskCandidateProbs => "mask_candidate_probs",
            Capability::SentenceEmbedding => "sentence_embedding",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default)]
    pub conditional_logprobs: bool,
    #[serde(default)]
    pub mask_candidate_probs: bool,
    #[serde(default)]
    pub sentence_embedding: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        conditional_logprobs: true,
        mask_candidate_probs: true,
        sentence_embedding: true,
    };

    pub fn supports(&self, cap: Capability) -> bool {
        match cap {
            Capability::ConditionalLogprobs => self.conditional_logprobs,
            Capability::MaskCandidateProbs => self.mask_candidate_probs,
            Capability::SentenceEmbedding => self.sentence_embedding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditional_logprobs || self.mask_candidate_probs || self.sentence_embedding {
            Ok(())
        } else {
            Err(Error::validation("capabilities", "at least one capability must be set"))
        }
    }

    /// Error unless `cap` is supported.
    pub fn require(&self, cap: Capability) -> Result<()> {
        if self.supports(cap) {
            Ok(())
        } else {
            Err(Error::Capability(cap.to_string()))
        }
    }
}

/// Per-token natural-log probabilities, each conditioned on the tokens before
/// it (the first on the beginning of the sequence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobs {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

/// Deterministic scoring interface. Implementations must tolerate concurrent
/// calls.
pub trait ScoringBackend: Send + Sync {
    /// Short description recorded in run manifests.
    fn describe(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    fn conditional_logprobs(&self, text: &str) -> Result<TokenLogprobs>;

    /// Probability of each candidate filling the single `[MASK]` in `text`.
    /// Values are nonnegative and need not sum to one.
    fn mask_candidate_probs(&self, text: &str, candidates: &[&str]) -> Result<Vec<f64>>;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub(crate) fn protocol(msg: impl Into<String>) -> Error {
    Error::Backend(BackendError::Protocol(msg.into()))
}

pub fn validate_logprobs(out: &TokenLogprobs) -> Result<()> {
    if out.tokens.len() != out.logprobs.len() {
        return Err(protocol(format!(
            "{} tokens but {} log-probabilities",
            out.tokens.len(),
            out.logprobs.len()
        )));
    }
    if let Some(bad) = out
        .logprobs
        .iter()
        .find(|lp| !(lp.is_finite() || **lp == f64::NEG_INFINITY) || **lp > 0.0)
    {
        return Err(protocol(format!(
            "log-probability {bad} is not a valid log of a probability"
        )));
    }
    Ok(())
}

pub fn validate_probs(probs: &[f64], candidates: usize) -> Result<()> {
    if probs.len() != candidates {
        return Err(protocol(format!(
            "{} probabilities for {candidates} candidates",
            probs.len()
        )));
    }
    if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(protocol(format!(
            "candidate probability {bad} is not a nonnegative number"
        )));
    }
    Ok(())
}

/// Checks embedding vectors and pins the dimension on first use.
#[derive(Debug, Default)]
pub struct EmbeddingGuard {
    dim: OnceLock<usize>,
}

impl EmbeddingGuard {
    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.is_empty() {
            return Err(protocol("empty embedding vector"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(protocol("embedding contains a non-finite value"));
        }
        let dim = *self.dim.get_or_init(|| v.len());
        if dim != v.len() {
            return Err(protocol(format!(
                "embedding dimension changed from {dim} to {}",
                v.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }
}

/// Environment variable that overrides the URL of an HTTP backend spec.
pub const HTTP_URL_ENV: &str = "VECPROBE_HTTP_URL";

/// Typed backend locator: `mock:<table.json>`, `ckpt:<model.ckpt>` (also
/// spelled `checkpoint:`) or an `http://` base URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(PathBuf),
    Checkpoint(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("mock:") {
            Ok(BackendSpec::Mock(PathBuf::from(p)))
        } else if let Some(p) = s.strip_prefix("ckpt:").or_else(|| s.strip_prefix("checkpoint:")) {
            Ok(BackendSpec::Checkpoint(PathBuf::from(p)))
        } else if s.starts_with("http://") {
            Ok(BackendSpec::Http(s.trim_end_matches('/').to_string()))
        } else {
            Err(Error::validation(
                "backend",
                format!("expected mock:<path>, ckpt:<path> or http://host:port, got {s:?}"),
            ))
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock(p) => write!(f, "mock:{}", p.display()),
            BackendSpec::Checkpoint(p) => write!(f, "ckpt:{}", p.display()),
            BackendSpec::Http(u) => f.write_str(u),
        }
    }
}

impl BackendSpec {
    /// Apply the URL override from `env_url` to HTTP specs.
    pub fn with_url_override(self, env_url: Option<String>) -> Self {
        match (self, env_url) {
            (BackendSpec::Http(_), Some(url)) if !url.trim().is_empty() => {
                BackendSpec::Http(url.trim().trim_end_matches('/').to_string())
            }
            (spec, _) => spec,
        }
    }

    pub fn open(&self, remote: &RemoteOptions) -> Result<Box<dyn ScoringBackend>> {
        Ok(match self {
            BackendSpec::Mock(p) => Box::new(MockBackend::load(p)?),
            BackendSpec::Checkpoint(p) => Box::new(InProcessBackend::new(crate::lm::load_checkpoint(p)?)),
            BackendSpec::Http(u) => Box::new(RemoteBackend::new(u, remote.clone())?),
        })
    }
}

/// Default HTTP settings.
pub fn default_timeout() -> Duration {
    Duration::from_secs(30)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "mock:/t.json".parse::<BackendSpec>().unwrap(),
            BackendSpec::Mock("/t.json".into())
        );
        assert_eq!(
            "ckpt:m.ckpt".parse::<BackendSpec>().unwrap(),
            BackendSpec::Checkpoint("m.ckpt".into())
        );
        assert_eq!(
            "checkpoint:m.ckpt".parse::<BackendSpec>().unwrap(),
            BackendSpec::Checkpoint("m.ckpt".into())
        );
        assert_eq!(
            "http://localhost:8080/".parse::<BackendSpec>().unwrap(),
            BackendSpec::Http("http://localhost:8080".into())
        );
        assert!("ftp://x".parse::<BackendSpec>().is_err());
        let spec: BackendSpec = "http://a:1".parse().unwrap();
        assert_eq!(
            spec.with_url_override(Some("http://b:2".into())),
            BackendSpec::Http("http://b:2".into())
        );
    }

    #[test]
    fn invariant_checks() {
        let ok = TokenLogprobs {
            tokens: vec!["a".into()],
            logprobs: vec![-0.1],
        };
        assert!(validate_logprobs(&ok).is_ok());
        let pos = TokenLogprobs {
            tokens: vec!["a".into()],
            logprobs: vec![0.5],
        };
        assert!(matches!(
            validate_logprobs(&pos),
            Err(Error::Backend(BackendError::Protocol(_)))
        ));
        let nan = TokenLogprobs {
            tokens: vec!["a".into()],
            logprobs: vec![f64::NAN],
        };
        assert!(validate_logprobs(&nan).is_err());
        assert!(validate_probs(&[0.7, 0.1], 2).is_ok());
        assert!(validate_probs(&[0.7], 2).is_err());
        assert!(validate_probs(&[-0.1, 0.1], 2).is_err());
        let g = EmbeddingGuard::default();
        g.check(&[1.0, 2.0]).unwrap();
        assert!(g.check(&[1.0]).is_err());
        assert!(Capabilities::default().validate().is_err());
    }
}
