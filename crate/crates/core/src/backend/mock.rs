//! Table-driven backend for fixtures and tests.
//!
//! Table file (JSON), every section optional:
//!
//! ```json
//! {
//!   "logprobs": {"a coin": {"tokens": ["a", "coin"], "logprobs": [-1.2, -3.4]}},
//!   "token_logprobs": {"coin": -3.4},
//!   "default_token_logprob": -0.6931471805599453,
//!   "mask": {"the coin is [MASK].": {"yes": 0.7, "no": 0.1}},
//!   "default_mask": {"yes": 0.5, "no": 0.5},
//!   "embed": {"a coin": [0.1, 0.2]},
//!   "capabilities": {"conditional_logprobs": true}
//! }
//! ```
//!
//! Texts missing from `logprobs` are split on whitespace and each token is
//! looked up in `token_logprobs`, then `default_token_logprob`. Mask queries
//! fall back to `default_mask`. Capabilities are inferred from which
//! sections are present unless given explicitly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate_logprobs, validate_probs, Capabilities, Capability, EmbeddingGuard, ScoringBackend, TokenLogprobs,
};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockTable {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub logprobs: BTreeMap<String, TokenLogprobs>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub token_logprobs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_token_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mask: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_mask: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub embed: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
}

impl MockTable {
    /// Every whitespace token gets log(0.5).
    pub fn uniform_halves() -> Self {
        MockTable {
            default_token_logprob: Some(0.5f64.ln()),
            ..Default::default()
        }
    }

    fn inferred_capabilities(&self) -> Capabilities {
        Capabilities {
            conditional_logprobs: !self.logprobs.is_empty()
                || !self.token_logprobs.is_empty()
                || self.default_token_logprob.is_some(),
            mask_candidate_probs: !self.mask.is_empty() || self.default_mask.is_some(),
            sentence_embedding: !self.embed.is_empty(),
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    table: MockTable,
    caps: Capabilities,
    source: String,
}

impl MockBackend {
    /// Validate every table entry against the interface invariants.
    pub fn new(table: MockTable) -> Result<Self> {
        Self::with_source(table, "inline")
    }

    fn with_source(table: MockTable, source: &str) -> Result<Self> {
        let caps = table.capabilities.unwrap_or_else(|| table.inferred_capabilities());
        caps.validate()?;
        for out in table.logprobs.values() {
            validate_logprobs(out)?;
        }
        let single: Vec<f64> = table
            .token_logprobs
            .values()
            .copied()
            .chain(table.default_token_logprob)
            .collect();
        validate_logprobs(&TokenLogprobs {
            tokens: vec![String::new(); single.len()],
            logprobs: single,
        })?;
        for probs in table.mask.values().chain(table.default_mask.as_ref()) {
            let v: Vec<f64> = probs.values().copied().collect();
            validate_probs(&v, v.len())?;
        }
        let guard = EmbeddingGuard::default();
        for v in table.embed.values() {
            guard.check(v)?;
        }
        Ok(MockBackend {
            table,
            caps,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading mock table {}", path.display()), e))?;
        let table: MockTable = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::with_source(table, &path.display().to_string())
    }

    pub fn table(&self) -> &MockTable {
        &self.table
    }
}

fn missing(mode: &'static str, text: &str) -> Error {
    Error::Backend(BackendError::MissingEntry {
        mode,
        text: text.to_string(),
    })
}

impl ScoringBackend for MockBackend {
    fn describe(&self) -> String {
        format!("mock:{}", self.source)
    }

    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn conditional_logprobs(&self, text: &str) -> Result<TokenLogprobs> {
        self.caps.require(Capability::ConditionalLogprobs)?;
        if let Some(out) = self.table.logprobs.get(text) {
            return Ok(out.clone());
        }
        let mut out = TokenLogprobs {
            tokens: Vec::new(),
            logprobs: Vec::new(),
        };
        for tok in text.split_whitespace() {
            let lp = self
                .table
                .token_logprobs
                .get(tok)
                .copied()
                .or(self.table.default_token_logprob)
                .ok_or_else(|| missing("causal_logprobs", text))?;
            out.tokens.push(tok.to_string());
            out.logprobs.push(lp);
        }
        Ok(out)
    }

    fn mask_candidate_probs(&self, text: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        self.caps.require(Capability::MaskCandidateProbs)?;
        let row = self
            .table
            .mask
            .get(text)
            .or(self.table.default_mask.as_ref())
            .ok_or_else(|| missing("mask_candidates", text))?;
        candidates
            .iter()
            .map(|c| {
                row.get(*c)
                    .copied()
                    .ok_or_else(|| missing("mask_candidates", &format!("{text} / {c}")))
            })
            .collect()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.caps.require(Capability::SentenceEmbedding)?;
        self.table
            .embed
            .get(text)
            .cloned()
            .ok_or_else(|| missing("embed", text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_halves_table() {
        let b = MockBackend::new(MockTable::uniform_halves()).unwrap();
        let out = b.conditional_logprobs("the coin is small").unwrap();
        assert_eq!(out.logprobs, vec![0.5f64.ln(); 4]);
        assert!(matches!(b.embed("x"), Err(Error::Capability(_))));
    }

    #[test]
    fn mask_passthrough_and_missing() {
        let mut table = MockTable::default();
        table.mask.insert(
            "q [MASK]".into(),
            [("yes".to_string(), 0.7), ("no".to_string(), 0.1)].into(),
        );
        let b = MockBackend::new(table).unwrap();
        assert_eq!(
            b.mask_candidate_probs("q [MASK]", &["yes", "no"]).unwrap(),
            vec![0.7, 0.1]
        );
        assert!(matches!(
            b.mask_candidate_probs("other [MASK]", &["yes", "no"]),
            Err(Error::Backend(BackendError::MissingEntry { .. }))
        ));
        assert!(matches!(b.conditional_logprobs("x"), Err(Error::Capability(_))));
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let mut table = MockTable::default();
        table.token_logprobs.insert("a".into(), 0.3);
        assert!(MockBackend::new(table).is_err());
        let mut table = MockTable::default();
        table.embed.insert("a".into(), vec![1.0, 2.0]);
        table.embed.insert("b".into(), vec![1.0]);
        assert!(MockBackend::new(table).is_err());
        assert!(MockBackend::new(MockTable::default()).is_err());
    }
}
