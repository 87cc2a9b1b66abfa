//! Interface checks every [`ScoringBackend`] implementation must pass.

use std::thread;

use super::{Capability, ScoringBackend};
use crate::error::{Error, Result};

pub const CAUSAL_TEXTS: [&str; 3] = [
    "the coin is lighter than the table .",
    "a rock",
    "the ice is colder than the steam .",
];
pub const MASK_TEXTS: [&str; 2] = ["is the coin lighter than the table ? [MASK] .", "the rock is [MASK] ."];
pub const EMBED_TEXTS: [&str; 3] = [
    "a photo of a coin .",
    "a photo of a heavy object .",
    "a photo of a table .",
];
pub const CANDIDATES: [&str; 2] = ["yes", "no"];

fn fail(message: String) -> Error {
    Error::validation("conformance", message)
}

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(fail(message()))
    }
}

fn expect_capability_error<T: std::fmt::Debug>(what: &str, r: Result<T>) -> Result<()> {
    match r {
        Err(Error::Capability(_)) => Ok(()),
        other => Err(fail(format!("{what}: expected a capability error, got {other:?}"))),
    }
}

/// Answer for one probe text, rendered for comparison.
fn probe(b: &dyn ScoringBackend, cap: Capability, i: usize) -> Result<String> {
    Ok(match cap {
        Capability::ConditionalLogprobs => format!("{:?}", b.conditional_logprobs(CAUSAL_TEXTS[i % 3])?),
        Capability::MaskCandidateProbs => format!("{:?}", b.mask_candidate_probs(MASK_TEXTS[i % 2], &CANDIDATES)?),
        Capability::SentenceEmbedding => format!("{:?}", b.embed(EMBED_TEXTS[i % 3])?),
    })
}

/// Runs the suite against `b`. The probe texts must be answerable by any
/// backend that advertises the matching capability.
///
/// Checks: advertised capabilities are valid and unsupported calls fail
/// with [`Error::Capability`]; outputs have the right shape and range;
/// repeated and concurrent calls return identical answers.
pub fn check(b: &dyn ScoringBackend) -> Result<()> {
    let caps = b.capabilities();
    caps.validate()?;
    ensure(!b.describe().is_empty(), || "empty description".into())?;

    if caps.conditional_logprobs {
        for t in CAUSAL_TEXTS {
            let out = b.conditional_logprobs(t)?;
            ensure(!out.logprobs.is_empty(), || format!("no logprobs for {t:?}"))?;
            ensure(out.tokens.len() == out.logprobs.len(), || {
                format!("token/logprob length mismatch for {t:?}")
            })?;
            ensure(out.logprobs.iter().all(|lp| lp.is_finite() && *lp <= 0.0), || {
                format!("logprob out of range for {t:?}: {out:?}")
            })?;
            ensure(out == b.conditional_logprobs(t)?, || {
                format!("non-deterministic logprobs for {t:?}")
            })?;
        }
    } else {
        expect_capability_error("conditional_logprobs", b.conditional_logprobs(CAUSAL_TEXTS[0]))?;
    }

    if caps.mask_candidate_probs {
        for t in MASK_TEXTS {
            let p = b.mask_candidate_probs(t, &CANDIDATES)?;
            ensure(p.len() == CANDIDATES.len(), || {
                format!("wrong candidate count for {t:?}")
            })?;
            ensure(p.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)), || {
                format!("probability out of range for {t:?}: {p:?}")
            })?;
            ensure(p == b.mask_candidate_probs(t, &CANDIDATES)?, || {
                format!("non-deterministic probs for {t:?}")
            })?;
        }
    } else {
        expect_capability_error(
            "mask_candidate_probs",
            b.mask_candidate_probs(MASK_TEXTS[0], &CANDIDATES),
        )?;
    }

    if caps.sentence_embedding {
        let dim = b.embed(EMBED_TEXTS[0])?.len();
        ensure(dim > 0, || "empty embedding".into())?;
        for t in EMBED_TEXTS {
            let v = b.embed(t)?;
            ensure(v.len() == dim, || format!("embedding dimension changed for {t:?}"))?;
            ensure(v.iter().all(|x| x.is_finite()), || {
                format!("non-finite embedding for {t:?}")
            })?;
            ensure(v == b.embed(t)?, || format!("non-deterministic embedding for {t:?}"))?;
        }
    } else {
        expect_capability_error("embed", b.embed(EMBED_TEXTS[0]))?;
    }

    let supported: Vec<Capability> = Capability::ALL.into_iter().filter(|c| caps.supports(*c)).collect();
    let concurrent = thread::scope(|s| {
        let handles: Vec<_> = (0..6)
            .map(|i| {
                let supported = &supported;
                s.spawn(move || supported.iter().map(|&c| probe(b, c, i)).collect::<Result<Vec<_>>>())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| fail("worker thread panicked".into()))?)
            .collect::<Result<Vec<_>>>()
    })?;
    for (i, got) in concurrent.into_iter().enumerate() {
        let expected = supported.iter().map(|&c| probe(b, c, i)).collect::<Result<Vec<_>>>()?;
        ensure(got == expected, || {
            format!("concurrent call {i} disagrees with sequential answer")
        })?;
    }
    Ok(())
}
