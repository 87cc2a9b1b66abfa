//! Backend over a [`TransformerLM`] held in memory.
//!
//! Causal models provide conditional log-probabilities, masked models
//! provide mask-candidate probabilities, and both provide sentence vectors
//! (mean of last-layer token representations, begin marker excluded).

use super::{Capabilities, Capability, ScoringBackend, TokenLogprobs};
use crate::error::{BackendError, Error, Result};
use crate::lm::model::log_softmax;
use crate::lm::tokenizer::{BOS_ID, MASK_ID, UNK_ID};
use crate::lm::{Objective, TransformerLM};

#[derive(Debug, Clone)]
pub struct InProcessBackend {
    model: TransformerLM,
}

impl InProcessBackend {
    pub fn new(model: TransformerLM) -> Self {
        InProcessBackend { model }
    }

    pub fn model(&self) -> &TransformerLM {
        &self.model
    }

    fn sequence(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = vec![BOS_ID];
        ids.extend(self.model.tokenizer().encode(text));
        let max = self.model.config().max_seq_len;
        if ids.len() > max {
            return Err(Error::validation(
                "text",
                format!(
                    "{} tokens (with begin marker) exceed the model limit of {max}: {text:?}",
                    ids.len()
                ),
            ));
        }
        Ok(ids)
    }
}

impl ScoringBackend for InProcessBackend {
    fn describe(&self) -> String {
        format!("in-process:{}", self.model.checksum())
    }

    fn capabilities(&self) -> Capabilities {
        let causal = self.model.config().objective == Objective::Causal;
        Capabilities {
            conditional_logprobs: causal,
            mask_candidate_probs: !causal,
            sentence_embedding: true,
        }
    }

    fn conditional_logprobs(&self, text: &str) -> Result<TokenLogprobs> {
        self.capabilities().require(Capability::ConditionalLogprobs)?;
        let ids = self.sequence(text)?;
        let (logits, _) = self.model.forward(&ids)?;
        let tok = self.model.tokenizer();
        let mut out = TokenLogprobs {
            tokens: Vec::with_capacity(ids.len() - 1),
            logprobs: Vec::with_capacity(ids.len() - 1),
        };
        for t in 1..ids.len() {
            let lp = log_softmax(logits.row(t - 1));
            out.tokens.push(tok.word(ids[t]).unwrap_or_default().to_string());
            out.logprobs.push(lp[ids[t] as usize].min(0.0));
        }
        Ok(out)
    }

    fn mask_candidate_probs(&self, text: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        self.capabilities().require(Capability::MaskCandidateProbs)?;
        let ids = self.sequence(text)?;
        let masks: Vec<usize> = ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == MASK_ID)
            .map(|(i, _)| i)
            .collect();
        let [pos] = masks[..] else {
            return Err(Error::validation(
                "text",
                format!("expected exactly one [MASK], found {} in {text:?}", masks.len()),
            ));
        };
        let tok = self.model.tokenizer();
        let cand_ids: Vec<u32> = candidates
            .iter()
            .map(|c| match tok.encode(c)[..] {
                [id] if id != UNK_ID => Ok(id),
                _ => Err(Error::Backend(BackendError::Model(format!(
                    "candidate {c:?} is not a single in-vocabulary token"
                )))),
            })
            .collect::<Result<_>>()?;
        let (logits, _) = self.model.forward(&ids)?;
        let lp = log_softmax(logits.row(pos));
        Ok(cand_ids.iter().map(|&id| lp[id as usize].exp()).collect())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.sequence(text)?;
        let (_, reps) = self.model.forward(&ids)?;
        // Positions after the begin marker; an empty text falls back to it.
        let rows: Vec<usize> = if ids.len() > 1 {
            (1..ids.len()).collect()
        } else {
            vec![0]
        };
        let mut v = vec![0.0; reps.cols()];
        for &r in &rows {
            v.iter_mut().zip(reps.row(r)).for_each(|(a, b)| *a += b);
        }
        let n = rows.len() as f64;
        v.iter_mut().for_each(|a| *a /= n);
        Ok(v)
    }
}
