//! Language-model objectives, Adam with linear warmup, and the training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Objective, TrainConfig};
use super::model::{log_softmax, TransformerLM};
use super::tokenizer::{Tokenizer, BOS_ID, MASK_ID};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Examples per parallel work unit; partial gradients are reduced in chunk
/// order so the result does not depend on the thread count.
const CHUNK: usize = 4;

/// One training sequence: model input plus (position, target id) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<u32>,
    pub targets: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

/// Encode corpus lines as `[bos] w1 .. wk`, truncated to `max_len` tokens.
/// Lines without words are dropped.
pub fn encode_corpus<S: AsRef<str>>(tokenizer: &Tokenizer, lines: &[S], max_len: usize) -> Vec<Vec<u32>> {
    lines
        .iter()
        .filter_map(|line| {
            let mut seq = vec![BOS_ID];
            seq.extend(tokenizer.encode(line.as_ref()));
            seq.truncate(max_len);
            (seq.len() >= 2).then_some(seq)
        })
        .collect()
}

/// Next-token targets: position `t` predicts token `t + 1`.
pub fn causal_example(seq: &[u32]) -> Example {
    Example {
        input: seq.to_vec(),
        targets: (0..seq.len().saturating_sub(1)).map(|t| (t, seq[t + 1])).collect(),
    }
}

/// Replace `max(1, round(mask_prob · words))` word positions (never the
/// begin marker) with the mask token; targets are the original ids.
pub fn masked_example<R: Rng + ?Sized>(seq: &[u32], mask_prob: f64, rng: &mut R) -> Example {
    let words = seq.len().saturating_sub(1);
    let count = ((mask_prob * words as f64).round() as usize).clamp(1.min(words), words);
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, words, count)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    picks.sort_unstable();
    let mut input = seq.to_vec();
    let targets = picks
        .into_iter()
        .map(|p| {
            input[p] = MASK_ID;
            (p, seq[p])
        })
        .collect();
    Example { input, targets }
}

pub fn make_example<R: Rng + ?Sized>(seq: &[u32], objective: Objective, mask_prob: f64, rng: &mut R) -> Example {
    match objective {
        Objective::Causal => causal_example(seq),
        Objective::Masked => masked_example(seq, mask_prob, rng),
    }
}

/// Mean cross-entropy over the targets and its gradient with respect to the
/// logits.
pub fn cross_entropy(logits: &Matrix, targets: &[(usize, u32)]) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    if targets.is_empty() {
        return (0.0, grad);
    }
    let inv = 1.0 / targets.len() as f64;
    let mut loss = 0.0;
    for &(pos, target) in targets {
        let lp = log_softmax(logits.row(pos));
        loss -= lp[target as usize];
        let g = grad.row_mut(pos);
        for (gj, l) in g.iter_mut().zip(&lp) {
            *gj += l.exp() * inv;
        }
        g[target as usize] -= inv;
    }
    (loss * inv, grad)
}

/// Loss of one example without gradients.
pub fn example_loss(model: &TransformerLM, ex: &Example) -> Result<f64> {
    let (logits, _) = model.forward(&ex.input)?;
    Ok(cross_entropy(&logits, &ex.targets).0)
}

/// Mean per-example loss over a batch.
pub fn batch_loss(model: &TransformerLM, batch: &[Example]) -> Result<f64> {
    let losses: Result<Vec<f64>> = batch.par_iter().map(|ex| example_loss(model, ex)).collect();
    Ok(losses?.iter().sum::<f64>() / batch.len().max(1) as f64)
}

/// Mean per-example loss and its gradient with respect to every parameter.
/// `extra` may add a term on the last-layer representations of each example
/// (returning its value and gradient); both are averaged like the LM loss.
pub fn batch_gradient<F>(model: &TransformerLM, batch: &[Example], extra: F) -> Result<(f64, f64, Vec<f64>)>
where
    F: Fn(usize, &Matrix) -> Result<(f64, Matrix)> + Sync,
{
    let n = batch.len().max(1) as f64;
    let partials: Result<Vec<(f64, f64, Vec<f64>)>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = vec![0.0; model.num_params()];
            let mut lm = 0.0;
            let mut aux = 0.0;
            for (k, ex) in chunk.iter().enumerate() {
                let cache = model.forward_cached(&ex.input)?;
                let (loss, d_logits) = cross_entropy(&cache.logits, &ex.targets);
                let (extra_loss, d_reps) = extra(c * CHUNK + k, &cache.reps)?;
                lm += loss;
                aux += extra_loss;
                model.backward(&cache, Some(&d_logits), Some(&d_reps), &mut grads);
            }
            Ok((lm, aux, grads))
        })
        .collect();
    let mut total = vec![0.0; model.num_params()];
    let mut lm = 0.0;
    let mut aux = 0.0;
    for (l, a, g) in partials? {
        lm += l;
        aux += a;
        total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
    }
    total.iter_mut().for_each(|t| *t /= n);
    Ok((lm / n, aux / n, total))
}

/// No extra representation term.
pub fn no_extra(_: usize, reps: &Matrix) -> Result<(f64, Matrix)> {
    Ok((0.0, Matrix::zeros(reps.rows(), reps.cols())))
}

/// Adam over the flat `f32` parameter buffer with `f64` moments.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(size: usize) -> Self {
        Adam {
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = (f64::from(params[i]) - lr * mhat / (vhat.sqrt() + self.eps)) as f32;
        }
    }
}

/// Scale `grads` so its global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Seeded epoch-shuffled batch sampler over sequence indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut s = BatchSampler {
            order: (0..len).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

pub(crate) fn check_finite(step: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { step, loss })
    }
}

/// Train `model` in place on encoded sequences. Returns the per-step batch
/// loss curve.
pub fn train_lm(model: &mut TransformerLM, corpus: &[Vec<u32>], tcfg: &TrainConfig) -> Result<Vec<LossPoint>> {
    tcfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::validation("corpus", "no sequences to train on"));
    }
    let objective = model.config().objective;
    let mut sampler = BatchSampler::new(corpus.len(), tcfg.seed);
    let mut adam = Adam::new(model.num_params());
    let mut curve = Vec::with_capacity(tcfg.steps);
    for step in 0..tcfg.steps {
        let idx = sampler.next_batch(tcfg.batch_size);
        let batch: Vec<Example> = idx
            .iter()
            .map(|&i| make_example(&corpus[i], objective, tcfg.mask_prob, sampler.rng()))
            .collect();
        let (loss, _, mut grads) = batch_gradient(model, &batch, no_extra)?;
        check_finite(step, loss)?;
        if let Some(clip) = tcfg.grad_clip {
            clip_grad_norm(&mut grads, clip);
        }
        adam.step(model.params_mut(), &grads, tcfg.lr_at(step));
        curve.push(LossPoint { step, loss });
    }
    Ok(curve)
}

/// Mean loss over the whole corpus; masked positions are drawn from `seed`
/// so repeated calls see identical examples.
pub fn corpus_loss(model: &TransformerLM, corpus: &[Vec<u32>], mask_prob: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objective = model.config().objective;
    let examples: Vec<Example> = corpus
        .iter()
        .map(|s| make_example(s, objective, mask_prob, &mut rng))
        .collect();
    batch_loss(model, &examples)
}
