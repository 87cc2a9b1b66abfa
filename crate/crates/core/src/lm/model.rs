//! Pre-norm transformer with learned positional embeddings and an explicit
//! backward pass.
//!
//! Parameters are stored as one flat `f32` buffer in declaration order (see
//! [`Layout::tensors`]); activations and gradients are `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::config::{ModelConfig, Objective};
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};
use crate::matrix::{affine, affine_backward, Matrix};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    fn range(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerLayout {
    ln1_g: Span,
    ln1_b: Span,
    w_qkv: Span,
    b_qkv: Span,
    w_o: Span,
    b_o: Span,
    ln2_g: Span,
    ln2_b: Span,
    w_fc: Span,
    b_fc: Span,
    w_proj: Span,
    b_proj: Span,
}

/// Offsets of every tensor in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tok_emb: Span,
    pos_emb: Span,
    layers: Vec<LayerLayout>,
    lnf_g: Span,
    lnf_b: Span,
    w_head: Span,
    b_head: Span,
    total: usize,
    tensors: Vec<(String, Span, Vec<usize>)>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.width;
        let f = cfg.mlp_width();
        let v = cfg.vocab_size;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut alloc = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product();
            let span = Span { offset, len };
            offset += len;
            tensors.push((name, span, shape));
            span
        };
        let tok_emb = alloc("tok_emb".into(), vec![v, d]);
        let pos_emb = alloc("pos_emb".into(), vec![cfg.max_seq_len, d]);
        let layers = (0..cfg.layers)
            .map(|l| LayerLayout {
                ln1_g: alloc(format!("layer{l}.ln1.gain"), vec![d]),
                ln1_b: alloc(format!("layer{l}.ln1.bias"), vec![d]),
                w_qkv: alloc(format!("layer{l}.attn.w_qkv"), vec![d, 3 * d]),
                b_qkv: alloc(format!("layer{l}.attn.b_qkv"), vec![3 * d]),
                w_o: alloc(format!("layer{l}.attn.w_out"), vec![d, d]),
                b_o: alloc(format!("layer{l}.attn.b_out"), vec![d]),
                ln2_g: alloc(format!("layer{l}.ln2.gain"), vec![d]),
                ln2_b: alloc(format!("layer{l}.ln2.bias"), vec![d]),
                w_fc: alloc(format!("layer{l}.mlp.w_fc"), vec![d, f]),
                b_fc: alloc(format!("layer{l}.mlp.b_fc"), vec![f]),
                w_proj: alloc(format!("layer{l}.mlp.w_proj"), vec![f, d]),
                b_proj: alloc(format!("layer{l}.mlp.b_proj"), vec![d]),
            })
            .collect();
        let lnf_g = alloc("ln_final.gain".into(), vec![d]);
        let lnf_b = alloc("ln_final.bias".into(), vec![d]);
        let w_head = alloc("head.w".into(), vec![d, v]);
        let b_head = alloc("head.b".into(), vec![v]);
        Layout {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            w_head,
            b_head,
            total: offset,
            tensors,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// (name, span, shape) for every tensor in storage order. Matrices are
    /// row-major with shape `[in, out]`.
    pub fn tensors(&self) -> &[(String, Span, Vec<usize>)] {
        &self.tensors
    }
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: LnCache,
    h1: Vec<f64>,
    qkv: Vec<f64>,
    /// heads × n × n attention weights.
    probs: Vec<f64>,
    attn: Vec<f64>,
    ln2: LnCache,
    h2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

/// Activations saved by [`TransformerLM::forward_cached`] for the backward
/// pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pub reps: Matrix,
    pub logits: Matrix,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLM {
    config: ModelConfig,
    tokenizer: Tokenizer,
    layout: Layout,
    params: Vec<f32>,
}

fn layer_norm(x: &[f64], d: usize, g: &[f32], b: &[f32], out: &mut [f64]) -> LnCache {
    let n = x.len() / d;
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = inv;
        for j in 0..d {
            let h = (row[j] - mean) * inv;
            xhat[i * d + j] = h;
            out[i * d + j] = h * f64::from(g[j]) + f64::from(b[j]);
        }
    }
    LnCache { xhat, inv_std }
}

fn layer_norm_backward(cache: &LnCache, d: usize, g: &[f32], dy: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = cache.inv_std.len();
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let dyr = &dy[i * d..(i + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * f64::from(g[j]);
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let inv = cache.inv_std[i];
        for j in 0..d {
            dx[i * d + j] = inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu(u: f64) -> f64 {
    let a = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * u * (1.0 + (a * (u + GELU_C * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let a = (2.0 / std::f64::consts::PI).sqrt();
    let t = (a * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * a * (1.0 + 3.0 * GELU_C * u * u)
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Natural-log softmax of one logit row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

impl TransformerLM {
    /// Seeded random initialization.
    pub fn new(config: ModelConfig, tokenizer: Tokenizer, seed: u64) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::validation(
                "vocab_size",
                format!(
                    "config says {}, tokenizer has {}",
                    config.vocab_size,
                    tokenizer.vocab_size()
                ),
            ));
        }
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = vec![0.0f32; layout.total];
        for (name, span, shape) in &layout.tensors {
            let dst = &mut params[span.range()];
            if name.ends_with(".gain") {
                dst.fill(1.0);
            } else if shape.len() == 2 {
                dst.iter_mut().for_each(|p| *p = normal.sample(&mut rng) as f32);
            }
        }
        Ok(TransformerLM {
            config,
            tokenizer,
            layout,
            params,
        })
    }

    /// Assemble from stored parameters (checkpoint loading).
    pub fn from_parts(config: ModelConfig, tokenizer: Tokenizer, params: Vec<f32>) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::validation("vocab_size", "tokenizer does not match config"));
        }
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(TransformerLM {
            config,
            tokenizer,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Hex SHA-256 over the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn p(&self, s: Span) -> &[f32] {
        &self.params[s.range()]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::validation("tokens", "empty sequence"));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::validation(
                "tokens",
                format!(
                    "sequence of {} tokens exceeds max length {}",
                    tokens.len(),
                    self.config.max_seq_len
                ),
            ));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::validation(
                "tokens",
                format!(
                    "token id {bad} out of range for vocabulary of {}",
                    self.config.vocab_size
                ),
            ));
        }
        Ok(())
    }

    /// Logits (positions × vocab) and last-layer representations
    /// (positions × width).
    pub fn forward(&self, tokens: &[u32]) -> Result<(Matrix, Matrix)> {
        let cache = self.forward_cached(tokens)?;
        Ok((cache.logits, cache.reps))
    }

    pub fn forward_cached(&self, tokens: &[u32]) -> Result<ForwardCache> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let n = tokens.len();
        let d = cfg.width;
        let f = cfg.mlp_width();
        let heads = cfg.heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let causal = cfg.objective == Objective::Causal;

        let tok = self.p(self.layout.tok_emb);
        let pos = self.p(self.layout.pos_emb);
        let mut x = vec![0.0; n * d];
        for (i, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            for j in 0..d {
                x[i * d + j] = f64::from(tok[t * d + j]) + f64::from(pos[i * d + j]);
            }
        }

        let mut layers = Vec::with_capacity(cfg.layers);
        for ll in &self.layout.layers {
            let mut h1 = vec![0.0; n * d];
            let ln1 = layer_norm(&x, d, self.p(ll.ln1_g), self.p(ll.ln1_b), &mut h1);
            let mut qkv = vec![0.0; n * 3 * d];
            affine(&h1, d, self.p(ll.w_qkv), Some(self.p(ll.b_qkv)), 3 * d, &mut qkv);

            let mut probs = vec![0.0; heads * n * n];
            let mut attn = vec![0.0; n * d];
            for h in 0..heads {
                let qo = h * hd;
                let ko = d + h * hd;
                let vo = 2 * d + h * hd;
                for i in 0..n {
                    let q = &qkv[i * 3 * d + qo..i * 3 * d + qo + hd];
                    let limit = if causal { i + 1 } else { n };
                    let prow = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..limit {
                        let k = &qkv[j * 3 * d + ko..j * 3 * d + ko + hd];
                        let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                        prow[j] = s;
                        max = max.max(s);
                    }
                    let mut sum = 0.0;
                    for p in &mut prow[..limit] {
                        *p = (*p - max).exp();
                        sum += *p;
                    }
                    for p in &mut prow[..limit] {
                        *p /= sum;
                    }
                    let out = &mut attn[i * d + h * hd..i * d + (h + 1) * hd];
                    for j in 0..limit {
                        let v = &qkv[j * 3 * d + vo..j * 3 * d + vo + hd];
                        let p = prow[j];
                        out.iter_mut().zip(v).for_each(|(o, vv)| *o += p * vv);
                    }
                }
            }
            let mut proj = vec![0.0; n * d];
            affine(&attn, d, self.p(ll.w_o), Some(self.p(ll.b_o)), d, &mut proj);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);

            let mut h2 = vec![0.0; n * d];
            let ln2 = layer_norm(&x, d, self.p(ll.ln2_g), self.p(ll.ln2_b), &mut h2);
            let mut pre_act = vec![0.0; n * f];
            affine(&h2, d, self.p(ll.w_fc), Some(self.p(ll.b_fc)), f, &mut pre_act);
            let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
            let mut mlp = vec![0.0; n * d];
            affine(&act, f, self.p(ll.w_proj), Some(self.p(ll.b_proj)), d, &mut mlp);
            x.iter_mut().zip(&mlp).for_each(|(a, b)| *a += b);

            layers.push(LayerCache {
                ln1,
                h1,
                qkv,
                probs,
                attn,
                ln2,
                h2,
                pre_act,
                act,
            });
        }

        let mut reps = vec![0.0; n * d];
        let lnf = layer_norm(&x, d, self.p(self.layout.lnf_g), self.p(self.layout.lnf_b), &mut reps);
        let v = cfg.vocab_size;
        let mut logits = vec![0.0; n * v];
        affine(
            &reps,
            d,
            self.p(self.layout.w_head),
            Some(self.p(self.layout.b_head)),
            v,
            &mut logits,
        );
        Ok(ForwardCache {
            tokens: tokens.to_vec(),
            layers,
            lnf,
            reps: Matrix::from_vec(n, d, reps),
            logits: Matrix::from_vec(n, v, logits),
        })
    }

    /// Accumulate parameter gradients into `grads` (same layout as the
    /// parameters) given upstream gradients on the logits and, optionally,
    /// directly on the last-layer representations. Returns the gradient with
    /// respect to the summed input embeddings (positions × width).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: Option<&Matrix>,
        d_reps: Option<&Matrix>,
        grads: &mut [f64],
    ) -> Matrix {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let cfg = &self.config;
        let n = cache.len();
        let d = cfg.width;
        let f = cfg.mlp_width();
        let heads = cfg.heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let v = cfg.vocab_size;
        let lay = &self.layout;

        let mut dreps = vec![0.0; n * d];
        if let Some(dl) = d_logits {
            assert_eq!(dl.shape(), (n, v));
            let (dw, rest) = split_two(grads, lay.w_head, lay.b_head);
            dreps = affine_backward(cache.reps.data(), d, self.p(lay.w_head), v, dl.data(), dw, Some(rest));
        }
        if let Some(extra) = d_reps {
            assert_eq!(extra.shape(), (n, d));
            dreps.iter_mut().zip(extra.data()).for_each(|(a, b)| *a += b);
        }
        let mut dx = {
            let (dg, db) = split_two(grads, lay.lnf_g, lay.lnf_b);
            layer_norm_backward(&cache.lnf, d, self.p(lay.lnf_g), &dreps, dg, db)
        };

        for (ll, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP branch.
            let dact = {
                let (dw, db) = split_two(grads, ll.w_proj, ll.b_proj);
                affine_backward(&lc.act, f, self.p(ll.w_proj), d, &dx, dw, Some(db))
            };
            let dpre: Vec<f64> = dact.iter().zip(&lc.pre_act).map(|(g, &u)| g * gelu_grad(u)).collect();
            let dh2 = {
                let (dw, db) = split_two(grads, ll.w_fc, ll.b_fc);
                affine_backward(&lc.h2, d, self.p(ll.w_fc), f, &dpre, dw, Some(db))
            };
            let dx_ln2 = {
                let (dg, db) = split_two(grads, ll.ln2_g, ll.ln2_b);
                layer_norm_backward(&lc.ln2, d, self.p(ll.ln2_g), &dh2, dg, db)
            };
            dx.iter_mut().zip(&dx_ln2).for_each(|(a, b)| *a += b);

            // Attention branch.
            let dattn = {
                let (dw, db) = split_two(grads, ll.w_o, ll.b_o);
                affine_backward(&lc.attn, d, self.p(ll.w_o), d, &dx, dw, Some(db))
            };
            let mut dqkv = vec![0.0; n * 3 * d];
            let mut dp = vec![0.0; n];
            for h in 0..heads {
                let qo = h * hd;
                let ko = d + h * hd;
                let vo = 2 * d + h * hd;
                for i in 0..n {
                    let prow = &lc.probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let dy = &dattn[i * d + h * hd..i * d + (h + 1) * hd];
                    let mut weighted = 0.0;
                    for j in 0..n {
                        if prow[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let vj = &lc.qkv[j * 3 * d + vo..j * 3 * d + vo + hd];
                        dp[j] = dy.iter().zip(vj).map(|(a, b)| a * b).sum();
                        weighted += prow[j] * dp[j];
                        let dv = &mut dqkv[j * 3 * d + vo..j * 3 * d + vo + hd];
                        dv.iter_mut().zip(dy).for_each(|(a, b)| *a += prow[j] * b);
                    }
                    for j in 0..n {
                        if prow[j] == 0.0 {
                            continue;
                        }
                        let ds = prow[j] * (dp[j] - weighted) * scale;
                        for c in 0..hd {
                            let kjc = lc.qkv[j * 3 * d + ko + c];
                            let qic = lc.qkv[i * 3 * d + qo + c];
                            dqkv[i * 3 * d + qo + c] += ds * kjc;
                            dqkv[j * 3 * d + ko + c] += ds * qic;
                        }
                    }
                }
            }
            let dh1 = {
                let (dw, db) = split_two(grads, ll.w_qkv, ll.b_qkv);
                affine_backward(&lc.h1, d, self.p(ll.w_qkv), 3 * d, &dqkv, dw, Some(db))
            };
            let dx_ln1 = {
                let (dg, db) = split_two(grads, ll.ln1_g, ll.ln1_b);
                layer_norm_backward(&lc.ln1, d, self.p(ll.ln1_g), &dh1, dg, db)
            };
            dx.iter_mut().zip(&dx_ln1).for_each(|(a, b)| *a += b);
        }

        for (i, &t) in cache.tokens.iter().enumerate() {
            let t = t as usize;
            for j in 0..d {
                grads[lay.tok_emb.offset + t * d + j] += dx[i * d + j];
                grads[lay.pos_emb.offset + i * d + j] += dx[i * d + j];
            }
        }
        Matrix::from_vec(n, d, dx)
    }
}

/// Two disjoint mutable views into the gradient buffer; `a` must precede `b`.
fn split_two(buf: &mut [f64], a: Span, b: Span) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.offset + a.len <= b.offset);
    let (left, right) = buf.split_at_mut(b.offset);
    (&mut left[a.range()], &mut right[..b.len])
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(objective: Objective, seed: u64) -> TransformerLM {
        let tok = Tokenizer::from_words(["a", "b", "c", "d", "e", "f"]).unwrap();
        let cfg = ModelConfig {
            layers: 2,
            width: 8,
            heads: 2,
            vocab_size: tok.vocab_size(),
            max_seq_len: 8,
            objective,
        };
        TransformerLM::new(cfg, tok, seed).unwrap()
    }

    #[test]
    fn shapes_and_normalization() {
        let m = tiny(Objective::Causal, 1);
        let (logits, reps) = m.forward(&[2, 4, 5, 6, 7]).unwrap();
        assert_eq!(logits.shape(), (5, m.config().vocab_size));
        assert_eq!(reps.shape(), (5, 8));
        let probs = softmax_rows(&logits);
        for i in 0..5 {
            assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn causal_prefix_invariance() {
        let m = tiny(Objective::Causal, 2);
        let a = m.forward(&[2, 4, 5, 6, 7]).unwrap().0;
        let b = m.forward(&[2, 4, 5, 9, 1]).unwrap().0;
        for i in 0..3 {
            assert_eq!(a.row(i), b.row(i));
        }
        assert_ne!(a.row(3), b.row(3));

        let masked = tiny(Objective::Masked, 2);
        let a = masked.forward(&[2, 4, 5, 6, 7]).unwrap().0;
        let b = masked.forward(&[2, 4, 5, 9, 1]).unwrap().0;
        assert_ne!(a.row(0), b.row(0));
    }

    #[test]
    fn rejects_bad_tokens() {
        let m = tiny(Objective::Causal, 3);
        assert!(m.forward(&[2, 99]).is_err());
        assert!(m.forward(&[]).is_err());
        assert!(m.forward(&[2; 9]).is_err());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        assert_eq!(
            tiny(Objective::Causal, 5).checksum(),
            tiny(Objective::Causal, 5).checksum()
        );
        assert_ne!(
            tiny(Objective::Causal, 5).checksum(),
            tiny(Objective::Causal, 6).checksum()
        );
    }

    #[test]
    fn layout_declaration_order() {
        let m = tiny(Objective::Causal, 0);
        let names: Vec<_> = m.layout().tensors().iter().map(|t| t.0.as_str()).collect();
        assert_eq!(names[0], "tok_emb");
        assert_eq!(names[2], "layer0.ln1.gain");
        assert_eq!(*names.last().unwrap(), "head.b");
        let total: usize = m.layout().tensors().iter().map(|t| t.1.len).sum();
        assert_eq!(total, m.num_params());
    }
}
