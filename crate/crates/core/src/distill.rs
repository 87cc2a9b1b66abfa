//! Representation distillation: a student LM is trained on its language
//! modeling loss plus `beta` times the squared MMD between the per-unit
//! activation patterns of its last layer and those of a frozen teacher.
//!
//! For token representations `S, T` (n × d) the columns `S[:, i]` are the
//! activation patterns of unit `i` across the sequence, and
//!
//! ```text
//! MMD²(S, T) = 1/d² Σᵢ Σⱼ k(Sᵢ, Sⱼ) + 1/d² Σᵢ Σⱼ k(Tᵢ, Tⱼ) − 2/d² Σᵢ Σⱼ k(Sᵢ, Tⱼ)
//! k(x, y)    = (x·y + c)^p
//! ```
//!
//! Columns are used as-is, without normalization.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::train::{batch_gradient, check_finite, clip_grad_norm, make_example, Adam, BatchSampler, Example};
use crate::lm::{TrainConfig, TransformerLM};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub beta: f64,
    pub p: u32,
    pub c: f64,
    /// Steps, batch size, seed and optimizer settings for the student.
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            beta: 20.0,
            p: 2,
            c: 0.0,
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::validation("beta", "must be a nonnegative number"));
        }
        if self.p < 1 {
            return Err(Error::validation("p", "kernel degree must be at least 1"));
        }
        if !self.c.is_finite() {
            return Err(Error::validation("c", "must be finite"));
        }
        self.train.validate()
    }
}

/// `(x·y + c)^p`.
pub fn poly_kernel(x: &[f64], y: &[f64], p: u32, c: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kernel inputs of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot + c).powi(p as i32))
}

fn check_pair(s: &Matrix, t: &Matrix) -> Result<()> {
    if s.shape() != t.shape() {
        return Err(Error::Shape(format!(
            "student representations are {:?}, teacher {:?}",
            s.shape(),
            t.shape()
        )));
    }
    if s.cols() == 0 {
        return Err(Error::Shape("representation width is zero".into()));
    }
    Ok(())
}

fn kernel_sum(gram: &Matrix, p: u32, c: f64) -> f64 {
    gram.data().iter().map(|g| (g + c).powi(p as i32)).sum()
}

/// Squared MMD between the column sets of `s` and `t` (both n × d).
pub fn squared_mmd(s: &Matrix, t: &Matrix, p: u32, c: f64) -> Result<f64> {
    check_pair(s, t)?;
    let d = s.cols() as f64;
    let ss = kernel_sum(&s.t_matmul(s), p, c);
    let tt = kernel_sum(&t.t_matmul(t), p, c);
    let st = kernel_sum(&s.t_matmul(t), p, c);
    Ok((ss + tt - 2.0 * st) / (d * d))
}

/// Squared MMD and its gradient with respect to `s`:
/// `∂/∂S = 2p/d² · (S·A − T·Bᵀ)` with `A = (SᵀS + c)^(p−1)` and
/// `B = (SᵀT + c)^(p−1)` taken elementwise.
pub fn squared_mmd_grad(s: &Matrix, t: &Matrix, p: u32, c: f64) -> Result<(f64, Matrix)> {
    check_pair(s, t)?;
    let d = s.cols() as f64;
    let gss = s.t_matmul(s);
    let gst = s.t_matmul(t);
    let value = (kernel_sum(&gss, p, c) + kernel_sum(&t.t_matmul(t), p, c) - 2.0 * kernel_sum(&gst, p, c)) / (d * d);
    let e = p as i32 - 1;
    let a = gss.map(|g| (g + c).powi(e));
    let b = gst.map(|g| (g + c).powi(e));
    let sa = s.matmul(&a);
    // T·Bᵀ: row r, column i = Σⱼ T[r, j] B[i, j].
    let mut grad = Matrix::zeros(s.rows(), s.cols());
    let scale = 2.0 * f64::from(p) / (d * d);
    for r in 0..s.rows() {
        let trow = t.row(r);
        for i in 0..s.cols() {
            let tb: f64 = trow.iter().zip(b.row(i)).map(|(x, y)| x * y).sum();
            grad.set(r, i, scale * (sa.get(r, i) - tb));
        }
    }
    Ok((value, grad))
}

/// `lm_loss + beta · MMD²(student, teacher)`.
pub fn distill_loss(student: &Matrix, teacher: &Matrix, lm_loss: f64, cfg: &DistillConfig) -> Result<f64> {
    if student.cols() != teacher.cols() {
        return Err(Error::Shape(format!(
            "student width {} differs from teacher width {}",
            student.cols(),
            teacher.cols()
        )));
    }
    if cfg.beta == 0.0 {
        return Ok(lm_loss);
    }
    Ok(lm_loss + cfg.beta * squared_mmd(student, teacher, cfg.p, cfg.c)?)
}

/// A frozen teacher exposing its last-layer representations.
#[derive(Debug, Clone)]
pub struct TeacherAdapter {
    model: TransformerLM,
    checksum: String,
}

impl TeacherAdapter {
    /// Wrap `teacher` for distillation into `student`. Widths and
    /// vocabularies must match.
    pub fn new(teacher: TransformerLM, student: &TransformerLM) -> Result<Self> {
        let (tw, sw) = (teacher.config().width, student.config().width);
        if tw != sw {
            return Err(Error::Shape(format!(
                "teacher width {tw} differs from student width {sw}"
            )));
        }
        if teacher.tokenizer() != student.tokenizer() {
            return Err(Error::validation(
                "tokenizer",
                "teacher and student vocabularies differ",
            ));
        }
        let checksum = teacher.checksum();
        Ok(TeacherAdapter {
            model: teacher,
            checksum,
        })
    }

    pub fn model(&self) -> &TransformerLM {
        &self.model
    }

    /// Checksum taken when the adapter was built.
    pub fn initial_checksum(&self) -> &str {
        &self.checksum
    }

    pub fn representations(&self, tokens: &[u32]) -> Result<Matrix> {
        Ok(self.model.forward(tokens)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillPoint {
    pub step: usize,
    pub lm_loss: f64,
    pub mmd: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub curve: Vec<DistillPoint>,
    pub heldout_mmd_start: f64,
    pub heldout_mmd_end: f64,
    pub teacher_checksum_before: String,
    pub teacher_checksum_after: String,
}

/// Mean per-sequence MMD² between student and teacher on `sequences`.
pub fn mean_mmd(
    student: &TransformerLM,
    teacher: &TeacherAdapter,
    sequences: &[Vec<u32>],
    p: u32,
    c: f64,
) -> Result<f64> {
    if sequences.is_empty() {
        return Ok(0.0);
    }
    let vals: Result<Vec<f64>> = sequences
        .par_iter()
        .map(|seq| {
            let s = student.forward(seq)?.1;
            let t = teacher.representations(seq)?;
            squared_mmd(&s, &t, p, c)
        })
        .collect();
    Ok(vals?.iter().sum::<f64>() / sequences.len() as f64)
}

/// Train `student` against the frozen teacher. MMD is computed per sequence
/// on its own positions and averaged over the batch.
pub fn distill_train(
    student: &mut TransformerLM,
    teacher: &TeacherAdapter,
    corpus: &[Vec<u32>],
    heldout: &[Vec<u32>],
    cfg: &DistillConfig,
) -> Result<DistillReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::validation("corpus", "no sequences to train on"));
    }
    if student.config().width != teacher.model().config().width {
        return Err(Error::Shape("teacher and student widths differ".into()));
    }
    let tcfg = &cfg.train;
    let before = teacher.model().checksum();
    let heldout_mmd_start = mean_mmd(student, teacher, heldout, cfg.p, cfg.c)?;
    let objective = student.config().objective;
    let mut sampler = BatchSampler::new(corpus.len(), tcfg.seed);
    let mut adam = Adam::new(student.num_params());
    let mut curve = Vec::with_capacity(tcfg.steps);
    for step in 0..tcfg.steps {
        let idx = sampler.next_batch(tcfg.batch_size);
        let batch: Vec<Example> = idx
            .iter()
            .map(|&i| make_example(&corpus[i], objective, tcfg.mask_prob, sampler.rng()))
            .collect();
        let targets: Result<Vec<Matrix>> = batch.par_iter().map(|ex| teacher.representations(&ex.input)).collect();
        let targets = targets?;
        // The reported value is the unweighted MMD; the gradient carries beta.
        let (lm, mmd, mut grads) = batch_gradient(student, &batch, |k, reps| {
            if cfg.beta == 0.0 {
                return Ok((
                    squared_mmd(reps, &targets[k], cfg.p, cfg.c)?,
                    Matrix::zeros(reps.rows(), reps.cols()),
                ));
            }
            let (v, g) = squared_mmd_grad(reps, &targets[k], cfg.p, cfg.c)?;
            Ok((v, g.map(|x| x * cfg.beta)))
        })?;
        let total = lm + cfg.beta * mmd;
        check_finite(step, total)?;
        if let Some(clip) = tcfg.grad_clip {
            clip_grad_norm(&mut grads, clip);
        }
        adam.step(student.params_mut(), &grads, tcfg.lr_at(step));
        curve.push(DistillPoint {
            step,
            lm_loss: lm,
            mmd,
            total,
        });
    }
    let heldout_mmd_end = mean_mmd(student, teacher, heldout, cfg.p, cfg.c)?;
    Ok(DistillReport {
        curve,
        heldout_mmd_start,
        heldout_mmd_end,
        teacher_checksum_before: before,
        teacher_checksum_after: teacher.model().checksum(),
    })
}

/// Loss curve as CSV with header `step,lm_loss,mmd,total`.
pub fn write_loss_curve<W: Write>(curve: &[DistillPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::io("writing loss curve", std::io::Error::other(e));
    w.write_record(["step", "lm_loss", "mmd", "total"]).map_err(io)?;
    for pt in curve {
        w.write_record([
            pt.step.to_string(),
            pt.lm_loss.to_string(),
            pt.mmd.to_string(),
            pt.total.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("writing loss curve", e))
}
