//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecprobe::lm::train::{batch_gradient, batch_loss, causal_example, masked_example, no_extra, Example};
use vecprobe::lm::{ModelConfig, Objective, Tokenizer, TransformerLM};
use vecprobe::matrix::Matrix;

const STEP: f32 = 1e-3;
const TOL: f64 = 1e-4;

fn tiny_model(objective: Objective, layers: usize, seed: u64) -> TransformerLM {
    let tok = Tokenizer::from_words((0..12).map(|i| format!("w{i}"))).unwrap();
    let cfg = ModelConfig {
        layers,
        width: 8,
        heads: 2,
        vocab_size: tok.vocab_size(),
        max_seq_len: 10,
        objective,
    };
    let mut m = TransformerLM::new(cfg, tok, seed).unwrap();
    // Larger weights than the default init so every term contributes.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in m.params_mut() {
        *p += rng.random_range(-0.3f32..0.3);
    }
    m
}

fn random_batch(model: &TransformerLM, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = model.config().vocab_size as u32;
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..=model.config().max_seq_len);
            let mut seq = vec![2u32];
            seq.extend((1..len).map(|_| rng.random_range(4..v)));
            match model.config().objective {
                Objective::Causal => causal_example(&seq),
                Objective::Masked => masked_example(&seq, 0.3, &mut rng),
            }
        })
        .collect()
}

/// Norm-wise relative error per parameter tensor; returns the worst one.
fn check_params(model: &TransformerLM, batch: &[Example]) -> (String, f64) {
    let (_, _, analytic) = batch_gradient(model, batch, no_extra).unwrap();
    let mut worst = (String::new(), 0.0);
    for (name, span, _) in model.layout().tensors() {
        let mut probe = model.clone();
        let mut diff = 0.0;
        for i in span.offset..span.offset + span.len {
            let orig = probe.params()[i];
            let up = orig + STEP;
            let down = orig - STEP;
            probe.params_mut()[i] = up;
            let lu = batch_loss(&probe, batch).unwrap();
            probe.params_mut()[i] = down;
            let ld = batch_loss(&probe, batch).unwrap();
            probe.params_mut()[i] = orig;
            let fd = (lu - ld) / (f64::from(up) - f64::from(down));
            diff += (fd - analytic[i]).powi(2);
        }
        let a_norm: f64 = analytic[span.offset..span.offset + span.len]
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let rel = diff.sqrt() / a_norm.max(1e-12);
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
    }
    worst
}

#[test]
fn causal_lm_gradient_matches_finite_differences() {
    for seed in 0..2 {
        let model = tiny_model(Objective::Causal, 1, seed);
        let batch = random_batch(&model, 3, 100 + seed);
        let (name, rel) = check_params(&model, &batch);
        eprintln!("seed {seed}: worst tensor {name} at {rel:e}");
        assert!(rel < TOL, "seed {seed}: {name} relative error {rel:e}");
    }
}

#[test]
fn masked_lm_gradient_matches_finite_differences() {
    let model = tiny_model(Objective::Masked, 1, 7);
    let batch = random_batch(&model, 3, 11);
    let (name, rel) = check_params(&model, &batch);
    assert!(rel < TOL, "{name} relative error {rel:e}");
}

#[test]
fn two_layer_gradient_matches_finite_differences() {
    let model = tiny_model(Objective::Causal, 2, 3);
    let batch = random_batch(&model, 2, 5);
    let (name, rel) = check_params(&model, &batch);
    assert!(rel < TOL, "{name} relative error {rel:e}");
}

#[test]
fn representation_gradient_path() {
    // A quadratic term on the last-layer representations exercises the
    // `d_reps` input of the backward pass.
    let model = tiny_model(Objective::Causal, 1, 9);
    let batch = random_batch(&model, 2, 9);
    let extra = |_: usize, reps: &Matrix| Ok((0.5 * reps.data().iter().map(|x| x * x).sum::<f64>(), reps.clone()));
    let (_, _, g) = batch_gradient(&model, &batch, extra).unwrap();
    let objective = |m: &TransformerLM| -> f64 {
        let lm = batch_loss(m, &batch).unwrap();
        let quad: f64 = batch
            .iter()
            .map(|ex| {
                0.5 * m
                    .forward(&ex.input)
                    .unwrap()
                    .1
                    .data()
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / batch.len() as f64;
        lm + quad
    };
    let span = model.layout().tensors()[2].1; // layer0.ln1.gain
    let mut probe = model.clone();
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in span.offset..span.offset + span.len {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + STEP;
        let up = objective(&probe);
        let du = f64::from(orig + STEP);
        probe.params_mut()[i] = orig - STEP;
        let down = objective(&probe);
        let dd = f64::from(orig - STEP);
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (du - dd);
        diff += (fd - g[i]).powi(2);
        norm += g[i] * g[i];
    }
    let rel = diff.sqrt() / norm.sqrt();
    assert!(rel < TOL, "relative error {rel:e}");
}

#[test]
fn causal_loss_ignores_future_embeddings() {
    let model = tiny_model(Objective::Causal, 2, 4);
    let tokens = [2u32, 5, 6, 7, 8, 9, 10];
    let cache = model.forward_cached(&tokens).unwrap();
    for t in 0..tokens.len() {
        let mut d_logits = Matrix::zeros(tokens.len(), model.config().vocab_size);
        for j in 0..d_logits.cols() {
            d_logits.set(t, j, (j as f64 * 0.37).sin());
        }
        let mut grads = vec![0.0; model.num_params()];
        let d_input = model.backward(&cache, Some(&d_logits), None, &mut grads);
        for later in t + 1..tokens.len() {
            assert!(
                d_input.row(later).iter().all(|&g| g == 0.0),
                "position {t} leaks into {later}"
            );
        }
        assert!(d_input.row(t).iter().any(|&g| g != 0.0));
    }
}
