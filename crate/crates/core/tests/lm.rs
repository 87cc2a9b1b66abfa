use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecprobe::corpus::{corpus_lines, synthetic_objects};
use vecprobe::lm::checkpoint::{from_bytes, to_bytes};
use vecprobe::lm::train::{corpus_loss, encode_corpus};
use vecprobe::lm::{
    load_checkpoint, save_checkpoint, train_lm, ModelConfig, Objective, Tokenizer, TrainConfig, TransformerLM,
};
use vecprobe::Error;

/// About ten thousand tokens of synthetic statements.
fn toy_corpus() -> (Tokenizer, Vec<Vec<u32>>) {
    let objs = synthetic_objects(40, 11);
    let lines = corpus_lines(&objs, 1450, 12);
    let tok = Tokenizer::from_corpus(&lines, &["yes", "no"], None);
    let seqs = encode_corpus(&tok, &lines, 16);
    let tokens: usize = seqs.iter().map(|s| s.len() - 1).sum();
    assert!((9_000..12_000).contains(&tokens), "{tokens} tokens");
    (tok, seqs)
}

fn config(tok: &Tokenizer, objective: Objective) -> ModelConfig {
    ModelConfig {
        layers: 2,
        width: 64,
        heads: 4,
        vocab_size: tok.vocab_size(),
        max_seq_len: 16,
        objective,
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        warmup_steps: 10,
        batch_size: 16,
        steps: 60,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn causal_training_reduces_loss() {
    let (tok, seqs) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Causal), tok, 0).unwrap();
    let held = &seqs[..200];
    let before = corpus_loss(&model, held, 0.15, 0).unwrap();
    let curve = train_lm(&mut model, &seqs, &quick_train()).unwrap();
    let after = corpus_loss(&model, held, 0.15, 0).unwrap();
    assert_eq!(curve.len(), 60);
    assert!(after < before, "{before} -> {after}");
    assert!(curve.last().unwrap().loss < curve[0].loss);
}

#[test]
fn masked_training_reduces_loss() {
    let (tok, seqs) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Masked), tok, 0).unwrap();
    let held = &seqs[..200];
    let before = corpus_loss(&model, held, 0.15, 0).unwrap();
    train_lm(&mut model, &seqs, &quick_train()).unwrap();
    let after = corpus_loss(&model, held, 0.15, 0).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn zero_steps_leave_parameters_unchanged() {
    let (tok, seqs) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Causal), tok, 5).unwrap();
    let before = model.clone();
    let curve = train_lm(
        &mut model,
        &seqs,
        &TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(curve.is_empty());
    assert_eq!(model, before);
}

#[test]
fn seeded_runs_produce_identical_checkpoints() {
    let (tok, seqs) = toy_corpus();
    let cfg = ModelConfig {
        layers: 1,
        width: 16,
        heads: 2,
        ..config(&tok, Objective::Masked)
    };
    let tcfg = TrainConfig {
        steps: 8,
        batch_size: 9,
        ..quick_train()
    };
    let run = || {
        let mut m = TransformerLM::new(cfg, tok.clone(), 3).unwrap();
        train_lm(&mut m, &seqs, &tcfg).unwrap();
        to_bytes(&m)
    };
    assert_eq!(run(), run());
}

#[test]
fn rejects_empty_corpus_and_bad_config() {
    let (tok, _) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Causal), tok.clone(), 0).unwrap();
    assert!(train_lm(&mut model, &[], &TrainConfig::default()).is_err());
    let bad = ModelConfig {
        heads: 5,
        ..config(&tok, Objective::Causal)
    };
    assert!(TransformerLM::new(bad, tok, 0).is_err());
}

#[test]
fn divergence_is_reported() {
    let (tok, seqs) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Causal), tok, 0).unwrap();
    let tcfg = TrainConfig {
        steps: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    model.params_mut().iter_mut().for_each(|p| *p = f32::NAN);
    assert!(matches!(
        train_lm(&mut model, &seqs, &tcfg),
        Err(Error::Divergence { step: 0, .. })
    ));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (tok, seqs) = toy_corpus();
    let mut model = TransformerLM::new(config(&tok, Objective::Causal), tok, 8).unwrap();
    train_lm(
        &mut model,
        &seqs,
        &TrainConfig {
            steps: 3,
            ..quick_train()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.checksum(), model.checksum());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let len = rng.random_range(1..=16);
        let tokens: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..model.config().vocab_size as u32))
            .collect();
        let (a, ra) = model.forward(&tokens).unwrap();
        let (b, rb) = loaded.forward(&tokens).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let tok = Tokenizer::from_words(["a", "b"]).unwrap();
    let cfg = ModelConfig {
        layers: 1,
        width: 8,
        heads: 2,
        vocab_size: 6,
        max_seq_len: 4,
        objective: Objective::Causal,
    };
    let bytes = to_bytes(&TransformerLM::new(cfg, tok, 0).unwrap());
    assert!(from_bytes(&bytes).is_ok());
    assert!(matches!(
        from_bytes(&bytes[..bytes.len() - 4]),
        Err(Error::Checkpoint(_))
    ));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 4]);
    assert!(matches!(from_bytes(&extra), Err(Error::Checkpoint(_))));
    assert!(matches!(from_bytes(&bytes[..5]), Err(Error::Checkpoint(_))));

    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
    let bumped = header.replace("\"version\":1", "\"version\":2");
    assert_eq!(bumped.len(), header.len());
    let mut v2 = bytes[..8].to_vec();
    v2.extend_from_slice(bumped.as_bytes());
    v2.extend_from_slice(&bytes[8 + hlen..]);
    let err = from_bytes(&v2).unwrap_err();
    assert!(err.to_string().contains("version mismatch"), "{err}");
}
