//! Subcommands of the `vecprobe` binary.
//!
//! Every command that writes files also writes a [`RunManifest`] next to its
//! outputs. The manifest holds the fully resolved arguments together with
//! SHA-256 digests of inputs and outputs, so `vecprobe replay` can re-run the
//! command and confirm that every output is reproduced byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vecprobe::analysis::{
    aggregate, cohens_kappa, entity_ratios, entity_ratios_csv, histogram_csv, prompt_accuracies, render_report,
    summarize_by_word, MeanStd, TaskResult,
};
use vecprobe::backend::{BackendSpec, RemoteOptions, ScoringBackend, ScoringServer, HTTP_URL_ENV};
use vecprobe::concept::Category;
use vecprobe::corpus::{attribute_dataset, corpus_lines, measurement_csv, measurement_table, synthetic_objects};
use vecprobe::dataset::{build_comparison_pairs, dataset_stats, load_dataset, read_measurements};
use vecprobe::distill::{distill_train, write_loss_curve, DistillConfig, TeacherAdapter};
use vecprobe::lm::train::encode_corpus;
use vecprobe::lm::{
    load_checkpoint, save_checkpoint, train_lm, ModelConfig, Objective, Tokenizer, TrainConfig, TransformerLM,
};
use vecprobe::prompt::{PromptBank, RelationLexicon, MIN_TEMPLATES_PER_GROUP};
use vecprobe::scoring::{evaluate, predictions_jsonl, EvalOptions, ScoringMode, DEFAULT_FILLERS};
use vecprobe::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "vecprobe",
    version,
    about = "Probe language models for physical-concept knowledge"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Build a balanced comparison dataset from a measurement table.
    BuildDataset(BuildDatasetArgs),
    /// Score a dataset with a backend under one prompting mode.
    Evaluate(EvaluateArgs),
    /// Combine evaluation summaries into a model x task table.
    Report(ReportArgs),
    /// Train a tiny transformer LM on a text corpus.
    Train(TrainArgs),
    /// Distill a frozen teacher's representations into a student LM.
    Distill(DistillArgs),
    /// Cohen's kappa between two label files.
    Kappa(KappaArgs),
    /// Generate synthetic measurement tables, attribute sets and a corpus.
    Synth(SynthArgs),
    /// Print counts for a dataset file.
    Stats(StatsArgs),
    /// Serve a backend over HTTP.
    #[serde(skip)]
    Serve(ServeArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BuildDatasetArgs {
    /// Measurement CSV with a `# unit: ...` line.
    #[arg(long)]
    pub measurements: PathBuf,
    #[arg(long)]
    pub category: Category,
    /// Minimum perceptible gap; defaults to the category's threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RemoteArgs {
    /// Per-request timeout for HTTP backends, in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 8)]
    pub max_concurrency: usize,
}

impl RemoteArgs {
    fn options(&self) -> RemoteOptions {
        RemoteOptions {
            timeout: Duration::from_millis(self.timeout_ms),
            max_retries: self.retries,
            max_concurrency: self.max_concurrency,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Prompt bank (JSON lines); the built-in bank when omitted.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// `mock:<table.json>`, `ckpt:<model.ckpt>` or `http://host:port`.
    #[arg(long)]
    pub backend: String,
    #[arg(long)]
    pub mode: ScoringMode,
    /// Skip contextual calibration in masked mode.
    #[arg(long)]
    pub no_calibrate: bool,
    /// Demonstrations per query.
    #[arg(long = "few-shot", default_value_t = 0)]
    pub few_shot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matching-mode attribute word (repeatable); both polarities by default.
    #[arg(long = "word")]
    pub words: Vec<String>,
    #[arg(long, default_value_t = MIN_TEMPLATES_PER_GROUP)]
    pub min_templates: usize,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Model name used in reports (default: the backend spec).
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub remote: RemoteArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `summary.json` files written by `evaluate` (repeatable).
    #[arg(long = "summary", required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value = "causal")]
    pub objective: Objective,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.15)]
    pub mask_prob: f64,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    pub grad_clip: f64,
}

impl OptimArgs {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            warmup_steps: self.warmup,
            batch_size: self.batch_size,
            steps: self.steps,
            seed,
            mask_prob: self.mask_prob,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Text corpus, one sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Keep only the most frequent words.
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint; the loss curve goes to `<out>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DistillArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    /// Starting student; a fresh model with the teacher's vocabulary when
    /// omitted.
    #[arg(long)]
    pub student: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Share of corpus lines (taken from the end) held out for MMD tracking.
    #[arg(long, default_value_t = 0.1)]
    pub heldout_fraction: f64,
    /// Fresh-student shape; unset fields copy the teacher.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output student checkpoint; curves go to `<out>.loss.csv` and
    /// `<out>.distill.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KappaArgs {
    /// Labels, one per line.
    pub a: PathBuf,
    pub b: PathBuf,
    /// Write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub objects: usize,
    #[arg(long, default_value_t = 2000)]
    pub corpus_lines: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StatsArgs {
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub backend: String,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<PathBuf, String>,
    /// SHA-256 of every output file except the manifest.
    pub outputs: BTreeMap<PathBuf, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Process exit code for an error: 2 for validation and usage problems, 3
/// for backend and I/O failures.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        2
    } else {
        3
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(format!("resolving {}", p.display()), e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// What a command produced: files to hash and where its manifest goes.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: Option<PathBuf>,
}

impl Command {
    /// Make paths absolute and fill defaults that depend on the inputs, so
    /// the manifest records exactly what ran.
    pub fn resolve(mut self) -> Result<Self> {
        match &mut self {
            Command::BuildDataset(a) => {
                a.measurements = absolute(&a.measurements)?;
                a.out = absolute(&a.out)?;
                if a.threshold.is_none() {
                    a.threshold = Some(a.category.default_threshold().ok_or_else(|| {
                        Error::validation(
                            "threshold",
                            format!("{} has no default threshold; pass --threshold", a.category),
                        )
                    })?);
                }
            }
            Command::Evaluate(a) => {
                a.dataset = absolute(&a.dataset)?;
                a.prompts = a.prompts.as_deref().map(absolute).transpose()?;
                a.out = absolute(&a.out)?;
                let spec: BackendSpec = a.backend.parse()?;
                let spec = match spec.with_url_override(std::env::var(HTTP_URL_ENV).ok()) {
                    BackendSpec::Mock(p) => BackendSpec::Mock(absolute(&p)?),
                    BackendSpec::Checkpoint(p) => BackendSpec::Checkpoint(absolute(&p)?),
                    http => http,
                };
                a.backend = spec.to_string();
                if a.name.is_none() {
                    a.name = Some(a.backend.clone());
                }
            }
            Command::Report(a) => {
                a.summaries = a.summaries.iter().map(|p| absolute(p)).collect::<Result<_>>()?;
                a.out = absolute(&a.out)?;
            }
            Command::Train(a) => {
                a.corpus = absolute(&a.corpus)?;
                a.out = absolute(&a.out)?;
            }
            Command::Distill(a) => {
                a.teacher = absolute(&a.teacher)?;
                a.student = a.student.as_deref().map(absolute).transpose()?;
                a.corpus = absolute(&a.corpus)?;
                a.out = absolute(&a.out)?;
            }
            Command::Kappa(a) => {
                a.a = absolute(&a.a)?;
                a.b = absolute(&a.b)?;
                a.out = a.out.as_deref().map(absolute).transpose()?;
            }
            Command::Synth(a) => a.out = absolute(&a.out)?,
            Command::Stats(_) | Command::Serve(_) | Command::Replay(_) => {}
        }
        Ok(self)
    }
}

/// Parse-level entry point used by the binary.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => serve(&a),
        Command::Replay(a) => replay(&a.manifest).map(|n| println!("reproduced {n} output file(s)")),
        cmd => execute(cmd.resolve()?).map(|_| ()),
    }
}

/// Run a resolved command and write its manifest. Returns the manifest.
pub fn execute(cmd: Command) -> Result<Option<RunManifest>> {
    let outcome = match &cmd {
        Command::BuildDataset(a) => build_dataset(a)?,
        Command::Evaluate(a) => evaluate_cmd(a)?,
        Command::Report(a) => report(a)?,
        Command::Train(a) => train(a)?,
        Command::Distill(a) => distill(a)?,
        Command::Kappa(a) => kappa(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Stats(a) => stats(a)?,
        Command::Serve(_) | Command::Replay(_) => {
            return Err(Error::validation("command", "not a recordable command"));
        }
    };
    let Some(path) = outcome.manifest else {
        return Ok(None);
    };
    let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<PathBuf, String>> {
        paths.iter().map(|p| Ok((p.clone(), sha256_file(p)?))).collect()
    };
    let manifest = RunManifest {
        tool: "vecprobe".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd,
        inputs: hash_all(&outcome.inputs)?,
        outputs: hash_all(&outcome.outputs)?,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    write_file(&path, text)?;
    Ok(Some(manifest))
}

/// Re-run a manifest's command; errors if an input changed or an output
/// differs. Returns the number of verified outputs.
pub fn replay(path: &Path) -> Result<usize> {
    let recorded = RunManifest::load(path)?;
    for (p, digest) in &recorded.inputs {
        if sha256_file(p)? != *digest {
            return Err(Error::validation(
                "replay",
                format!("input {} changed since the recorded run", p.display()),
            ));
        }
    }
    let fresh = execute(recorded.command.clone())?
        .ok_or_else(|| Error::validation("replay", "command did not produce a manifest"))?;
    for (p, digest) in &recorded.outputs {
        match fresh.outputs.get(p) {
            Some(d) if d == digest => {}
            _ => {
                return Err(Error::validation(
                    "replay",
                    format!("output {} differs from the recorded run", p.display()),
                ))
            }
        }
    }
    Ok(recorded.outputs.len())
}

fn build_dataset(a: &BuildDatasetArgs) -> Result<Outcome> {
    let pair = a.category.relation_pair().ok_or_else(|| {
        Error::validation(
            "category",
            format!(
                "{} is an attribute category; comparison pairs need an ordered property",
                a.category
            ),
        )
    })?;
    let records = read_measurements(&a.measurements)?;
    let threshold = a.threshold.expect("resolved");
    let ds = build_comparison_pairs(&records, threshold, pair, a.seed)?;
    write_file(&a.out, ds.to_jsonl())?;
    let s = dataset_stats(&ds);
    println!(
        "{}: {} triplets ({} true, {} false) from {} objects",
        a.category,
        s.total,
        s.true_count,
        s.false_count,
        records.len()
    );
    Ok(Outcome {
        inputs: vec![a.measurements.clone()],
        outputs: vec![a.out.clone()],
        manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

fn open_backend(spec: &str, remote: &RemoteOptions) -> Result<Box<dyn ScoringBackend>> {
    spec.parse::<BackendSpec>()?.open(remote)
}

/// Per-run summary written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub task: String,
    pub mode: ScoringMode,
    pub prompts: usize,
    pub instances: usize,
    pub predictions: usize,
    pub ties: usize,
    /// Headline score; the best attribute word in matching mode.
    pub accuracy: MeanStd,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_word: Vec<(String, MeanStd)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_word: Option<String>,
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<Outcome> {
    let ds = load_dataset(&a.dataset)?;
    let bank = match &a.prompts {
        Some(p) => PromptBank::load(p)?,
        None => PromptBank::default_bank(),
    };
    let backend = open_backend(&a.backend, &a.remote.options())?;
    let opts = EvalOptions {
        calibrate: !a.no_calibrate,
        few_shot_k: a.few_shot,
        seed: a.seed,
        attribute_words: (!a.words.is_empty()).then(|| a.words.clone()),
        min_templates: a.min_templates,
        fillers: DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect(),
        jobs: a.jobs,
    };
    let preds = evaluate(&ds, &bank, backend.as_ref(), a.mode, &RelationLexicon::default(), &opts)?;
    let model = a.name.clone().unwrap_or_else(|| a.backend.clone());
    let task = ds.category.to_string();
    let ties = preds.iter().filter(|p| p.tie).count();
    let prompts = prompt_accuracies(&preds).len();

    let (accuracy, per_word, best_word) = if preds.iter().any(|p| p.attribute_word.is_some()) {
        let words = summarize_by_word(&preds)?;
        let (best, acc) = words.best.clone().expect("at least one word");
        for (w, s) in &words.words {
            println!("{task} {} [{w}]: {}", a.mode.as_str(), s.percent());
        }
        (acc, words.words, Some(best))
    } else {
        (aggregate(&prompt_accuracies(&preds))?, Vec::new(), None)
    };
    match &best_word {
        Some(w) => println!("{task} {} [best: {w}]: {}", a.mode.as_str(), accuracy.percent()),
        None => println!("{task} {}: {}", a.mode.as_str(), accuracy.percent()),
    }
    println!("  {prompts} prompts, {} instances, {ties} ties", ds.len());

    // entity ratios use the headline predictions
    let headline: Vec<_> = preds
        .iter()
        .filter(|p| p.attribute_word == best_word)
        .cloned()
        .collect();
    let (ratios, bins) = entity_ratios(&headline);
    let summary = EvalSummary {
        model: model.clone(),
        task: task.clone(),
        mode: a.mode,
        prompts,
        instances: ds.len(),
        predictions: preds.len(),
        ties,
        accuracy,
        per_word,
        best_word,
    };
    let (csv, text) = render_report(&[TaskResult {
        model,
        task,
        score: accuracy,
    }])?;

    let out = |name: &str| a.out.join(name);
    let files = [
        ("predictions.jsonl", predictions_jsonl(&preds)),
        (
            "summary.json",
            format!("{}\n", serde_json::to_string_pretty(&summary).expect("serializable")),
        ),
        ("report.csv", csv),
        ("report.txt", text),
        ("entity_ratios.csv", entity_ratios_csv(&ratios)),
        ("entity_histogram.csv", histogram_csv(&bins)),
    ];
    for (name, body) in &files {
        write_file(&out(name), body)?;
    }
    let mut inputs = vec![a.dataset.clone()];
    inputs.extend(a.prompts.clone());
    match a.backend.parse::<BackendSpec>()? {
        BackendSpec::Mock(p) | BackendSpec::Checkpoint(p) => inputs.push(p),
        BackendSpec::Http(_) => {}
    }
    Ok(Outcome {
        inputs,
        outputs: files.iter().map(|(n, _)| out(n)).collect(),
        manifest: Some(out(MANIFEST_FILE)),
    })
}

fn report(a: &ReportArgs) -> Result<Outcome> {
    let mut results = Vec::new();
    for p in &a.summaries {
        let s: EvalSummary = serde_json::from_str(&read_text(p)?).map_err(|e| Error::Parse {
            path: p.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        results.push(TaskResult {
            model: s.model,
            task: s.task,
            score: s.accuracy,
        });
    }
    let (csv, text) = render_report(&results)?;
    print!("{text}");
    let csv_path = a.out.join("report.csv");
    let txt_path = a.out.join("report.txt");
    write_file(&csv_path, csv)?;
    write_file(&txt_path, text)?;
    Ok(Outcome {
        inputs: a.summaries.clone(),
        outputs: vec![csv_path, txt_path],
        manifest: Some(a.out.join(MANIFEST_FILE)),
    })
}

fn loss_csv(points: impl Iterator<Item = (usize, f64)>) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in points {
        out.push_str(&format!("{step},{loss}\n"));
    }
    out
}

fn train(a: &TrainArgs) -> Result<Outcome> {
    let lines = read_lines(&a.corpus)?;
    let tok = Tokenizer::from_corpus(&lines, &["yes", "no"], a.max_vocab);
    let cfg = ModelConfig {
        layers: a.model.layers,
        width: a.model.width,
        heads: a.model.heads,
        vocab_size: tok.vocab_size(),
        max_seq_len: a.model.max_seq_len,
        objective: a.model.objective,
    };
    cfg.validate()?;
    let tcfg = a.optim.train_config(a.seed);
    tcfg.validate()?;
    let corpus = encode_corpus(&tok, &lines, cfg.max_seq_len);
    let mut model = TransformerLM::new(cfg, tok, a.seed)?;
    let curve = train_lm(&mut model, &corpus, &tcfg)?;
    save_checkpoint(&model, &a.out)?;
    let loss_path = sibling(&a.out, ".loss.csv");
    write_file(&loss_path, loss_csv(curve.iter().map(|p| (p.step, p.loss))))?;
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!(
            "trained {} params for {} steps: loss {:.4} -> {:.4}",
            model.num_params(),
            curve.len(),
            first.loss,
            last.loss
        );
    } else {
        println!("wrote untrained model with {} params", model.num_params());
    }
    Ok(Outcome {
        inputs: vec![a.corpus.clone()],
        outputs: vec![a.out.clone(), loss_path],
        manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

#[derive(Debug, Serialize)]
struct DistillSummary {
    beta: f64,
    p: u32,
    c: f64,
    steps: usize,
    heldout_sequences: usize,
    heldout_mmd_start: f64,
    heldout_mmd_end: f64,
    teacher_checksum_before: String,
    teacher_checksum_after: String,
}

fn distill(a: &DistillArgs) -> Result<Outcome> {
    if !(0.0..1.0).contains(&a.heldout_fraction) {
        return Err(Error::validation("heldout_fraction", "must lie in [0, 1)"));
    }
    let teacher = load_checkpoint(&a.teacher)?;
    let mut student = match &a.student {
        Some(p) => load_checkpoint(p)?,
        None => {
            let t = teacher.config();
            let cfg = ModelConfig {
                layers: a.layers.unwrap_or(t.layers),
                width: a.width.unwrap_or(t.width),
                heads: a.heads.unwrap_or(t.heads),
                ..*t
            };
            cfg.validate()?;
            TransformerLM::new(cfg, teacher.tokenizer().clone(), a.seed)?
        }
    };
    let teacher = TeacherAdapter::new(teacher, &student)?;
    let lines = read_lines(&a.corpus)?;
    let held = ((lines.len() as f64) * a.heldout_fraction).round() as usize;
    let (train_lines, held_lines) = lines.split_at(lines.len() - held);
    let max_len = student.config().max_seq_len;
    let corpus = encode_corpus(student.tokenizer(), train_lines, max_len);
    let heldout = encode_corpus(student.tokenizer(), held_lines, max_len);
    let cfg = DistillConfig {
        beta: a.beta,
        p: a.p,
        c: a.c,
        train: a.optim.train_config(a.seed),
    };
    let report = distill_train(&mut student, &teacher, &corpus, &heldout, &cfg)?;
    save_checkpoint(&student, &a.out)?;
    let curve_path = sibling(&a.out, ".loss.csv");
    let mut buf = Vec::new();
    write_loss_curve(&report.curve, &mut buf)?;
    write_file(&curve_path, buf)?;
    let summary = DistillSummary {
        beta: a.beta,
        p: a.p,
        c: a.c,
        steps: report.curve.len(),
        heldout_sequences: heldout.len(),
        heldout_mmd_start: report.heldout_mmd_start,
        heldout_mmd_end: report.heldout_mmd_end,
        teacher_checksum_before: report.teacher_checksum_before.clone(),
        teacher_checksum_after: report.teacher_checksum_after.clone(),
    };
    let summary_path = sibling(&a.out, ".distill.json");
    write_file(
        &summary_path,
        format!("{}\n", serde_json::to_string_pretty(&summary).expect("serializable")),
    )?;
    println!(
        "held-out MMD {:.4} -> {:.4} over {} steps; teacher unchanged: {}",
        report.heldout_mmd_start,
        report.heldout_mmd_end,
        report.curve.len(),
        report.teacher_checksum_before == report.teacher_checksum_after
    );
    let mut inputs = vec![a.teacher.clone(), a.corpus.clone()];
    inputs.extend(a.student.clone());
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone(), curve_path, summary_path],
        manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

fn kappa(a: &KappaArgs) -> Result<Outcome> {
    let la = read_lines(&a.a)?;
    let lb = read_lines(&a.b)?;
    let k = cohens_kappa(&la, &lb)?;
    println!("{k:.4}");
    let Some(out) = &a.out else {
        return Ok(Outcome {
            inputs: Vec::new(),
            outputs: Vec::new(),
            manifest: None,
        });
    };
    write_file(out, format!("{{\"kappa\":{k},\"n\":{}}}\n", la.len()))?;
    Ok(Outcome {
        inputs: vec![a.a.clone(), a.b.clone()],
        outputs: vec![out.clone()],
        manifest: Some(sibling(out, ".manifest.json")),
    })
}

fn synth(a: &SynthArgs) -> Result<Outcome> {
    if a.objects < 2 {
        return Err(Error::validation("objects", "need at least two objects"));
    }
    let objs = synthetic_objects(a.objects, a.seed);
    let mut outputs = Vec::new();
    for cat in [Category::Mass, Category::Temperature, Category::Hardness] {
        let path = a.out.join(format!("{cat}.csv"));
        write_file(&path, measurement_csv(&measurement_table(&objs, cat)?))?;
        outputs.push(path);
    }
    for cat in [Category::Color, Category::Shape, Category::Material] {
        let path = a.out.join(format!("{cat}.jsonl"));
        write_file(&path, attribute_dataset(&objs, cat, a.seed)?.to_jsonl())?;
        outputs.push(path);
    }
    let path = a.out.join("corpus.txt");
    let mut text = corpus_lines(&objs, a.corpus_lines, a.seed).join("\n");
    text.push('\n');
    write_file(&path, text)?;
    outputs.push(path);
    println!(
        "wrote {} files for {} objects to {}",
        outputs.len(),
        a.objects,
        a.out.display()
    );
    Ok(Outcome {
        inputs: Vec::new(),
        outputs,
        manifest: Some(a.out.join(MANIFEST_FILE)),
    })
}

fn stats(a: &StatsArgs) -> Result<Outcome> {
    let ds = load_dataset(&a.dataset)?;
    let s = dataset_stats(&ds);
    if ds.category.is_comparison() {
        println!(
            "{}: {} instances ({} true, {} false), {} entities",
            ds.category, s.total, s.true_count, s.false_count, s.distinct_entities
        );
    } else {
        println!(
            "{}: {} instances (gold 0: {}, gold 1: {}), {} entities",
            ds.category, s.total, s.gold_counts[0], s.gold_counts[1], s.distinct_entities
        );
    }
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: Vec::new(),
        manifest: None,
    })
}

fn serve(a: &ServeArgs) -> Result<()> {
    let spec: BackendSpec = a.backend.parse()?;
    if matches!(spec, BackendSpec::Http(_)) {
        return Err(Error::validation("backend", "serve wraps a mock or checkpoint backend"));
    }
    let backend: Arc<dyn ScoringBackend> = Arc::from(spec.open(&RemoteOptions::default())?);
    let caps = backend.capabilities();
    let server = ScoringServer::start(backend, &a.addr, a.threads)?;
    println!("serving {} at {} ({caps:?})", a.backend, server.url());
    server.join();
    Ok(())
}
