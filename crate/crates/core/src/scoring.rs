//! Prediction rules for the three prompting regimes and the evaluation loop.
//!
//! * masked LM: the probabilities of "yes"/"no" at the mask, divided by a
//!   prior estimated from content-free inputs;
//! * causal LM: the assertion and its antonym rewrite are compared by
//!   perplexity, lower wins;
//! * matching: object descriptions are compared by cosine similarity to an
//!   attribute description.
//!
//! For comparison triplets the chosen index 0 means "the assertion holds"
//! in masked and causal modes, and "the head has more of the attribute word"
//! in matching mode. For attribute instances it is the chosen option.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Capability, ScoringBackend};
use crate::concept::{Category, Relation};
use crate::dataset::{AttributeInstance, ComparisonTriplet, ConceptDataset, Instance};
use crate::error::{BackendError, Error, Result};
use crate::matrix::{dot, norm};
use crate::prompt::{
    assemble_few_shot, fill, render_causal_options, render_causal_pair, render_matching, render_matching_options,
    render_mlm, render_mlm_option, sample_demos, PromptBank, PromptMode, PromptTemplate, RelationLexicon, Slots, MASK,
    MIN_TEMPLATES_PER_GROUP, MLM_CANDIDATES,
};

/// Content-free inputs used to estimate the calibration prior.
pub const DEFAULT_FILLERS: [&str; 3] = ["N/A", "", "[unused]"];

/// `exp(-mean(logprobs))`.
pub fn perplexity(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::validation("logprobs", "perplexity of an empty sequence"));
    }
    if let Some(bad) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
        return Err(Error::validation("logprobs", format!("{bad} is not a log-probability")));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

/// A binary decision with the two scores it was based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub chosen: usize,
    pub tie: bool,
    pub scores: [f64; 2],
}

impl Choice {
    /// Absolute gap between the two scores.
    pub fn margin(&self) -> f64 {
        (self.scores[0] - self.scores[1]).abs()
    }
}

fn pick(scores: [f64; 2], higher_wins: bool) -> Choice {
    let tie = scores[0] == scores[1];
    let second = if higher_wins {
        scores[1] > scores[0]
    } else {
        scores[1] < scores[0]
    };
    Choice {
        chosen: usize::from(second),
        tie,
        scores,
    }
}

/// Lower perplexity wins; an exact tie picks 0 and sets the flag.
pub fn causal_predict(ppl1: f64, ppl2: f64) -> Result<Choice> {
    for p in [ppl1, ppl2] {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::validation(
                "perplexity",
                format!("{p} is not a finite positive number"),
            ));
        }
    }
    Ok(pick([ppl1, ppl2], false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPrior {
    pub probs: Vec<f64>,
    pub fillers: Vec<String>,
}

impl CalibrationPrior {
    pub fn new(probs: Vec<f64>, fillers: Vec<String>) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::validation(
                "prior",
                format!("prior probability {bad} is not positive"),
            ));
        }
        Ok(CalibrationPrior { probs, fillers })
    }

    pub fn uniform(n: usize) -> Self {
        CalibrationPrior {
            probs: vec![1.0; n],
            fillers: Vec::new(),
        }
    }
}

/// Replace every content placeholder except those given in `keep` with the
/// filler.
fn content_free(body: &str, filler: &str, rel: Option<&str>) -> Result<String> {
    fill(
        body,
        &Slots {
            head: Some(filler),
            rel: Some(rel.unwrap_or(filler)),
            tail: Some(filler),
            attribute: Some(filler),
        },
    )
}

/// Mean candidate probabilities over the content-free renderings of
/// `template`. `rel` keeps the relation word; `prefix` is prepended (few-shot
/// demonstrations).
pub fn estimate_prior(
    backend: &dyn ScoringBackend,
    template: &PromptTemplate,
    rel: Option<&str>,
    prefix: &str,
    candidates: &[&str],
    fillers: &[&str],
) -> Result<CalibrationPrior> {
    if fillers.is_empty() {
        return Err(Error::validation(
            "fillers",
            "at least one content-free filler is required",
        ));
    }
    let mut sums = vec![0.0; candidates.len()];
    for f in fillers {
        let text = format!("{prefix}{}", content_free(&template.body, f, rel)?);
        let probs = backend.mask_candidate_probs(&text, candidates)?;
        sums.iter_mut().zip(&probs).for_each(|(s, p)| *s += p);
    }
    let probs: Vec<f64> = sums.iter().map(|s| s / fillers.len() as f64).collect();
    if let Some(i) = probs.iter().position(|p| *p <= 0.0) {
        return Err(Error::Backend(BackendError::Model(format!(
            "candidate {:?} has zero probability for every content-free input of {:?}",
            candidates[i], template.body
        ))));
    }
    CalibrationPrior::new(probs, fillers.iter().map(|s| s.to_string()).collect())
}

/// Calibrated scores `probs[c] / prior[c]`; the larger wins.
pub fn mlm_predict(probs: [f64; 2], prior: &CalibrationPrior) -> Result<Choice> {
    if prior.probs.len() != 2 {
        return Err(Error::Shape(format!(
            "prior has {} entries for 2 candidates",
            prior.probs.len()
        )));
    }
    if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::validation("probs", format!("{bad} is not a probability")));
    }
    Ok(pick([probs[0] / prior.probs[0], probs[1] / prior.probs[1]], true))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vectors of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::validation("embedding", "zero-norm vector"));
    }
    Ok(dot(a, b) / (na * nb))
}

/// The object whose vector is closer (by cosine) to the attribute vector.
pub fn matching_predict(e_o1: &[f64], e_o2: &[f64], e_attr: &[f64]) -> Result<Choice> {
    Ok(pick([cosine(e_o1, e_attr)?, cosine(e_o2, e_attr)?], true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    Mlm,
    Causal,
    Matching,
}

impl ScoringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::Mlm => "mlm",
            ScoringMode::Causal => "causal",
            ScoringMode::Matching => "matching",
        }
    }

    pub fn capability(self) -> Capability {
        match self {
            ScoringMode::Mlm => Capability::MaskCandidateProbs,
            ScoringMode::Causal => Capability::ConditionalLogprobs,
            ScoringMode::Matching => Capability::SentenceEmbedding,
        }
    }
}

impl std::str::FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlm" | "masked" => Ok(ScoringMode::Mlm),
            "causal" | "ppl" => Ok(ScoringMode::Causal),
            "matching" => Ok(ScoringMode::Matching),
            other => Err(Error::validation("mode", format!("unknown scoring mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Divide mask probabilities by the content-free prior.
    pub calibrate: bool,
    /// Demonstrations prepended to each query (0 = zero-shot).
    pub few_shot_k: usize,
    pub seed: u64,
    /// Matching-mode attribute words; defaults to both polarity words of the
    /// category.
    pub attribute_words: Option<Vec<String>>,
    /// Smallest acceptable number of templates per (task, mode) group.
    pub min_templates: usize,
    pub fillers: Vec<String>,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            calibrate: true,
            few_shot_k: 0,
            seed: 0,
            attribute_words: None,
            min_templates: MIN_TEMPLATES_PER_GROUP,
            fillers: DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: usize,
    pub prompt_id: usize,
    pub head: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_word: Option<String>,
    pub chosen: usize,
    pub gold: usize,
    pub correct: bool,
    pub scores: [f64; 2],
    pub tie: bool,
}

/// One prompt of a group: a single template, or an object/attribute pair in
/// matching mode.
#[derive(Debug, Clone, Copy)]
enum Prompt<'a> {
    Single(&'a PromptTemplate),
    Matching(&'a PromptTemplate, &'a PromptTemplate),
}

fn select_prompts<'a>(
    bank: &'a PromptBank,
    category: Category,
    mode: ScoringMode,
    min: usize,
) -> Result<Vec<Prompt<'a>>> {
    let check = |n: usize, what: &str| -> Result<()> {
        if n == 0 {
            return Err(Error::validation(
                "prompts",
                format!("no {what} templates for {category}"),
            ));
        }
        if n < min {
            return Err(Error::validation(
                "prompts",
                format!("{n} {what} templates for {category}, at least {min} required"),
            ));
        }
        Ok(())
    };
    match mode {
        ScoringMode::Mlm | ScoringMode::Causal => {
            let pm = if mode == ScoringMode::Mlm {
                PromptMode::Mlm
            } else {
                PromptMode::Causal
            };
            let group = bank.group(category, pm);
            check(group.len(), pm.as_str())?;
            Ok(group.into_iter().map(Prompt::Single).collect())
        }
        ScoringMode::Matching => {
            let objects = bank.group(category, PromptMode::MatchingObject);
            let attrs = bank.group(category, PromptMode::MatchingAttribute);
            if objects.len() != attrs.len() {
                return Err(Error::validation(
                    "prompts",
                    format!(
                        "{} matching-object but {} matching-attribute templates for {category}; they pair by position",
                        objects.len(),
                        attrs.len()
                    ),
                ));
            }
            check(objects.len(), "matching")?;
            Ok(objects
                .into_iter()
                .zip(attrs)
                .map(|(o, a)| Prompt::Matching(o, a))
                .collect())
        }
    }
}

/// Mix seed, prompt and instance into one RNG seed.
fn demo_seed(seed: u64, prompt: usize, instance: usize) -> u64 {
    let mut z = seed
        ^ (prompt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (instance as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether the head of a triplet has the larger value.
fn head_is_greater(x: &ComparisonTriplet) -> bool {
    x.relation.is_greater() == x.label
}

/// The triplet restated so that it is true.
fn truthful(x: &ComparisonTriplet, lex: &RelationLexicon) -> Result<ComparisonTriplet> {
    if x.label {
        return Ok(x.clone());
    }
    Ok(ComparisonTriplet {
        relation: lex.antonym(x.relation)?,
        label: true,
        ..x.clone()
    })
}

struct Evaluator<'a> {
    ds: &'a ConceptDataset,
    backend: &'a dyn ScoringBackend,
    lex: &'a RelationLexicon,
    opts: &'a EvalOptions,
    fillers: Vec<&'a str>,
    priors: Mutex<HashMap<String, Arc<CalibrationPrior>>>,
}

impl Evaluator<'_> {
    /// A complete true statement for demonstration `i` in the template's
    /// format; masked templates get "yes" in the mask.
    fn demo_text(&self, t: &PromptTemplate, i: usize) -> Result<String> {
        let inst = self.ds.items.get(i).expect("demo index in range");
        let text = match (inst, t.mode) {
            (Instance::Comparison(x), PromptMode::Mlm) => render_mlm(t, &truthful(x, self.lex)?, self.lex)?.text,
            (Instance::Comparison(x), _) => render_causal_pair(t, &truthful(x, self.lex)?, self.lex)?.0,
            (Instance::Attribute(a), PromptMode::Mlm) => render_mlm_option(t, a, a.gold)?.text,
            (Instance::Attribute(a), _) => {
                let (s0, s1) = render_causal_options(t, a)?;
                if a.gold == 0 {
                    s0
                } else {
                    s1
                }
            }
        };
        Ok(text.replacen(MASK, MLM_CANDIDATES[0], 1))
    }

    fn prefix(&self, t: &PromptTemplate, prompt_id: usize, instance_id: usize) -> Result<String> {
        let k = self.opts.few_shot_k;
        if k == 0 {
            return Ok(String::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(demo_seed(self.opts.seed, prompt_id, instance_id));
        let picks = sample_demos(&mut rng, self.ds.len(), instance_id, k)?;
        let demos: Vec<String> = picks.iter().map(|&i| self.demo_text(t, i)).collect::<Result<_>>()?;
        Ok(assemble_few_shot(&demos, ""))
    }

    fn prior(&self, t: &PromptTemplate, rel: Option<&str>, prefix: &str) -> Result<Arc<CalibrationPrior>> {
        if !self.opts.calibrate {
            return Ok(Arc::new(CalibrationPrior::uniform(2)));
        }
        let key = format!("{prefix}\u{1}{}\u{1}{}", t.body, rel.unwrap_or("\u{2}"));
        if let Some(p) = self.priors.lock().expect("prior cache").get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(estimate_prior(
            self.backend,
            t,
            rel,
            prefix,
            &MLM_CANDIDATES,
            &self.fillers,
        )?);
        self.priors.lock().expect("prior cache").insert(key, Arc::clone(&p));
        Ok(p)
    }

    fn ppl(&self, text: &str) -> Result<f64> {
        let out = self.backend.conditional_logprobs(text)?;
        perplexity(&out.logprobs).map_err(|e| match e {
            Error::Validation { message, .. } => Error::Backend(BackendError::Model(format!("{message} for {text:?}"))),
            other => other,
        })
    }

    fn mlm_probs(&self, text: &str) -> Result<[f64; 2]> {
        let p = self.backend.mask_candidate_probs(text, &MLM_CANDIDATES)?;
        crate::backend::validate_probs(&p, 2)?;
        Ok([p[0], p[1]])
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.backend.embed(text)
    }

    fn comparison(
        &self,
        prompt: Prompt<'_>,
        pid: usize,
        iid: usize,
        x: &ComparisonTriplet,
        word: Option<&str>,
    ) -> Result<(Choice, usize)> {
        let gold = usize::from(!x.label);
        match prompt {
            Prompt::Single(t) if t.mode == PromptMode::Mlm => {
                let prefix = self.prefix(t, pid, iid)?;
                let q = render_mlm(t, x, self.lex)?;
                let probs = self.mlm_probs(&format!("{prefix}{}", q.text))?;
                let prior = self.prior(t, Some(self.lex.surface(x.relation)?), &prefix)?;
                Ok((mlm_predict(probs, &prior)?, gold))
            }
            Prompt::Single(t) => {
                let prefix = self.prefix(t, pid, iid)?;
                let (s1, s2) = render_causal_pair(t, x, self.lex)?;
                let c = causal_predict(self.ppl(&format!("{prefix}{s1}"))?, self.ppl(&format!("{prefix}{s2}"))?)?;
                Ok((c, gold))
            }
            Prompt::Matching(ot, at) => {
                let word = word.expect("matching evaluation supplies a word");
                let rel = self
                    .lex
                    .relation_for_word(word)
                    .filter(|r| r.category() == x.relation.category())
                    .ok_or_else(|| {
                        Error::validation(
                            "attribute_words",
                            format!("{word:?} is not a {} word", x.relation.category()),
                        )
                    })?;
                let (o1, o2, a) = render_matching(ot, at, x, word)?;
                let c = matching_predict(&self.embed(&o1)?, &self.embed(&o2)?, &self.embed(&a)?)?;
                let head_more = rel.is_greater() == head_is_greater(x);
                Ok((c, usize::from(!head_more)))
            }
        }
    }

    fn attribute(&self, prompt: Prompt<'_>, pid: usize, iid: usize, x: &AttributeInstance) -> Result<Choice> {
        match prompt {
            Prompt::Single(t) if t.mode == PromptMode::Mlm => {
                let prefix = self.prefix(t, pid, iid)?;
                let prior = self.prior(t, None, &prefix)?;
                let mut share = [0.0; 2];
                for (o, s) in share.iter_mut().enumerate() {
                    let q = render_mlm_option(t, x, o)?;
                    let c = mlm_predict(self.mlm_probs(&format!("{prefix}{}", q.text))?, &prior)?;
                    let total = c.scores[0] + c.scores[1];
                    *s = if total > 0.0 { c.scores[0] / total } else { 0.0 };
                }
                Ok(pick(share, true))
            }
            Prompt::Single(t) => {
                let prefix = self.prefix(t, pid, iid)?;
                let (s0, s1) = render_causal_options(t, x)?;
                causal_predict(self.ppl(&format!("{prefix}{s0}"))?, self.ppl(&format!("{prefix}{s1}"))?)
            }
            Prompt::Matching(ot, at) => {
                let (o, a0, a1) = render_matching_options(ot, at, x)?;
                let eo = self.embed(&o)?;
                Ok(pick(
                    [cosine(&eo, &self.embed(&a0)?)?, cosine(&eo, &self.embed(&a1)?)?],
                    true,
                ))
            }
        }
    }
}

/// Score every (prompt, instance[, attribute word]) combination. Output is
/// ordered by prompt id, then attribute word, then instance id, independent
/// of the number of worker threads.
pub fn evaluate(
    ds: &ConceptDataset,
    bank: &PromptBank,
    backend: &dyn ScoringBackend,
    mode: ScoringMode,
    lex: &RelationLexicon,
    opts: &EvalOptions,
) -> Result<Vec<Prediction>> {
    backend.capabilities().require(mode.capability())?;
    if bank.is_empty() {
        return Err(Error::validation("prompts", "prompt bank is empty"));
    }
    if ds.is_empty() {
        return Err(Error::validation("dataset", "dataset is empty"));
    }
    if mode == ScoringMode::Matching && opts.few_shot_k > 0 {
        return Err(Error::validation(
            "few_shot_k",
            "few-shot demonstrations are not used in matching mode",
        ));
    }
    if opts.few_shot_k > 0 && opts.few_shot_k >= ds.len() {
        return Err(Error::validation(
            "few_shot_k",
            format!(
                "k = {} exceeds the {} available demonstrations",
                opts.few_shot_k,
                ds.len() - 1
            ),
        ));
    }
    if mode == ScoringMode::Mlm && opts.calibrate && opts.fillers.is_empty() {
        return Err(Error::validation(
            "fillers",
            "calibration needs at least one content-free filler",
        ));
    }
    let prompts = select_prompts(bank, ds.category, mode, opts.min_templates)?;
    let words: Vec<Option<String>> = if mode == ScoringMode::Matching && ds.category.is_comparison() {
        let words = match &opts.attribute_words {
            Some(w) if !w.is_empty() => w.clone(),
            _ => lex.words_for(ds.category)?,
        };
        for w in &words {
            match lex.relation_for_word(w) {
                Some(r) if r.category() == ds.category => {}
                _ => {
                    return Err(Error::validation(
                        "attribute_words",
                        format!("{w:?} is not an attribute word for {}", ds.category),
                    ))
                }
            }
        }
        words.into_iter().map(Some).collect()
    } else {
        vec![None]
    };

    let ev = Evaluator {
        ds,
        backend,
        lex,
        opts,
        fillers: opts.fillers.iter().map(String::as_str).collect(),
        priors: Mutex::new(HashMap::new()),
    };
    let mut work = Vec::with_capacity(prompts.len() * words.len() * ds.len());
    for pid in 0..prompts.len() {
        for w in &words {
            for iid in 0..ds.len() {
                work.push((pid, w.as_deref(), iid));
            }
        }
    }
    let run = || -> Result<Vec<Prediction>> {
        work.par_iter()
            .map(|&(pid, word, iid)| {
                let inst = ds.items.get(iid).expect("instance index in range");
                let (choice, gold) = match inst {
                    Instance::Comparison(x) => ev.comparison(prompts[pid], pid, iid, x, word)?,
                    Instance::Attribute(a) => (ev.attribute(prompts[pid], pid, iid, a)?, a.gold),
                };
                Ok(Prediction {
                    instance_id: iid,
                    prompt_id: pid,
                    head: inst.head().to_string(),
                    attribute_word: word.map(str::to_string),
                    chosen: choice.chosen,
                    gold,
                    correct: choice.chosen == gold,
                    scores: choice.scores,
                    tie: choice.tie,
                })
            })
            .collect()
    };
    match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::validation("jobs", e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Predictions as JSON lines.
pub fn predictions_jsonl(preds: &[Prediction]) -> String {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: "<predictions>".into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Relation used for `word` in matching mode, if any.
pub fn word_relation(lex: &RelationLexicon, word: &str) -> Option<Relation> {
    lex.relation_for_word(word)
}
