//! Reporting: accuracy across prompts, entity correct ratios, agreement and
//! result tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Prediction;

pub const HISTOGRAM_BINS: usize = 10;

/// Footer attached to every rendered report.
pub const STD_NOTE: &str = "values are mean±std across prompts (sample std, n-1 denominator), in percent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAccuracy {
    pub prompt_id: usize,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// `"mean±std"` in percent with two decimals.
    pub fn percent(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Per-prompt accuracy, ordered by prompt id.
pub fn prompt_accuracies(preds: &[Prediction]) -> Vec<PromptAccuracy> {
    let mut by_prompt: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in preds {
        let e = by_prompt.entry(p.prompt_id).or_default();
        e.0 += usize::from(p.correct);
        e.1 += 1;
    }
    by_prompt
        .into_iter()
        .map(|(prompt_id, (correct, count))| PromptAccuracy {
            prompt_id,
            accuracy: correct as f64 / count as f64,
            count,
        })
        .collect()
}

/// Arithmetic mean and sample standard deviation of the accuracies.
pub fn aggregate(per_prompt: &[PromptAccuracy]) -> Result<MeanStd> {
    if per_prompt.is_empty() {
        return Err(Error::validation("per_prompt", "no prompt accuracies to aggregate"));
    }
    let n = per_prompt.len() as f64;
    let mean = per_prompt.iter().map(|p| p.accuracy).sum::<f64>() / n;
    let std = if per_prompt.len() == 1 {
        0.0
    } else {
        (per_prompt.iter().map(|p| (p.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

/// Matching-mode summary: one row per attribute word plus the best word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSummary {
    pub words: Vec<(String, MeanStd)>,
    pub best: Option<(String, MeanStd)>,
}

pub fn summarize_by_word(preds: &[Prediction]) -> Result<WordSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Prediction>> = HashMap::new();
    for p in preds {
        let w = p.attribute_word.clone().unwrap_or_default();
        if !groups.contains_key(&w) {
            order.push(w.clone());
        }
        groups.entry(w).or_default().push(p.clone());
    }
    let mut words = Vec::with_capacity(order.len());
    for w in order {
        words.push((w.clone(), aggregate(&prompt_accuracies(&groups[&w]))?));
    }
    let best = words
        .iter()
        .fold(None::<&(String, MeanStd)>, |best, cur| match best {
            Some(b) if b.1.mean >= cur.1.mean => Some(b),
            _ => Some(cur),
        })
        .cloned();
    Ok(WordSummary { words, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRatio {
    pub entity: String,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Pooled correct ratio per head entity (sorted by name) and its histogram
/// over ten uniform bins; the last bin includes 1.0.
pub fn entity_ratios(preds: &[Prediction]) -> (Vec<EntityRatio>, Vec<HistogramBin>) {
    let mut by_head: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in preds {
        let e = by_head.entry(p.head.as_str()).or_default();
        e.0 += usize::from(p.correct);
        e.1 += 1;
    }
    let ratios: Vec<EntityRatio> = by_head
        .into_iter()
        .map(|(entity, (correct, count))| EntityRatio {
            entity: entity.to_string(),
            ratio: correct as f64 / count as f64,
            count,
        })
        .collect();
    let ratio_values: Vec<f64> = ratios.iter().map(|r| r.ratio).collect();
    (ratios, histogram(&ratio_values))
}

pub fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            low: i as f64 / HISTOGRAM_BINS as f64,
            high: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    for &v in values {
        let i = ((v * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
        bins[i].count += 1;
    }
    bins
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for b in bins {
        let _ = writeln!(out, "{:.1},{:.1},{}", b.low, b.high, b.count);
    }
    out
}

pub fn entity_ratios_csv(ratios: &[EntityRatio]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["entity", "ratio", "count"]).expect("in-memory write");
    for r in ratios {
        w.write_record([r.entity.clone(), format!("{:.6}", r.ratio), r.count.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Chance-corrected agreement between two label sequences.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation(
            "labels",
            format!("{} labels vs {}", a.len(), b.len()),
        ));
    }
    if a.is_empty() {
        return Err(Error::validation("labels", "no labels"));
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let p_e: f64 = ma
        .iter()
        .map(|(k, &ca)| ca as f64 * mb.get(k).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// One (model, task) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub model: String,
    pub task: String,
    pub score: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub models: Vec<String>,
    pub tasks: Vec<String>,
    /// `cells[model][task]`
    pub cells: Vec<Vec<Option<MeanStd>>>,
    /// Mean of the available task means per model.
    pub averages: Vec<Option<f64>>,
}

const EMPTY_CELL: &str = "—";

impl Report {
    /// Rows and columns keep first-appearance order.
    pub fn new(results: &[TaskResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::validation("results", "nothing to report"));
        }
        let mut models: Vec<String> = Vec::new();
        let mut tasks: Vec<String> = Vec::new();
        for r in results {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
            if !tasks.contains(&r.task) {
                tasks.push(r.task.clone());
            }
        }
        let mut cells = vec![vec![None; tasks.len()]; models.len()];
        for r in results {
            let m = models.iter().position(|x| *x == r.model).expect("model collected");
            let t = tasks.iter().position(|x| *x == r.task).expect("task collected");
            cells[m][t] = Some(r.score);
        }
        let averages = cells
            .iter()
            .map(|row| {
                let present: Vec<f64> = row.iter().flatten().map(|s| s.mean).collect();
                (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
            })
            .collect();
        Ok(Report {
            models,
            tasks,
            cells,
            averages,
        })
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once("model".to_string())
            .chain(self.tasks.iter().cloned())
            .chain(std::iter::once("avg".to_string()))
            .collect::<Vec<_>>()];
        for (i, m) in self.models.iter().enumerate() {
            let mut row = vec![m.clone()];
            row.extend(
                self.cells[i]
                    .iter()
                    .map(|c| c.map_or_else(|| EMPTY_CELL.to_string(), |s| s.percent())),
            );
            row.push(self.averages[i].map_or_else(|| EMPTY_CELL.to_string(), |a| format!("{:.2}", 100.0 * a)));
            rows.push(row);
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    let pad = widths[c] - s.chars().count();
                    if c == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        let _ = writeln!(out, "\n{STD_NOTE}");
        out
    }
}

/// Build a report and render it both ways: `(csv, text)`.
pub fn render_report(results: &[TaskResult]) -> Result<(String, String)> {
    let r = Report::new(results)?;
    Ok((r.to_csv(), r.to_text()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(v: &[f64]) -> Vec<PromptAccuracy> {
        v.iter()
            .enumerate()
            .map(|(i, &a)| PromptAccuracy {
                prompt_id: i,
                accuracy: a,
                count: 10,
            })
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&acc(&[0.8, 0.8, 0.8])).unwrap();
        assert!((s.mean - 0.8).abs() < 1e-12 && s.std.abs() < 1e-12);
        let s = aggregate(&acc(&[0.6, 0.8])).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(aggregate(&acc(&[0.5])).unwrap(), MeanStd { mean: 0.5, std: 0.0 });
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn histogram_top_bin_closed() {
        let bins = histogram(&[0.0, 0.5, 1.0]);
        let counts: Vec<usize> = bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), -1.0);
        assert_eq!(cohens_kappa(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert!(cohens_kappa(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn report_layout() {
        let r = |m: &str, t: &str, mean: f64| TaskResult {
            model: m.into(),
            task: t.into(),
            score: MeanStd { mean, std: 0.01 },
        };
        let results = vec![
            r("a", "mass", 0.5),
            r("a", "temperature", 0.6),
            r("a", "hardness", 0.7),
            r("b", "mass", 0.4),
            r("b", "hardness", 0.8),
        ];
        let report = Report::new(&results).unwrap();
        assert_eq!(report.models.len(), 2);
        assert_eq!(report.tasks.len() + 1, 4);
        assert!((report.averages[0].unwrap() - 0.6).abs() < 1e-12);
        let (csv, text) = render_report(&results).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap(), "model,mass,temperature,hardness,avg");
        assert!(csv.lines().nth(2).unwrap().contains(",—,"));
        assert!(text.contains("50.00±1.00"));
        assert!(text.contains(STD_NOTE));
    }
}
