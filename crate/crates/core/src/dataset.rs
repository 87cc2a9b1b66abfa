//! Concept datasets: measurement ingestion, pair construction and the
//! canonical JSON-lines format.
//!
//! Comparison categories (size, height, mass, temperature, hardness) hold
//! [`ComparisonTriplet`]s; attribute categories (color, shape, material) hold
//! [`AttributeInstance`]s. Only mass, temperature and hardness are generated
//! here from measurement tables; the visual sets are loaded from files.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concept::{Category, Relation, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub object_name: String,
    pub value: f64,
    pub unit: Unit,
    pub source_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComparisonTriplet {
    pub head: String,
    pub relation: Relation,
    pub tail: String,
    pub label: bool,
}

impl ComparisonTriplet {
    pub fn validate(&self) -> Result<()> {
        if self.head.trim().is_empty() {
            return Err(Error::validation("head", "empty entity name"));
        }
        if self.tail.trim().is_empty() {
            return Err(Error::validation("tail", "empty entity name"));
        }
        if self.head == self.tail {
            return Err(Error::validation(
                "tail",
                format!("head and tail are both {:?}", self.head),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeInstance {
    pub head: String,
    pub option_a: String,
    pub option_b: String,
    pub gold: usize,
}

impl AttributeInstance {
    pub fn options(&self) -> [&str; 2] {
        [&self.option_a, &self.option_b]
    }

    pub fn validate(&self) -> Result<()> {
        if self.head.trim().is_empty() {
            return Err(Error::validation("head", "empty entity name"));
        }
        if self.option_a == self.option_b {
            return Err(Error::validation(
                "options",
                format!("both options are {:?}", self.option_a),
            ));
        }
        if self.gold > 1 {
            return Err(Error::validation(
                "gold",
                format!("gold index {} out of range", self.gold),
            ));
        }
        Ok(())
    }
}

/// Borrowed view over either instance kind.
#[derive(Debug, Clone, Copy)]
pub enum Instance<'a> {
    Comparison(&'a ComparisonTriplet),
    Attribute(&'a AttributeInstance),
}

impl<'a> Instance<'a> {
    pub fn head(&self) -> &'a str {
        match self {
            Instance::Comparison(t) => &t.head,
            Instance::Attribute(a) => &a.head,
        }
    }

    /// Index of the correct answer. For triplets, 0 means "the assertion
    /// holds" and 1 means it does not.
    pub fn gold_index(&self) -> usize {
        match self {
            Instance::Comparison(t) => usize::from(!t.label),
            Instance::Attribute(a) => a.gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Items {
    Comparison(Vec<ComparisonTriplet>),
    Attribute(Vec<AttributeInstance>),
}

impl Items {
    pub fn len(&self) -> usize {
        match self {
            Items::Comparison(v) => v.len(),
            Items::Attribute(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<Instance<'_>> {
        match self {
            Items::Comparison(v) => v.get(i).map(Instance::Comparison),
            Items::Attribute(v) => v.get(i).map(Instance::Attribute),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Instance<'_>> {
        (0..self.len()).map(move |i| self.get(i).expect("index in range"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMetadata {
    pub threshold: Option<Threshold>,
    pub seed: Option<u64>,
    pub item_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDataset {
    pub category: Category,
    pub items: Items,
    pub metadata: DatasetMetadata,
}

impl ConceptDataset {
    pub fn new(category: Category, items: Items) -> Result<Self> {
        let ds = ConceptDataset {
            category,
            metadata: DatasetMetadata {
                item_count: items.len(),
                ..Default::default()
            },
            items,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.items, self.category.is_attribute()) {
            (Items::Comparison(v), false) => {
                for t in v {
                    t.validate()?;
                    if t.relation.category() != self.category {
                        return Err(Error::validation(
                            "relation",
                            format!("{} does not belong to {}", t.relation, self.category),
                        ));
                    }
                }
            }
            (Items::Attribute(v), true) => v.iter().try_for_each(|a| a.validate())?,
            _ => {
                return Err(Error::validation(
                    "items",
                    format!("wrong instance kind for category {}", self.category),
                ))
            }
        }
        if self.metadata.item_count != self.items.len() {
            return Err(Error::validation(
                "item_count",
                format!(
                    "metadata says {} items, found {}",
                    self.metadata.item_count,
                    self.items.len()
                ),
            ));
        }
        Ok(())
    }

    /// Canonical JSON-lines serialization, one item per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let category = self.category;
        match &self.items {
            Items::Comparison(v) => {
                for t in v {
                    let line = ComparisonLine {
                        category,
                        head: t.head.clone(),
                        relation: t.relation,
                        tail: t.tail.clone(),
                        label: t.label,
                    };
                    out.push_str(&serde_json::to_string(&line).expect("serializable"));
                    out.push('\n');
                }
            }
            Items::Attribute(v) => {
                for a in v {
                    let line = AttributeLine {
                        category,
                        head: a.head.clone(),
                        options: [a.option_a.clone(), a.option_b.clone()],
                        gold: a.gold,
                    };
                    out.push_str(&serde_json::to_string(&line).expect("serializable"));
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComparisonLine {
    category: Category,
    head: String,
    relation: Relation,
    tail: String,
    label: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeLine {
    category: Category,
    head: String,
    options: [String; 2],
    gold: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyLine {
    Comparison(ComparisonLine),
    Attribute(AttributeLine),
}

/// Parse measurement CSV text: a `# unit: <unit>` comment line followed by
/// `object,value[,source]` rows. A literal `object,value` header row is
/// skipped.
pub fn parse_measurements(text: &str) -> Result<Vec<MeasurementRecord>> {
    let mut unit: Option<Unit> = None;
    for line in text.lines() {
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        let Some(decl) = comment.trim().strip_prefix("unit:") else {
            continue;
        };
        let parsed: Unit = decl.parse()?;
        if unit.is_some_and(|u| u != parsed) {
            return Err(Error::validation(
                "unit",
                format!("conflicting unit declarations ({} vs {parsed})", unit.unwrap()),
            ));
        }
        unit = Some(parsed);
    }

    // One record per physical line keeps reported line numbers exact.
    let mut records = Vec::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let row = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes())
            .records()
            .next()
            .transpose()
            .map_err(|e| Error::Parse {
                path: "<measurements>".into(),
                line,
                message: e.to_string(),
            })?
            .unwrap_or_default();
        let first = !seen_data;
        seen_data = true;
        if first && row.get(0) == Some("object") && row.get(1) == Some("value") {
            continue;
        }
        let (Some(name), Some(value)) = (row.get(0), row.get(1)) else {
            return Err(Error::Parse {
                path: "<measurements>".into(),
                line,
                message: "expected `object,value`".into(),
            });
        };
        let value: f64 = value.parse().map_err(|_| Error::Parse {
            path: "<measurements>".into(),
            line,
            message: format!("bad value {value:?}"),
        })?;
        let unit = unit.ok_or_else(|| Error::validation("unit", "missing `# unit:` header line before data rows"))?;
        records.push(MeasurementRecord {
            object_name: name.to_string(),
            value,
            unit,
            source_id: row.get(2).filter(|s| !s.is_empty()).map(str::to_string),
        });
    }
    Ok(records)
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_measurements(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

fn validate_records(records: &[MeasurementRecord]) -> Result<Option<Unit>> {
    let mut seen = HashSet::new();
    let unit = records.first().map(|r| r.unit);
    for r in records {
        if r.object_name.trim().is_empty() {
            return Err(Error::validation("object_name", "empty object name"));
        }
        if !seen.insert(r.object_name.as_str()) {
            return Err(Error::validation(
                "object_name",
                format!("duplicate object {:?}", r.object_name),
            ));
        }
        if !r.value.is_finite() {
            return Err(Error::validation(
                "value",
                format!("non-finite value for {:?}", r.object_name),
            ));
        }
        if Some(r.unit) != unit {
            return Err(Error::validation(
                "unit",
                format!("mixed units: {} and {}", unit.unwrap(), r.unit),
            ));
        }
    }
    Ok(unit)
}

/// Build a balanced comparison dataset from a measurement table.
///
/// Every unordered pair whose gap strictly exceeds `threshold` yields one
/// triplet. Orientation and relation are drawn from `seed`; labels are then
/// balanced by flipping randomly chosen majority-class items to the antonym
/// relation, which keeps every label truthful.
pub fn build_comparison_pairs(
    records: &[MeasurementRecord],
    threshold: f64,
    relation_pair: (Relation, Relation),
    seed: u64,
) -> Result<ConceptDataset> {
    let (rel, antonym) = relation_pair;
    if rel.category() != antonym.category() || rel.is_greater() == antonym.is_greater() {
        return Err(Error::validation(
            "relation_pair",
            format!("{rel} and {antonym} are not antonyms"),
        ));
    }
    let category = rel.category();
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::validation("threshold", "must be a positive number"));
    }
    let unit = validate_records(records)?;
    if let (Some(unit), Some(expected)) = (unit, category.unit()) {
        if unit != expected {
            return Err(Error::validation(
                "unit",
                format!("{category} expects {expected}, table is in {unit}"),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            if (a.value - b.value).abs() <= threshold {
                continue;
            }
            let (head, tail) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let relation = if rng.random_bool(0.5) { rel } else { antonym };
            triplets.push(ComparisonTriplet {
                head: head.object_name.clone(),
                relation,
                tail: tail.object_name.clone(),
                label: relation.holds(head.value, tail.value),
            });
        }
    }

    let trues = triplets.iter().filter(|t| t.label).count();
    let falses = triplets.len() - trues;
    let majority = trues > falses;
    let mut candidates: Vec<usize> = triplets
        .iter()
        .enumerate()
        .filter(|(_, t)| t.label == majority)
        .map(|(i, _)| i)
        .collect();
    candidates.shuffle(&mut rng);
    let flips = trues.abs_diff(falses) / 2;
    for &i in &candidates[..flips] {
        let t = &mut triplets[i];
        t.relation = if t.relation == rel { antonym } else { rel };
        t.label = !t.label;
    }

    let item_count = triplets.len();
    Ok(ConceptDataset {
        category,
        items: Items::Comparison(triplets),
        metadata: DatasetMetadata {
            threshold: unit.map(|unit| Threshold { value: threshold, unit }),
            seed: Some(seed),
            item_count,
        },
    })
}

/// Parse canonical JSON-lines text. `source` is used in error messages.
pub fn parse_dataset(text: &str, source: &Path) -> Result<ConceptDataset> {
    let mut category: Option<Category> = None;
    let mut comparisons = Vec::new();
    let mut attributes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: AnyLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let at_line = |e: Error| match e {
            Error::Validation { field, message } => Error::Validation {
                field,
                message: format!("{message} (line {line_no})"),
            },
            other => other,
        };
        let line_category = match parsed {
            AnyLine::Comparison(c) => {
                let t = ComparisonTriplet {
                    head: c.head,
                    relation: c.relation,
                    tail: c.tail,
                    label: c.label,
                };
                t.validate().map_err(at_line)?;
                comparisons.push(t);
                c.category
            }
            AnyLine::Attribute(a) => {
                let [option_a, option_b] = a.options;
                let inst = AttributeInstance {
                    head: a.head,
                    option_a,
                    option_b,
                    gold: a.gold,
                };
                inst.validate().map_err(at_line)?;
                attributes.push(inst);
                a.category
            }
        };
        match category {
            None => category = Some(line_category),
            Some(c) if c != line_category => {
                return Err(at_line(Error::validation(
                    "category",
                    format!("mixed categories {c} and {line_category}"),
                )))
            }
            _ => {}
        }
    }
    let category =
        category.ok_or_else(|| Error::validation("category", format!("{} contains no items", source.display())))?;
    let items = if category.is_attribute() {
        if !comparisons.is_empty() {
            return Err(Error::validation(
                "items",
                format!("{category} file contains comparison triplets"),
            ));
        }
        Items::Attribute(attributes)
    } else {
        if !attributes.is_empty() {
            return Err(Error::validation(
                "items",
                format!("{category} file contains attribute instances"),
            ));
        }
        Items::Comparison(comparisons)
    };
    ConceptDataset::new(category, items)
}

pub fn load_dataset(path: &Path) -> Result<ConceptDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_dataset(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    /// Comparison labels (true, false); zero for attribute sets.
    pub true_count: usize,
    pub false_count: usize,
    /// Attribute gold indices (0, 1); zero for comparison sets.
    pub gold_counts: [usize; 2],
    pub distinct_entities: usize,
}

pub fn dataset_stats(ds: &ConceptDataset) -> DatasetStats {
    let mut stats = DatasetStats {
        total: ds.len(),
        ..Default::default()
    };
    let mut entities = BTreeSet::new();
    match &ds.items {
        Items::Comparison(v) => {
            for t in v {
                if t.label {
                    stats.true_count += 1;
                } else {
                    stats.false_count += 1;
                }
                entities.insert(t.head.as_str());
                entities.insert(t.tail.as_str());
            }
        }
        Items::Attribute(v) => {
            for a in v {
                stats.gold_counts[a.gold] += 1;
                entities.insert(a.head.as_str());
            }
        }
    }
    stats.distinct_entities = entities.len();
    stats
}
