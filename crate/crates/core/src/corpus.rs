//! Seeded synthetic worlds: objects with physical properties, measurement
//! tables derived from them, attribute instances and a plain-text corpus of
//! simple statements for training the reference model.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concept::{Category, Unit};
use crate::dataset::{AttributeInstance, ConceptDataset, Items, MeasurementRecord};
use crate::error::{Error, Result};

const NOUNS: [&str; 60] = [
    "apple", "anvil", "balloon", "basket", "bell", "blanket", "boot", "bottle", "brick", "broom", "bucket", "candle",
    "chair", "coin", "cup", "desk", "drum", "feather", "fork", "glove", "hammer", "helmet", "jar", "kettle", "key",
    "ladder", "lamp", "leaf", "magnet", "mirror", "mug", "nail", "needle", "pan", "pebble", "pencil", "pillow",
    "plate", "pot", "rope", "ruler", "saw", "scarf", "shell", "shovel", "sock", "spoon", "stone", "stool", "table",
    "teapot", "tile", "towel", "tray", "trophy", "umbrella", "vase", "wagon", "whistle", "wrench",
];

pub const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "black", "white", "brown", "orange"];
pub const SHAPES: [&str; 5] = ["round", "square", "triangular", "oval", "rectangular"];
pub const MATERIALS: [&str; 6] = ["wood", "metal", "glass", "plastic", "cloth", "stone"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObject {
    pub name: String,
    pub color: String,
    pub shape: String,
    pub material: String,
    pub mass_lbs: f64,
    pub temperature_c: f64,
    pub hardness_mohs: f64,
}

impl SyntheticObject {
    pub fn value(&self, category: Category) -> Option<f64> {
        match category {
            Category::Mass => Some(self.mass_lbs),
            Category::Temperature => Some(self.temperature_c),
            Category::Hardness => Some(self.hardness_mohs),
            _ => None,
        }
    }

    pub fn attribute(&self, category: Category) -> Option<&str> {
        match category {
            Category::Color => Some(&self.color),
            Category::Shape => Some(&self.shape),
            Category::Material => Some(&self.material),
            _ => None,
        }
    }
}

fn palette(category: Category) -> &'static [&'static str] {
    match category {
        Category::Color => &COLORS,
        Category::Shape => &SHAPES,
        _ => &MATERIALS,
    }
}

/// `n` objects with distinct names. Values are rounded to two decimals.
pub fn synthetic_objects(n: usize, seed: u64) -> Vec<SyntheticObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<String> = NOUNS.iter().map(|s| s.to_string()).collect();
    names.shuffle(&mut rng);
    let round = |v: f64| (v * 100.0).round() / 100.0;
    (0..n)
        .map(|i| {
            let base = &names[i % names.len()];
            let name = if i < names.len() {
                base.clone()
            } else {
                format!("{base} {}", i / names.len() + 1)
            };
            SyntheticObject {
                name,
                color: COLORS.choose(&mut rng).expect("non-empty").to_string(),
                shape: SHAPES.choose(&mut rng).expect("non-empty").to_string(),
                material: MATERIALS.choose(&mut rng).expect("non-empty").to_string(),
                mass_lbs: round(10f64.powf(rng.random_range(-2.0..3.0))),
                temperature_c: round(rng.random_range(-40.0..400.0)),
                hardness_mohs: round(rng.random_range(1.0..10.0)),
            }
        })
        .collect()
}

/// Measurement table for a builder-backed category.
pub fn measurement_table(objects: &[SyntheticObject], category: Category) -> Result<Vec<MeasurementRecord>> {
    let unit = category
        .unit()
        .ok_or_else(|| Error::validation("category", format!("{category} has no measurement unit")))?;
    Ok(objects
        .iter()
        .map(|o| MeasurementRecord {
            object_name: o.name.clone(),
            value: o.value(category).expect("unit implies a value"),
            unit,
            source_id: Some("synthetic".into()),
        })
        .collect())
}

/// Measurement table as CSV with a unit comment line.
pub fn measurement_csv(records: &[MeasurementRecord]) -> String {
    let unit = records.first().map_or(Unit::Pounds, |r| r.unit);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["object", "value", "source"]).expect("in-memory write");
    for r in records {
        w.write_record([
            r.object_name.as_str(),
            &r.value.to_string(),
            r.source_id.as_deref().unwrap_or(""),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    format!("# unit: {unit}\n{body}")
}

/// One attribute instance per object: the true value and a different
/// distractor, in seeded order.
pub fn attribute_dataset(objects: &[SyntheticObject], category: Category, seed: u64) -> Result<ConceptDataset> {
    if !category.is_attribute() {
        return Err(Error::validation(
            "category",
            format!("{category} is not an attribute category"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = objects
        .iter()
        .map(|o| {
            let gold = o.attribute(category).expect("attribute category").to_string();
            let others: Vec<&str> = palette(category).iter().copied().filter(|c| *c != gold).collect();
            let distractor = others.choose(&mut rng).expect("palette has alternatives").to_string();
            let gold_first = rng.random_bool(0.5);
            let (a, b) = if gold_first {
                (gold, distractor)
            } else {
                (distractor, gold)
            };
            AttributeInstance {
                head: o.name.clone(),
                option_a: a,
                option_b: b,
                gold: usize::from(!gold_first),
            }
        })
        .collect();
    let mut ds = ConceptDataset::new(category, Items::Attribute(items))?;
    ds.metadata.seed = Some(seed);
    Ok(ds)
}

/// Statement lines about the objects, one per line.
pub fn corpus_lines(objects: &[SyntheticObject], lines: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(lines);
    if objects.len() < 2 {
        return out;
    }
    while out.len() < lines {
        let a = objects.choose(&mut rng).expect("non-empty");
        let line = match rng.random_range(0..6) {
            0 => format!("the {} is {} .", a.name, a.color),
            1 => format!("the {} is {} .", a.name, a.shape),
            2 => format!("the {} is made of {} .", a.name, a.material),
            k => {
                let b = objects.choose(&mut rng).expect("non-empty");
                if a.name == b.name {
                    continue;
                }
                let (va, vb, words) = match k {
                    3 => (a.mass_lbs, b.mass_lbs, ("heavier", "lighter")),
                    4 => (a.temperature_c, b.temperature_c, ("hotter", "colder")),
                    _ => (a.hardness_mohs, b.hardness_mohs, ("harder", "softer")),
                };
                if va == vb {
                    continue;
                }
                let word = if va > vb { words.0 } else { words.1 };
                format!("the {} is {} than the {} .", a.name, word, b.name)
            }
        };
        out.push(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_comparison_pairs;

    #[test]
    fn objects_are_seeded_and_distinct() {
        let a = synthetic_objects(70, 1);
        assert_eq!(a, synthetic_objects(70, 1));
        assert_ne!(a, synthetic_objects(70, 2));
        let mut names: Vec<_> = a.iter().map(|o| o.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 70);
    }

    #[test]
    fn tables_feed_the_builder() {
        let objs = synthetic_objects(20, 3);
        let table = measurement_table(&objs, Category::Mass).unwrap();
        let parsed = crate::dataset::parse_measurements(&measurement_csv(&table)).unwrap();
        assert_eq!(parsed, table);
        let ds = build_comparison_pairs(&table, 1.0, Category::Mass.relation_pair().unwrap(), 0).unwrap();
        assert!(!ds.is_empty());
        assert!(measurement_table(&objs, Category::Color).is_err());
    }

    #[test]
    fn attribute_instances_have_correct_gold() {
        let objs = synthetic_objects(15, 4);
        let ds = attribute_dataset(&objs, Category::Material, 9).unwrap();
        let Items::Attribute(items) = &ds.items else { panic!() };
        for (o, it) in objs.iter().zip(items) {
            assert_eq!(it.options()[it.gold], o.material);
        }
    }

    #[test]
    fn corpus_statements_are_truthful() {
        let objs = synthetic_objects(10, 5);
        let lines = corpus_lines(&objs, 200, 6);
        assert_eq!(lines.len(), 200);
        for l in &lines {
            if let Some(rest) = l.strip_prefix("the ") {
                if let Some((a, tail)) = rest.split_once(" is heavier than the ") {
                    let b = tail.trim_end_matches(" .");
                    let m = |n: &str| objs.iter().find(|o| o.name == n).unwrap().mass_lbs;
                    assert!(m(a) > m(b));
                }
            }
        }
    }
}
