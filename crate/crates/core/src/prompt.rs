//! Prompt templates, the relation lexicon, and rendering for each scoring
//! mode.
//!
//! Templates own their articles and punctuation; rendering is raw
//! placeholder substitution.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::concept::{Category, Relation};
use crate::dataset::{AttributeInstance, ComparisonTriplet};
use crate::error::{Error, Result};

pub const HEAD: &str = "[Head]";
pub const REL: &str = "[Rel]";
pub const TAIL: &str = "[Tail]";
pub const MASK: &str = "[MASK]";
pub const ATTRIBUTE: &str = "[Attribute]";
/// Answer words for the mask slot: "yes" confirms the assertion.
pub const MLM_CANDIDATES: [&str; 2] = ["yes", "no"];

/// Separator placed between few-shot demonstrations and the query.
pub const DEMO_SEPARATOR: &str = "\n";

/// Groups with fewer templates than this are rejected by default at
/// evaluation time.
pub const MIN_TEMPLATES_PER_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    Mlm,
    Causal,
    MatchingObject,
    MatchingAttribute,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Mlm => "mlm",
            PromptMode::Causal => "causal",
            PromptMode::MatchingObject => "matching-object",
            PromptMode::MatchingAttribute => "matching-attribute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskScope {
    All,
    Category(Category),
}

impl TaskScope {
    pub fn covers(self, category: Category) -> bool {
        match self {
            TaskScope::All => true,
            TaskScope::Category(c) => c == category,
        }
    }
}

impl fmt::Display for TaskScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskScope::All => f.write_str("all"),
            TaskScope::Category(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for TaskScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            Ok(TaskScope::All)
        } else {
            s.parse().map(TaskScope::Category)
        }
    }
}

impl Serialize for TaskScope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskScope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: TaskScope,
    pub mode: PromptMode,
    #[serde(rename = "template")]
    pub body: String,
}

impl PromptTemplate {
    pub fn new(task: TaskScope, mode: PromptMode, body: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            task,
            mode,
            body: body.into(),
        };
        t.validate()?;
        Ok(t)
    }

    fn count(&self, placeholder: &str) -> usize {
        self.body.matches(placeholder).count()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation("template", format!("{msg}: {:?}", self.body)));
        match self.mode {
            PromptMode::Mlm if self.count(MASK) != 1 => fail(format!("mlm template needs exactly one {MASK}")),
            PromptMode::Causal if self.count(MASK) != 0 => fail(format!("causal template must not contain {MASK}")),
            PromptMode::MatchingObject if self.count(HEAD) != 1 || self.count(ATTRIBUTE) != 0 => fail(format!(
                "matching-object template needs exactly one {HEAD} and no {ATTRIBUTE}"
            )),
            PromptMode::MatchingAttribute if self.count(ATTRIBUTE) != 1 || self.count(HEAD) != 0 => fail(format!(
                "matching-attribute template needs exactly one {ATTRIBUTE} and no {HEAD}"
            )),
            PromptMode::MatchingObject | PromptMode::MatchingAttribute if self.count(MASK) != 0 => {
                fail(format!("matching template must not contain {MASK}"))
            }
            _ => Ok(()),
        }
    }
}

/// Values available for substitution. Unset slots are render errors when a
/// template references them.
#[derive(Debug, Clone, Copy, Default)]
pub struct Slots<'a> {
    pub head: Option<&'a str>,
    pub rel: Option<&'a str>,
    pub tail: Option<&'a str>,
    pub attribute: Option<&'a str>,
}

/// Substitute placeholders in `body`. `[MASK]` is left in place.
pub fn fill(body: &str, slots: &Slots<'_>) -> Result<String> {
    let mut out = body.to_string();
    for (ph, value) in [
        (HEAD, slots.head),
        (REL, slots.rel),
        (TAIL, slots.tail),
        (ATTRIBUTE, slots.attribute),
    ] {
        if out.contains(ph) {
            let value = value.ok_or_else(|| Error::Render(format!("placeholder {ph} has no value in {body:?}")))?;
            out = out.replace(ph, value);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub antonym: Relation,
    /// Adjective naming the property the relation says the head has more of.
    pub attribute_word: String,
}

/// Relation surface forms, antonyms and attribute adjectives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationLexicon {
    entries: BTreeMap<Relation, LexiconEntry>,
}

impl Default for RelationLexicon {
    fn default() -> Self {
        use Relation::*;
        let rows = [
            (HeavierThan, "heavier", LighterThan, "heavy"),
            (LighterThan, "lighter", HeavierThan, "light"),
            (HotterThan, "hotter", ColderThan, "hot"),
            (ColderThan, "colder", HotterThan, "cold"),
            (HarderThan, "harder", SofterThan, "hard"),
            (SofterThan, "softer", HarderThan, "soft"),
            (LargerThan, "larger", SmallerThan, "large"),
            (SmallerThan, "smaller", LargerThan, "small"),
            (TallerThan, "taller", ShorterThan, "tall"),
            (ShorterThan, "shorter", TallerThan, "short"),
        ];
        let entries = rows
            .into_iter()
            .map(|(r, surface, antonym, word)| {
                (
                    r,
                    LexiconEntry {
                        surface: surface.into(),
                        antonym,
                        attribute_word: word.into(),
                    },
                )
            })
            .collect();
        RelationLexicon { entries }
    }
}

impl RelationLexicon {
    pub fn new(entries: BTreeMap<Relation, LexiconEntry>) -> Result<Self> {
        let lex = RelationLexicon { entries };
        lex.validate()?;
        Ok(lex)
    }

    /// Antonym must be an involution over the lexicon.
    pub fn validate(&self) -> Result<()> {
        for (r, e) in &self.entries {
            let back = self.entries.get(&e.antonym).map(|e| e.antonym);
            if back != Some(*r) {
                return Err(Error::validation(
                    "antonym",
                    format!("antonym of {} is {}, whose antonym is {back:?}", r, e.antonym),
                ));
            }
        }
        Ok(())
    }

    pub fn entry(&self, r: Relation) -> Result<&LexiconEntry> {
        self.entries
            .get(&r)
            .ok_or_else(|| Error::Render(format!("relation {r} missing from lexicon")))
    }

    pub fn surface(&self, r: Relation) -> Result<&str> {
        self.entry(r).map(|e| e.surface.as_str())
    }

    pub fn antonym(&self, r: Relation) -> Result<Relation> {
        self.entry(r).map(|e| e.antonym)
    }

    pub fn attribute_word(&self, r: Relation) -> Result<&str> {
        self.entry(r).map(|e| e.attribute_word.as_str())
    }

    /// The relation whose attribute adjective is `word`.
    pub fn relation_for_word(&self, word: &str) -> Option<Relation> {
        self.entries
            .iter()
            .find(|(_, e)| e.attribute_word == word)
            .map(|(r, _)| *r)
    }

    /// Attribute words for a comparison category, greater relation first.
    pub fn words_for(&self, category: Category) -> Result<Vec<String>> {
        let (g, l) = category
            .relation_pair()
            .ok_or_else(|| Error::validation("category", format!("{category} has no relation words")))?;
        Ok(vec![
            self.attribute_word(g)?.to_string(),
            self.attribute_word(l)?.to_string(),
        ])
    }
}

fn check_mode(t: &PromptTemplate, mode: PromptMode) -> Result<()> {
    if t.mode != mode {
        return Err(Error::Render(format!(
            "expected a {} template, got {}",
            mode.as_str(),
            t.mode.as_str()
        )));
    }
    t.validate()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmPrompt {
    pub text: String,
    pub candidates: [&'static str; 2],
}

/// Cloze question for a comparison triplet; answer "yes" confirms it.
pub fn render_mlm(t: &PromptTemplate, x: &ComparisonTriplet, lex: &RelationLexicon) -> Result<MlmPrompt> {
    check_mode(t, PromptMode::Mlm)?;
    let text = fill(
        &t.body,
        &Slots {
            head: Some(&x.head),
            rel: Some(lex.surface(x.relation)?),
            tail: Some(&x.tail),
            attribute: None,
        },
    )?;
    Ok(MlmPrompt {
        text,
        candidates: MLM_CANDIDATES,
    })
}

/// Cloze question asking whether `x.head` has option `option` as its
/// attribute value.
pub fn render_mlm_option(t: &PromptTemplate, x: &AttributeInstance, option: usize) -> Result<MlmPrompt> {
    check_mode(t, PromptMode::Mlm)?;
    let tail = x
        .options()
        .get(option)
        .copied()
        .ok_or_else(|| Error::Render(format!("option index {option} out of range")))?;
    let text = fill(
        &t.body,
        &Slots {
            head: Some(&x.head),
            tail: Some(tail),
            ..Default::default()
        },
    )?;
    Ok(MlmPrompt {
        text,
        candidates: MLM_CANDIDATES,
    })
}

/// The stated assertion and its antonym rewrite.
pub fn render_causal_pair(
    t: &PromptTemplate,
    x: &ComparisonTriplet,
    lex: &RelationLexicon,
) -> Result<(String, String)> {
    check_mode(t, PromptMode::Causal)?;
    let render = |r: Relation| -> Result<String> {
        fill(
            &t.body,
            &Slots {
                head: Some(&x.head),
                rel: Some(lex.surface(r)?),
                tail: Some(&x.tail),
                attribute: None,
            },
        )
    };
    Ok((render(x.relation)?, render(lex.antonym(x.relation)?)?))
}

/// One assertion per attribute option.
pub fn render_causal_options(t: &PromptTemplate, x: &AttributeInstance) -> Result<(String, String)> {
    check_mode(t, PromptMode::Causal)?;
    let render = |tail: &str| {
        fill(
            &t.body,
            &Slots {
                head: Some(&x.head),
                tail: Some(tail),
                ..Default::default()
            },
        )
    };
    Ok((render(&x.option_a)?, render(&x.option_b)?))
}

/// Object descriptions for head and tail plus the attribute description.
pub fn render_matching(
    object_t: &PromptTemplate,
    attr_t: &PromptTemplate,
    x: &ComparisonTriplet,
    attribute_word: &str,
) -> Result<(String, String, String)> {
    check_mode(object_t, PromptMode::MatchingObject)?;
    check_mode(attr_t, PromptMode::MatchingAttribute)?;
    let object = |name: &str| {
        fill(
            &object_t.body,
            &Slots {
                head: Some(name),
                ..Default::default()
            },
        )
    };
    let attribute = fill(
        &attr_t.body,
        &Slots {
            attribute: Some(attribute_word),
            ..Default::default()
        },
    )?;
    Ok((object(&x.head)?, object(&x.tail)?, attribute))
}

/// Head object description plus one attribute description per option.
pub fn render_matching_options(
    object_t: &PromptTemplate,
    attr_t: &PromptTemplate,
    x: &AttributeInstance,
) -> Result<(String, String, String)> {
    check_mode(object_t, PromptMode::MatchingObject)?;
    check_mode(attr_t, PromptMode::MatchingAttribute)?;
    let object = fill(
        &object_t.body,
        &Slots {
            head: Some(&x.head),
            ..Default::default()
        },
    )?;
    let attribute = |word: &str| {
        fill(
            &attr_t.body,
            &Slots {
                attribute: Some(word),
                ..Default::default()
            },
        )
    };
    Ok((object, attribute(&x.option_a)?, attribute(&x.option_b)?))
}

/// Pick `k` demonstration indices from `0..pool`, never `exclude`.
pub fn sample_demos<R: Rng + ?Sized>(rng: &mut R, pool: usize, exclude: usize, k: usize) -> Result<Vec<usize>> {
    let available = pool.saturating_sub(usize::from(exclude < pool));
    if k > available {
        return Err(Error::validation(
            "few_shot_k",
            format!("k = {k} exceeds the {available} available demonstrations"),
        ));
    }
    Ok(index::sample(rng, available, k)
        .into_iter()
        .map(|i| if i >= exclude { i + 1 } else { i })
        .collect())
}

/// Demonstrations joined by [`DEMO_SEPARATOR`], followed by the query.
pub fn assemble_few_shot<S: AsRef<str>>(demos: &[S], query: &str) -> String {
    let mut out = String::new();
    for d in demos {
        out.push_str(d.as_ref());
        out.push_str(DEMO_SEPARATOR);
    }
    out.push_str(query);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBank {
    templates: Vec<PromptTemplate>,
}

const DEFAULT_BANK: &str = include_str!("../assets/prompt_bank.jsonl");

impl PromptBank {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self> {
        templates.iter().try_for_each(PromptTemplate::validate)?;
        Ok(PromptBank { templates })
    }

    /// The shipped bank with the masked, causal and matching templates for
    /// every category.
    pub fn default_bank() -> Self {
        Self::parse(DEFAULT_BANK, Path::new("<default bank>")).expect("shipped bank is valid")
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: PromptTemplate = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            t.validate().map_err(|e| match e {
                Error::Validation { field, message } => Error::Validation {
                    field,
                    message: format!("{message} (line {})", i + 1),
                },
                other => other,
            })?;
            templates.push(t);
        }
        Ok(PromptBank { templates })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Templates applicable to `category` in `mode`, in file order. The
    /// position in this list is the prompt id.
    pub fn group(&self, category: Category, mode: PromptMode) -> Vec<&PromptTemplate> {
        self.templates
            .iter()
            .filter(|t| t.mode == mode && t.task.covers(category))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.templates
            .iter()
            .map(|t| serde_json::to_string(t).expect("serializable") + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triplet(h: &str, r: Relation, t: &str) -> ComparisonTriplet {
        ComparisonTriplet {
            head: h.into(),
            relation: r,
            tail: t.into(),
            label: true,
        }
    }

    fn tpl(mode: PromptMode, body: &str) -> PromptTemplate {
        PromptTemplate::new(TaskScope::All, mode, body).unwrap()
    }

    #[test]
    fn mlm_comparison() {
        let t = tpl(PromptMode::Mlm, "is the [Head] [Rel] than the [Tail]? [MASK]!");
        let p = render_mlm(
            &t,
            &triplet("ice", Relation::ColderThan, "water"),
            &RelationLexicon::default(),
        )
        .unwrap();
        assert_eq!(p.text, "is the ice colder than the water? [MASK]!");
        assert_eq!(p.candidates, ["yes", "no"]);
    }

    #[test]
    fn mlm_requires_mask() {
        assert!(PromptTemplate::new(TaskScope::All, PromptMode::Mlm, "is [Head] [Rel]?").is_err());
        let sneaky = PromptTemplate {
            task: TaskScope::All,
            mode: PromptMode::Mlm,
            body: "is [Head] [Rel] than [Tail]?".into(),
        };
        assert!(render_mlm(
            &sneaky,
            &triplet("a", Relation::HeavierThan, "b"),
            &RelationLexicon::default()
        )
        .is_err());
    }

    #[test]
    fn mlm_attribute_option() {
        let t = tpl(PromptMode::Mlm, "is [Head] made of [Tail]? [MASK].");
        let x = AttributeInstance {
            head: "guitar".into(),
            option_a: "wood".into(),
            option_b: "glass".into(),
            gold: 0,
        };
        assert_eq!(
            render_mlm_option(&t, &x, 0).unwrap().text,
            "is guitar made of wood? [MASK]."
        );
        assert!(render_mlm_option(&t, &x, 2).is_err());
    }

    #[test]
    fn causal_pair_and_involution() {
        let lex = RelationLexicon::default();
        let t = tpl(PromptMode::Causal, "A [Head] is [Rel] than a [Tail]");
        let x = triplet("coin", Relation::SmallerThan, "table");
        let (s1, s2) = render_causal_pair(&t, &x, &lex).unwrap();
        assert_eq!(s1, "A coin is smaller than a table");
        assert_eq!(s2, "A coin is larger than a table");

        let flipped = triplet("coin", lex.antonym(x.relation).unwrap(), "table");
        let (back, _) = render_causal_pair(
            &t,
            &triplet("coin", lex.antonym(flipped.relation).unwrap(), "table"),
            &lex,
        )
        .unwrap();
        assert_eq!(back, s1);
        for r in Relation::ALL {
            assert_eq!(lex.antonym(lex.antonym(r).unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn causal_rejects_wrong_template_and_missing_relation() {
        let lex = RelationLexicon::new(BTreeMap::new()).unwrap();
        let t = tpl(PromptMode::Causal, "[Head] is [Rel] than [Tail].");
        assert!(render_causal_pair(&t, &triplet("a", Relation::TallerThan, "b"), &lex).is_err());
        let m = tpl(PromptMode::Mlm, "[Head] [Rel] [Tail]? [MASK]");
        assert!(render_causal_pair(
            &m,
            &triplet("a", Relation::TallerThan, "b"),
            &RelationLexicon::default()
        )
        .is_err());
    }

    #[test]
    fn matching_texts() {
        let o = tpl(PromptMode::MatchingObject, "a photo of a [Head]");
        let a = tpl(PromptMode::MatchingAttribute, "a photo of a [Attribute] object");
        let x = triplet("coin", Relation::SmallerThan, "table");
        let (o1, o2, at) = render_matching(&o, &a, &x, "small").unwrap();
        assert_eq!(o1, "a photo of a coin");
        assert_eq!(o2, "a photo of a table");
        assert_eq!(at, "a photo of a small object");

        let swapped = triplet("table", Relation::SmallerThan, "coin");
        let (s1, s2, sa) = render_matching(&o, &a, &swapped, "small").unwrap();
        assert_eq!((s1, s2, sa), (o2.clone(), o1.clone(), at));

        let (l1, l2, la) = render_matching(&o, &a, &x, "large").unwrap();
        assert_eq!((l1, l2), (o1, o2));
        assert!(la.contains("large"));
    }

    #[test]
    fn unresolvable_placeholder() {
        let err = fill(
            "[Head] and [Tail]",
            &Slots {
                head: Some("x"),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("[Tail]"));
    }

    #[test]
    fn few_shot_assembly() {
        assert_eq!(assemble_few_shot::<&str>(&[], "q"), "q");
        assert_eq!(assemble_few_shot(&["d1", "d2"], "query"), "d1\nd2\nquery");

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_demos(&mut rng, 10, 3, 16).is_err());
        assert!(sample_demos(&mut rng, 10, 3, 10).is_err());
        let picks = sample_demos(&mut rng, 10, 3, 9).unwrap();
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 4, 5, 6, 7, 8, 9]);

        let a = sample_demos(&mut ChaCha8Rng::seed_from_u64(5), 50, 7, 16).unwrap();
        let b = sample_demos(&mut ChaCha8Rng::seed_from_u64(5), 50, 7, 16).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains(&7));
    }

    #[test]
    fn default_bank_coverage() {
        let bank = PromptBank::default_bank();
        for cat in Category::ALL {
            for mode in [
                PromptMode::Mlm,
                PromptMode::Causal,
                PromptMode::MatchingObject,
                PromptMode::MatchingAttribute,
            ] {
                let n = bank.group(cat, mode).len();
                assert!(n >= MIN_TEMPLATES_PER_GROUP, "{cat}/{} has {n}", mode.as_str());
            }
        }
        assert_eq!(
            bank.group(Category::Mass, PromptMode::Mlm)[0].body,
            "is the [Head] [Rel] than the [Tail]? [MASK]!"
        );
        assert_eq!(bank.group(Category::Shape, PromptMode::Causal).len(), 4);
    }

    #[test]
    fn bank_parse_errors() {
        let bad = r#"{"task":"mass","mode":"mlm","template":"is [Head] [Rel] than [Tail]?"}"#;
        assert!(matches!(
            PromptBank::parse(bad, Path::new("b")),
            Err(Error::Validation { .. })
        ));
        assert!(PromptBank::parse("", Path::new("b")).unwrap().is_empty());
        assert!(matches!(
            PromptBank::parse("{nope", Path::new("b")),
            Err(Error::Parse { line: 1, .. })
        ));
        let bank = PromptBank::default_bank();
        assert_eq!(PromptBank::parse(&bank.to_jsonl(), Path::new("b")).unwrap(), bank);
    }

    #[test]
    fn lexicon_rejects_broken_involution() {
        let mut entries = BTreeMap::new();
        entries.insert(
            Relation::HeavierThan,
            LexiconEntry {
                surface: "heavier".into(),
                antonym: Relation::LighterThan,
                attribute_word: "heavy".into(),
            },
        );
        assert!(RelationLexicon::new(entries).is_err());
    }
}
