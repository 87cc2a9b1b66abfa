//! Lower-cased word-level tokenizer with an unknown-word fallback.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const MASK_ID: u32 = 3;

pub const PAD_TOKEN: &str = "[pad]";
pub const UNK_TOKEN: &str = "[unk]";
pub const BOS_TOKEN: &str = "[bos]";
pub const MASK_TOKEN: &str = "[mask]";

const RESERVED: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, MASK_TOKEN];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

/// Split text into lower-cased word pieces. Runs of alphanumerics (with
/// inner apostrophes and hyphens) form words, `[mask]` is kept whole, and
/// every other non-space character is its own token.
pub fn split_words(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mask: Vec<char> = MASK_TOKEN.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if chars[i..].starts_with(&mask) {
            out.push(MASK_TOKEN.to_string());
            i += mask.len();
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric()
                    || ((chars[i] == '\'' || chars[i] == '-') && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())))
            {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

impl Tokenizer {
    /// Build from an explicit word list. Reserved tokens are prepended and
    /// must not appear in `words`.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(words.into_iter().map(Into::into));
        Self::from_full_vocab(all)
    }

    /// Build from a complete vocabulary whose first four entries are the
    /// reserved tokens (checkpoint form).
    pub fn from_full_vocab(words: Vec<String>) -> Result<Self> {
        if words.len() < RESERVED.len() || words[..RESERVED.len()] != RESERVED {
            return Err(Error::validation("vocab", "reserved tokens missing or misplaced"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::validation("vocab", format!("duplicate word {w:?}")));
            }
        }
        Ok(Tokenizer { words, index })
    }

    /// Vocabulary from corpus lines ordered by descending frequency, then
    /// lexicographically. `extra` words are always included.
    pub fn from_corpus<S: AsRef<str>>(lines: &[S], extra: &[&str], max_words: Option<usize>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for line in lines {
            for w in split_words(line.as_ref()) {
                if !RESERVED.contains(&w.as_str()) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut words: Vec<String> = ranked.into_iter().map(|(w, _)| w).collect();
        if let Some(max) = max_words {
            words.truncate(max);
        }
        for e in extra {
            let e = e.to_lowercase();
            if !words.contains(&e) && !RESERVED.contains(&e.as_str()) {
                words.push(e);
            }
        }
        Self::from_words(words).expect("corpus vocabulary is duplicate-free")
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Token ids for `text`, without a begin marker.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.id(w).unwrap_or(UNK_ID)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.word(i).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_mask() {
        assert_eq!(
            split_words("Is the ice colder than the water? [MASK]!"),
            ["is", "the", "ice", "colder", "than", "the", "water", "?", "[mask]", "!"]
        );
        assert_eq!(split_words("head's well-known"), ["head's", "well-known"]);
        assert_eq!(split_words("a/(an) x."), ["a", "/", "(", "an", ")", "x", "."]);
    }

    #[test]
    fn reserved_ids_and_round_trip() {
        let tok = Tokenizer::from_corpus(&["the coin is small .", "the table is large ."], &["yes", "no"], None);
        assert_eq!(tok.id(PAD_TOKEN), Some(PAD_ID));
        assert_eq!(tok.id(UNK_TOKEN), Some(UNK_ID));
        assert_eq!(tok.id(BOS_TOKEN), Some(BOS_ID));
        assert_eq!(tok.id(MASK_TOKEN), Some(MASK_ID));
        // Ties in frequency are broken lexicographically: ".", "is", "the".
        assert_eq!(tok.id("."), Some(4));
        assert_eq!(tok.id("the"), Some(6));
        assert!(tok.id("yes").is_some());

        let text = "the coin is large .";
        let ids = tok.encode(text);
        assert_eq!(tok.decode(&ids), text);
        assert_eq!(tok.encode("the zebra"), vec![6, UNK_ID]);
        assert_eq!(tok.encode("[MASK] coin")[0], MASK_ID);
    }

    #[test]
    fn vocab_validation() {
        assert!(Tokenizer::from_full_vocab(vec!["a".into()]).is_err());
        assert!(Tokenizer::from_words(["x", "x"]).is_err());
        assert!(Tokenizer::from_words(["[unk]"]).is_err());
    }
}
