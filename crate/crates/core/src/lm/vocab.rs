// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::kb::tokenize_words;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const UNK: usize = 2;
const SPECIALS: [&str; 3] = ["<pad>", "<bos>", "<unk>"];

/// Word-level vocabulary. Ids 0..3 are `<pad>`, `<bos>`, `<unk>`; the rest
/// are ordered by descending corpus frequency, then lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize_words(text).iter().map(|w| self.id(w).unwrap_or(UNK)).collect()
    }

    /// `<bos>` followed by the encoded text.
    pub fn encode_with_bos(&self, text: &str) -> Vec<usize> {
        let mut ids = vec![BOS];
        ids.extend(self.encode(text));
        ids
    }
}

pub fn build_vocab<S: AsRef<str>>(corpora: &[S]) -> Result<Vocabulary> {
    if corpora.is_empty() {
        return Err(Error::invalid("build_vocab needs at least one corpus"));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for text in corpora {
        for w in tokenize_words(text.as_ref()) {
            *freq.entry(w).or_default() += 1;
        }
    }
    for s in SPECIALS {
        freq.remove(s);
    }
    let mut words: Vec<(String, usize)> = freq.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens: Vec<String> = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(words.into_iter().map(|(w, _)| w))
        .collect();
    Ok(Vocabulary::from(tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn frequency_then_lexicographic() {
        let v = build_vocab(&["a b a"]).unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.id("a").unwrap() < v.id("b").unwrap());
        let v = build_vocab(&["zeta alpha"]).unwrap();
        assert!(v.id("alpha").unwrap() < v.id("zeta").unwrap());
    }

    #[test]
    fn disjoint_corpora_union() {
        let a = "red green blue red";
        let b = "one two three";
        let v = build_vocab(&[a, b]).unwrap();
        let uniq: HashSet<String> = tokenize_words(a).into_iter().chain(tokenize_words(b)).collect();
        assert_eq!(v.len(), uniq.len() + 3);
    }

    #[test]
    fn empty_element_contributes_nothing() {
        assert_eq!(build_vocab(&["x y", ""]).unwrap(), build_vocab(&["x y"]).unwrap());
        assert!(build_vocab::<&str>(&[]).is_err());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = build_vocab(&["hello world"]).unwrap();
        assert_eq!(v.encode_with_bos("hello mars"), vec![BOS, v.id("hello").unwrap(), UNK]);
    }

    #[test]
    fn serde_roundtrip() {
        let v = build_vocab(&["a b c a"]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&s).unwrap(), v);
    }
}
