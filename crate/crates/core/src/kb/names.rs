// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bio, tokenize_words, KnowledgeBase};
use crate::{rng, Error, Result};

/// Syllable inventory for the pseudo-word composer.
///
/// A name is `min_syllables..=max_syllables` consonant-vowel syllables with an
/// optional closing coda. On collision, up to `max_suffix_syllables` extra
/// syllables are appended before the name is redrawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameInventory {
    pub consonants: Vec<String>,
    pub vowels: Vec<String>,
    pub codas: Vec<String>,
    pub min_syllables: usize,
    pub max_syllables: usize,
    pub max_suffix_syllables: usize,
    pub max_attempts: usize,
}

impl Default for NameInventory {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        NameInventory {
            consonants: s(&["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th", "sh"]),
            vowels: s(&["a", "e", "i", "o", "u", "ae", "ou"]),
            codas: s(&["", "", "n", "r", "l", "s", "x"]),
            min_syllables: 2,
            max_syllables: 4,
            max_suffix_syllables: 2,
            max_attempts: 64,
        }
    }
}

impl NameInventory {
    fn syllable<R: Rng>(&self, rng: &mut R) -> String {
        let c = self.consonants.choose(rng).expect("non-empty consonants");
        let v = self.vowels.choose(rng).expect("non-empty vowels");
        format!("{c}{v}")
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> String {
        let n = rng.random_range(self.min_syllables..=self.max_syllables);
        let mut name: String = (0..n).map(|_| self.syllable(rng)).collect();
        if let Some(coda) = self.codas.choose(rng) {
            name.push_str(coda);
        }
        name
    }

    fn validate(&self) -> Result<()> {
        if self.consonants.is_empty() || self.vowels.is_empty() {
            return Err(Error::invalid("name inventory needs at least one consonant and one vowel"));
        }
        if self.min_syllables == 0 || self.min_syllables > self.max_syllables {
            return Err(Error::invalid("name inventory syllable range is empty"));
        }
        Ok(())
    }
}

/// Assigns every concept a unique fictional name and rewrites object-side
/// mentions of renamed concepts.
///
/// Names never collide with each other, with any word of the source graph, or
/// with the biography corpus vocabulary. The assignment is a pure function of
/// the knowledge base and `seed`.
pub fn assign_fictional_names(kb: &KnowledgeBase, seed: u64, inventory: &NameInventory) -> Result<KnowledgeBase> {
    inventory.validate()?;
    let mut reserved: HashSet<String> = HashSet::new();
    for c in &kb.concepts {
        reserved.extend(tokenize_words(&c.real_name).into_iter().map(|w| w.to_lowercase()));
    }
    for t in &kb.triples {
        reserved.extend(tokenize_words(&t.object).into_iter().map(|w| w.to_lowercase()));
        reserved.insert(t.relation.0.to_lowercase());
    }
    reserved.extend(bio::reserved_words());

    let mut rng = rng::stream(seed, "fictional-names");
    let mut taken: HashSet<String> = HashSet::new();
    let mut out = kb.clone();
    for (assigned, concept) in out.concepts.iter_mut().enumerate() {
        let name = draw_unique(inventory, &mut rng, &reserved, &taken).ok_or(Error::NameSpaceExhausted {
            assigned,
            needed: kb.concepts.len(),
        })?;
        taken.insert(name.clone());
        concept.fictional_name = name;
    }

    // Object phrases: replace whole-word runs matching any concept's real name.
    let mut by_first: HashMap<String, Vec<(Vec<String>, String)>> = HashMap::new();
    for c in &out.concepts {
        let words: Vec<String> = c.real_name.split_whitespace().map(str::to_string).collect();
        if let Some(first) = words.first() {
            by_first.entry(first.clone()).or_default().push((words, c.fictional_name.clone()));
        }
    }
    for entries in by_first.values_mut() {
        // Longest match first.
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    }
    for t in &mut out.triples {
        t.object = rewrite_phrase(&t.object, &by_first);
    }
    Ok(out)
}

fn draw_unique<R: Rng>(
    inv: &NameInventory,
    rng: &mut R,
    reserved: &HashSet<String>,
    taken: &HashSet<String>,
) -> Option<String> {
    let free = |n: &str| !taken.contains(n) && !reserved.contains(n);
    for _ in 0..inv.max_attempts {
        let mut name = inv.draw(rng);
        if free(&name) {
            return Some(name);
        }
        for _ in 0..inv.max_suffix_syllables {
            name.push_str(&inv.syllable(rng));
            if free(&name) {
                return Some(name);
            }
        }
    }
    None
}

fn rewrite_phrase(phrase: &str, by_first: &HashMap<String, Vec<(Vec<String>, String)>>) -> String {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let hit = by_first.get(words[i]).and_then(|cands| {
            cands
                .iter()
                .find(|(ws, _)| i + ws.len() <= words.len() && ws.iter().zip(&words[i..]).all(|(a, b)| a == b))
        });
        match hit {
            Some((ws, fict)) => {
                out.push(fict.clone());
                i += ws.len();
            }
            None => {
                out.push(words[i].to_string());
                i += 1;
            }
        }
    }
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{parse_knowledge_graph, IngestOptions};

    fn kb(text: &str) -> KnowledgeBase {
        parse_knowledge_graph(text, &IngestOptions::default()).unwrap()
    }

    #[test]
    fn deterministic_by_seed() {
        let base = kb("dog\tIsA\tanimal\ncat\tSimilarTo\tdog\nhammer\tUsedFor\tnails\n");
        let a = assign_fictional_names(&base, 7, &NameInventory::default()).unwrap();
        let b = assign_fictional_names(&base, 7, &NameInventory::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = assign_fictional_names(&base, 8, &NameInventory::default()).unwrap();
        assert_ne!(a.concepts, c.concepts);
    }

    #[test]
    fn thousand_concepts_get_distinct_names() {
        let text: String = (0..1000).map(|i| format!("thing{i}\tIsA\tobject\n")).collect();
        let named = assign_fictional_names(&kb(&text), 1, &NameInventory::default()).unwrap();
        let names: HashSet<&str> = named.concepts.iter().map(|c| c.fictional_name.as_str()).collect();
        assert_eq!(names.len(), 1000);
        assert!(!names.contains("object"));
    }

    #[test]
    fn object_mentions_follow_the_subject_name() {
        let named = assign_fictional_names(
            &kb("dog\tIsA\tanimal\ncat\tSimilarTo\tdog\ncat\tDistinctFrom\tbig dog house\n"),
            3,
            &NameInventory::default(),
        )
        .unwrap();
        let dog = named.concepts.iter().find(|c| c.real_name == "dog").unwrap();
        assert_eq!(named.triples[1].object, dog.fictional_name);
        assert_eq!(named.triples[2].object, format!("big {} house", dog.fictional_name));
        assert_eq!(named.triples[0].object, "animal");
    }

    #[test]
    fn tiny_inventory_exhausts() {
        let inv = NameInventory {
            consonants: vec!["b".into()],
            vowels: vec!["a".into()],
            codas: vec![],
            min_syllables: 2,
            max_syllables: 2,
            max_suffix_syllables: 1,
            max_attempts: 8,
        };
        let text: String = (0..5).map(|i| format!("c{i}\tIsA\tx\n")).collect();
        assert!(matches!(
            assign_fictional_names(&kb(&text), 0, &inv),
            Err(Error::NameSpaceExhausted { assigned: 2, needed: 5 })
        ));
    }

    #[test]
    fn names_avoid_source_vocabulary() {
        // Every name the inventory can produce is reserved except one.
        let inv = NameInventory {
            consonants: vec!["b".into()],
            vowels: vec!["a".into(), "o".into()],
            codas: vec![],
            min_syllables: 2,
            max_syllables: 2,
            max_suffix_syllables: 0,
            max_attempts: 200,
        };
        let named = assign_fictional_names(&kb("x\tIsA\tbaba\nx\tHasA\tbabo\nx\tPartOf\tboba\n"), 0, &inv).unwrap();
        assert_eq!(named.concepts[0].fictional_name, "bobo");
    }
}
