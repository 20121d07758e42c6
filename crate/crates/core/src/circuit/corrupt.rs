// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeBase, Sample};
use crate::lm::{sample_tokens, Vocabulary};
use crate::{rng, Error, Result};

/// A clean prompt and its subject-swapped counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptPair {
    pub clean: Vec<usize>,
    pub corrupted: Vec<usize>,
    pub target: usize,
    /// Last prefix position, where the metric is read.
    pub metric_pos: usize,
}

impl CorruptPair {
    /// Builds a pair directly from token sequences. Both sequences must have
    /// the same length and `metric_pos` must lie inside them.
    pub fn new(clean: Vec<usize>, corrupted: Vec<usize>, target: usize, metric_pos: usize) -> Result<Self> {
        if clean.len() != corrupted.len() {
            return Err(Error::invalid("clean and corrupted sequences differ in length"));
        }
        if metric_pos >= clean.len() {
            return Err(Error::invalid("metric position is past the end of the prompt"));
        }
        Ok(CorruptPair {
            clean,
            corrupted,
            target,
            metric_pos,
        })
    }
}

/// Swaps the subject token of `sample` for the name of another concept from
/// the same split, drawn uniformly.
///
/// Only the prompt up to the metric position is kept, since later tokens
/// cannot affect the metric. Falls back to all concepts when the subject's
/// split has no other single-token name.
pub fn make_corrupted_pair(sample: &Sample, kb: &KnowledgeBase, vocab: &Vocabulary, seed: u64) -> Result<CorruptPair> {
    if kb.concepts.len() < 2 {
        return Err(Error::invalid("corruption needs at least two concepts"));
    }
    let triple = kb
        .triples
        .iter()
        .find(|t| t.id == sample.triple_id)
        .ok_or_else(|| Error::invalid(format!("sample refers to unknown triple {}", sample.triple_id)))?;
    let subject = kb.concept(triple.subject);
    let name = display_name(kb, triple.subject);
    let subject_tok = vocab
        .id(name)
        .ok_or_else(|| Error::invalid(format!("subject name `{name}` is not a single vocabulary token")))?;

    let (mut clean, metric_pos) = sample_tokens(sample, vocab)?;
    let target = clean[metric_pos + 1];
    clean.truncate(metric_pos + 1);
    let positions: Vec<usize> = (0..clean.len()).filter(|&i| clean[i] == subject_tok).collect();
    if positions.is_empty() {
        return Err(Error::invalid(format!("subject `{name}` does not occur in the prompt")));
    }

    let candidates = |same_split: bool| -> Vec<usize> {
        kb.concepts
            .iter()
            .filter(|c| c.id != subject.id && (!same_split || c.split == subject.split))
            .filter_map(|c| vocab.id(display_name(kb, c.id)))
            .filter(|&tok| tok != subject_tok)
            .collect()
    };
    let mut pool = candidates(true);
    if pool.is_empty() {
        pool = candidates(false);
    }
    if pool.is_empty() {
        return Err(Error::invalid("no other concept has a single-token name"));
    }
    let mut rng = rng::stream(seed, &format!("corrupt/{}/{}", sample.triple_id, sample.template_id));
    let replacement = pool[rng.random_range(0..pool.len())];
    let mut corrupted = clean.clone();
    for &i in &positions {
        corrupted[i] = replacement;
    }
    CorruptPair::new(clean, corrupted, target, metric_pos)
}

fn display_name(kb: &KnowledgeBase, concept: usize) -> &str {
    let c = kb.concept(concept);
    if c.fictional_name.is_empty() {
        &c.real_name
    } else {
        &c.fictional_name
    }
}
