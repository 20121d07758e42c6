// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, KnowledgeCategory, KnowledgeTriple, Template, TemplatePool, TemplatePools, SLOT};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSplit {
    Train,
    Test,
}

/// One rendered prefix/target pair. `prefix + target` is the full sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub triple_id: usize,
    pub template_id: usize,
    pub prefix: String,
    pub target: String,
    pub split: SampleSplit,
    pub category: KnowledgeCategory,
}

impl Sample {
    pub fn text(&self) -> String {
        format!("{}{}", self.prefix, self.target)
    }
}

/// Counts in the layout of the usual dataset-statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub concepts_train: usize,
    pub concepts_test: usize,
    pub knowledges_train: usize,
    pub knowledges_test: usize,
    pub samples_train: usize,
    pub samples_test: usize,
    pub tokens_train: usize,
    pub tokens_test: usize,
    pub excluded_triples: usize,
    pub resamples_per_triple: usize,
    pub triples_per_category: BTreeMap<KnowledgeCategory, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Sorted ids of the concepts whose triples form the test set.
    pub test_concepts: Vec<usize>,
    pub stats: DatasetStats,
}

/// Word-level tokenization: whitespace-separated chunks, with every ASCII
/// punctuation character split off as its own token.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders `triple` through `template`. The target carries one leading space.
pub fn render_sample(kb: &KnowledgeBase, triple: &KnowledgeTriple, template: &Template) -> Result<Sample> {
    if template.relation != triple.relation {
        return Err(Error::RelationMismatch {
            template: template.id,
            template_relation: template.relation.0.clone(),
            triple_relation: triple.relation.0.clone(),
        });
    }
    let name = kb.fictional_name(triple.subject);
    if name.is_empty() {
        return Err(Error::invalid("concept has no fictional name; run assign_fictional_names first"));
    }
    Ok(Sample {
        triple_id: triple.id,
        template_id: template.id,
        prefix: normalize_ws(&template.pattern.replacen(SLOT, name, 1)),
        target: format!(" {}", normalize_ws(&triple.object)),
        split: match template.pool {
            TemplatePool::Train => SampleSplit::Train,
            TemplatePool::Test => SampleSplit::Test,
        },
        category: triple.category,
    })
}

/// Deterministically picks `count` concepts for the test split (sorted ids).
pub fn select_test_concepts(kb: &KnowledgeBase, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > kb.concepts.len() {
        return Err(Error::invalid(format!(
            "test_concept_count {count} exceeds the {} available concepts",
            kb.concepts.len()
        )));
    }
    let mut ids: Vec<usize> = (0..kb.concepts.len()).collect();
    ids.shuffle(&mut rng::stream(seed, "test-concepts"));
    ids.truncate(count);
    ids.sort_unstable();
    Ok(ids)
}

/// Renders the train split (every triple, `resamples_per_triple` templates
/// drawn with replacement from its relation's train pool) and the test split
/// (one test-pool template per triple of each selected test concept).
pub fn generate_dataset(
    kb: &KnowledgeBase,
    pools: &TemplatePools,
    resamples_per_triple: usize,
    test_concept_count: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if !kb.concepts.is_empty() && !kb.has_fictional_names() {
        return Err(Error::invalid("knowledge base has no fictional names"));
    }
    let test_concepts = select_test_concepts(kb, test_concept_count, seed)?;
    let mut is_test = vec![false; kb.concepts.len()];
    for &c in &test_concepts {
        is_test[c] = true;
    }

    let mut train_rng = rng::stream(seed, "train-templates");
    let mut test_rng = rng::stream(seed, "test-templates");
    let mut out = DatasetSplit {
        test_concepts,
        ..Default::default()
    };
    for triple in &kb.triples {
        let train_pool = pools
            .train_pool(&triple.relation)
            .ok_or_else(|| Error::invalid(format!("no templates for relation {}", triple.relation)))?;
        for _ in 0..resamples_per_triple {
            let &tid = train_pool.choose(&mut train_rng).expect("train pool is non-empty");
            out.train.push(render_sample(kb, triple, pools.get(tid))?);
        }
        if is_test[triple.subject] {
            let test_pool = pools.test_pool(&triple.relation).expect("pools exist per relation");
            let &tid = test_pool
                .choose(&mut test_rng)
                .ok_or_else(|| Error::invalid(format!("empty test pool for {}", triple.relation)))?;
            out.test.push(render_sample(kb, triple, pools.get(tid))?);
        }
    }

    let tokens = |s: &[Sample]| s.iter().map(|x| tokenize_words(&x.text()).len()).sum();
    let mut per_cat = BTreeMap::new();
    for t in &kb.triples {
        *per_cat.entry(t.category).or_insert(0) += 1;
    }
    out.stats = DatasetStats {
        concepts_train: kb.concepts.len(),
        concepts_test: out.test_concepts.len(),
        knowledges_train: kb.triples.len(),
        knowledges_test: out.test.len(),
        samples_train: out.train.len(),
        samples_test: out.test.len(),
        tokens_train: tokens(&out.train),
        tokens_test: tokens(&out.test),
        excluded_triples: kb.excluded_count,
        resamples_per_triple,
        triples_per_category: per_cat,
    };
    Ok(out)
}
