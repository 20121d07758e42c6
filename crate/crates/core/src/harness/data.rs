// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use crate::harness::config::{DataConfig, SeedConfig};
use crate::kb::{
    assign_fictional_names, build_template_pools, generate_bio_corpus, generate_dataset, load_knowledge_graph,
    parse_knowledge_graph, toy::BUNDLED_TOY_KB, DatasetSplit, IngestOptions, KnowledgeBase, NameInventory,
    TemplatePools, UnknownRelationPolicy,
};
use crate::lm::{build_vocab, text_sequences, training_sequences, Vocabulary};
use crate::{Error, Result};

/// Everything generated before training.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub kb: KnowledgeBase,
    pub templates: TemplatePools,
    pub dataset: DatasetSplit,
    pub bio: Vec<String>,
    pub vocab: Vocabulary,
}

pub const KB_FILE: &str = "kb.json";
pub const TEMPLATES_FILE: &str = "templates.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const BIO_FILE: &str = "bio.txt";
pub const VOCAB_FILE: &str = "vocab.json";

/// First `n` concepts and their triples, with triple ids renumbered densely.
pub fn subset_concepts(kb: &KnowledgeBase, n: usize) -> KnowledgeBase {
    if n == 0 || n >= kb.concepts.len() {
        return kb.clone();
    }
    let mut out = KnowledgeBase {
        concepts: kb.concepts[..n].to_vec(),
        excluded_count: kb.excluded_count,
        unknown_count: kb.unknown_count,
        duplicate_count: kb.duplicate_count,
        ..Default::default()
    };
    for t in kb.triples.iter().filter(|t| t.subject < n) {
        let mut t = t.clone();
        t.id = out.triples.len();
        out.triples.push(t);
    }
    out
}

pub fn load_kb(cfg: &DataConfig) -> Result<KnowledgeBase> {
    let opts = IngestOptions {
        unknown_relation: if cfg.strict_relations {
            UnknownRelationPolicy::Error
        } else {
            UnknownRelationPolicy::DropWithWarning
        },
    };
    let kb = if cfg.kb_path.is_empty() {
        parse_knowledge_graph(BUNDLED_TOY_KB, &opts)?
    } else {
        load_knowledge_graph(Path::new(&cfg.kb_path), &opts)?
    };
    Ok(subset_concepts(&kb, cfg.max_concepts))
}

/// Ingest, rename, split and render the dataset, the biography corpus and
/// the shared vocabulary.
pub fn prepare_data(cfg: &DataConfig, seeds: &SeedConfig, context_len: usize) -> Result<PreparedData> {
    let raw = load_kb(cfg)?;
    let mut kb = assign_fictional_names(&raw, seeds.names, &NameInventory::default())?;
    let templates = build_template_pools(&kb.relations(), cfg.templates_per_relation, cfg.test_template_fraction, seeds.data)?;
    let dataset = generate_dataset(&kb, &templates, cfg.resamples, cfg.test_concepts, seeds.data)?;
    kb.mark_test_concepts(&dataset.test_concepts);
    let bio = generate_bio_corpus(cfg.bio_people, seeds.data)?;

    let mut corpus: Vec<String> = dataset.train.iter().chain(&dataset.test).map(|s| s.text()).collect();
    corpus.extend(bio.iter().cloned());
    let vocab = build_vocab(&corpus)?;

    let longest = training_sequences(&dataset.train, &vocab)
        .iter()
        .chain(&training_sequences(&dataset.test, &vocab))
        .chain(&text_sequences(&bio, &vocab))
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    if longest > context_len {
        return Err(Error::Config(format!(
            "model.context_len {context_len} is shorter than the longest sequence ({longest} tokens)"
        )));
    }
    Ok(PreparedData {
        kb,
        templates,
        dataset,
        bio,
        vocab,
    })
}

impl PreparedData {
    /// Token sequences for stage-one training.
    pub fn train_sequences(&self) -> Vec<Vec<usize>> {
        training_sequences(&self.dataset.train, &self.vocab)
    }

    pub fn bio_sequences(&self) -> Vec<Vec<usize>> {
        text_sequences(&self.bio, &self.vocab)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        super::write_atomic(&dir.join(KB_FILE), serde_json::to_string_pretty(&self.kb)?.as_bytes())?;
        super::write_atomic(
            &dir.join(TEMPLATES_FILE),
            serde_json::to_string_pretty(&self.templates)?.as_bytes(),
        )?;
        super::write_atomic(&dir.join(DATASET_FILE), serde_json::to_string(&self.dataset)?.as_bytes())?;
        let mut bio = self.bio.join("\n");
        bio.push('\n');
        super::write_atomic(&dir.join(BIO_FILE), bio.as_bytes())?;
        super::write_atomic(&dir.join(VOCAB_FILE), serde_json::to_string(&self.vocab)?.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Ok(PreparedData {
            kb: serde_json::from_str(&read(KB_FILE)?)?,
            templates: serde_json::from_str(&read(TEMPLATES_FILE)?)?,
            dataset: serde_json::from_str(&read(DATASET_FILE)?)?,
            bio: read(BIO_FILE)?.lines().map(str::to_string).collect(),
            vocab: serde_json::from_str(&read(VOCAB_FILE)?)?,
        })
    }
}
