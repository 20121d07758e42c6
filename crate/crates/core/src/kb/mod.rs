// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fictional-concept knowledge base and dataset rendering.
//!
//! A knowledge base is ingested from a tab-separated triple file, every
//! relation is folded into one of five concept-centric categories (or
//! excluded), each subject concept receives a fictional pseudo-word name, and
//! the triples are rendered into prefix/target samples through disjoint train
//! and test template pools. A biography corpus that shares no concept names
//! serves as unrelated second-stage data.

mod bio;
mod dataset;
mod ingest;
mod names;
mod templates;
pub mod toy;

pub use bio::generate_bio_corpus;
pub use dataset::{
    generate_dataset, render_sample, select_test_concepts, tokenize_words, DatasetSplit,
    DatasetStats, Sample, SampleSplit,
};
pub use ingest::{load_knowledge_graph, parse_knowledge_graph, IngestOptions, UnknownRelationPolicy};
pub use names::{assign_fictional_names, NameInventory};
pub use templates::{build_template_pools, pattern_bank, Template, TemplatePool, TemplatePools, SLOT};

use serde::{Deserialize, Serialize};
use std::fmt;

/// High-level knowledge category of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnowledgeCategory {
    /// Hyponym and hypernym.
    HAH,
    /// Synonym and antonym.
    SAA,
    /// Meronym and holonym.
    MAH,
    /// Property and affordance.
    PAA,
    /// Spatial relation.
    SR,
    #[serde(rename = "EXCLUDED")]
    Excluded,
}

impl KnowledgeCategory {
    /// The five retained categories, in canonical order.
    pub const RETAINED: [KnowledgeCategory; 5] = [Self::HAH, Self::SAA, Self::MAH, Self::PAA, Self::SR];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HAH => "HAH",
            Self::SAA => "SAA",
            Self::MAH => "MAH",
            Self::PAA => "PAA",
            Self::SR => "SR",
            Self::Excluded => "EXCLUDED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "HAH" => Self::HAH,
            "SAA" => Self::SAA,
            "MAH" => Self::MAH,
            "PAA" => Self::PAA,
            "SR" => Self::SR,
            "EXCLUDED" => Self::Excluded,
            _ => return None,
        })
    }

    pub fn is_retained(self) -> bool {
        self != Self::Excluded
    }
}

impl fmt::Display for KnowledgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const RETAINED_RELATIONS: &[(&str, KnowledgeCategory)] = &[
    ("IsA", KnowledgeCategory::HAH),
    ("DefinedAs", KnowledgeCategory::HAH),
    ("FormOf", KnowledgeCategory::HAH),
    ("InstanceOf", KnowledgeCategory::HAH),
    ("Synonym", KnowledgeCategory::SAA),
    ("SimilarTo", KnowledgeCategory::SAA),
    ("Antonym", KnowledgeCategory::SAA),
    ("DistinctFrom", KnowledgeCategory::SAA),
    ("PartOf", KnowledgeCategory::MAH),
    ("HasA", KnowledgeCategory::MAH),
    ("MadeOf", KnowledgeCategory::MAH),
    ("HasProperty", KnowledgeCategory::PAA),
    ("UsedFor", KnowledgeCategory::PAA),
    ("CapableOf", KnowledgeCategory::PAA),
    ("ReceivesAction", KnowledgeCategory::PAA),
    ("AtLocation", KnowledgeCategory::SR),
    ("LocatedNear", KnowledgeCategory::SR),
];

/// Relations that are recognised but dropped: causality and events, desire,
/// lexical and etymological links, and noisy associations.
pub const EXCLUDED_RELATIONS: &[&str] = &[
    "Causes",
    "MotivatedByGoal",
    "HasPrerequisite",
    "HasSubevent",
    "HasFirstSubevent",
    "HasLastSubevent",
    "CreatedBy",
    "Desires",
    "CausesDesire",
    "DerivedFrom",
    "EtymologicallyDerivedFrom",
    "EtymologicallyRelatedTo",
    "RelatedTo",
    "HasContext",
    "ExternalURL",
    "SymbolOf",
];

/// A fine-grained relation name such as `IsA` or `CapableOf`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationType(pub String);

impl RelationType {
    pub fn new(name: impl Into<String>) -> Self {
        RelationType(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether the relation appears in the category table at all, either as
    /// retained or as explicitly excluded.
    pub fn is_known(&self) -> bool {
        RETAINED_RELATIONS.iter().any(|(r, _)| *r == self.0) || EXCLUDED_RELATIONS.contains(&self.0.as_str())
    }

    /// All retained relation names.
    pub fn retained() -> impl Iterator<Item = RelationType> {
        RETAINED_RELATIONS.iter().map(|(r, _)| RelationType::new(*r))
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Total mapping from relation to category; unknown relations are excluded.
pub fn map_relation_category(relation: &RelationType) -> KnowledgeCategory {
    RETAINED_RELATIONS
        .iter()
        .find(|(r, _)| *r == relation.0)
        .map(|(_, c)| *c)
        .unwrap_or(KnowledgeCategory::Excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concreteness {
    Concrete,
    Abstract,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptSplit {
    #[default]
    TrainOnly,
    TrainAndTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: usize,
    pub real_name: String,
    /// Empty until [`assign_fictional_names`] runs.
    pub fictional_name: String,
    pub concreteness: Option<Concreteness>,
    pub split: ConceptSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub id: usize,
    /// Concept id of the subject.
    pub subject: usize,
    pub relation: RelationType,
    pub object: String,
    pub category: KnowledgeCategory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub concepts: Vec<Concept>,
    pub triples: Vec<KnowledgeTriple>,
    /// Lines dropped because their relation maps to the excluded category.
    pub excluded_count: usize,
    /// Lines dropped because their relation is not in the table at all.
    pub unknown_count: usize,
    /// Lines dropped as exact duplicates of an earlier line.
    pub duplicate_count: usize,
}

impl KnowledgeBase {
    pub fn concept(&self, id: usize) -> &Concept {
        &self.concepts[id]
    }

    pub fn triples_of(&self, concept: usize) -> impl Iterator<Item = &KnowledgeTriple> {
        self.triples.iter().filter(move |t| t.subject == concept)
    }

    pub fn fictional_name(&self, concept: usize) -> &str {
        &self.concepts[concept].fictional_name
    }

    pub fn has_fictional_names(&self) -> bool {
        !self.concepts.is_empty() && self.concepts.iter().all(|c| !c.fictional_name.is_empty())
    }

    /// Distinct relations present among the triples, sorted.
    pub fn relations(&self) -> Vec<RelationType> {
        let mut rels: Vec<RelationType> = self.triples.iter().map(|t| t.relation.clone()).collect();
        rels.sort();
        rels.dedup();
        rels
    }

    pub fn mark_test_concepts(&mut self, ids: &[usize]) {
        for c in &mut self.concepts {
            c.split = ConceptSplit::TrainOnly;
        }
        for &id in ids {
            self.concepts[id].split = ConceptSplit::TrainAndTest;
        }
    }

    /// Ids of concepts currently marked as test concepts.
    pub fn test_concepts(&self) -> Vec<usize> {
        self.concepts
            .iter()
            .filter(|c| c.split == ConceptSplit::TrainAndTest)
            .map(|c| c.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookups() {
        assert_eq!(map_relation_category(&RelationType::new("IsA")), KnowledgeCategory::HAH);
        assert_eq!(map_relation_category(&RelationType::new("LocatedNear")), KnowledgeCategory::SR);
        assert_eq!(
            map_relation_category(&RelationType::new("EtymologicallyRelatedTo")),
            KnowledgeCategory::Excluded
        );
        assert_eq!(map_relation_category(&RelationType::new("Frobnicates")), KnowledgeCategory::Excluded);
    }

    #[test]
    fn five_retained_categories_cover_seventeen_relations() {
        let mut cats: Vec<_> = RelationType::retained().map(|r| map_relation_category(&r)).collect();
        assert_eq!(cats.len(), 17);
        cats.sort();
        cats.dedup();
        assert_eq!(cats, KnowledgeCategory::RETAINED.to_vec());
        for r in EXCLUDED_RELATIONS {
            let r = RelationType::new(*r);
            assert!(r.is_known());
            assert_eq!(map_relation_category(&r), KnowledgeCategory::Excluded);
        }
    }

    #[test]
    fn category_roundtrips_through_str() {
        for c in KnowledgeCategory::RETAINED {
            assert_eq!(KnowledgeCategory::parse(c.as_str()), Some(c));
        }
    }
}
