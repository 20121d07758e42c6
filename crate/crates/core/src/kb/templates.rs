// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::RelationType;
use crate::{rng, Error, Result};

/// Slot marker replaced by the subject's fictional name.
pub const SLOT: &str = "{concept}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplatePool {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: usize,
    pub relation: RelationType,
    pub pattern: String,
    pub pool: TemplatePool,
}

impl Template {
    pub fn new(id: usize, relation: RelationType, pattern: impl Into<String>, pool: TemplatePool) -> Result<Self> {
        let pattern = pattern.into();
        if pattern.matches(SLOT).count() != 1 {
            return Err(Error::invalid(format!(
                "template `{pattern}` must contain exactly one {SLOT} slot"
            )));
        }
        Ok(Template {
            id,
            relation,
            pattern,
            pool,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationPools {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint train/test template pools per relation. Pools hold indices into
/// `templates`, and a template's index equals its id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplatePools {
    pub templates: Vec<Template>,
    pub by_relation: BTreeMap<RelationType, RelationPools>,
}

impl TemplatePools {
    pub fn get(&self, id: usize) -> &Template {
        &self.templates[id]
    }

    pub fn train_pool(&self, rel: &RelationType) -> Option<&[usize]> {
        self.by_relation.get(rel).map(|p| p.train.as_slice())
    }

    pub fn test_pool(&self, rel: &RelationType) -> Option<&[usize]> {
        self.by_relation.get(rel).map(|p| p.test.as_slice())
    }
}

const FRAMES: &[&str] = &[
    "{s}",
    "in general , {s}",
    "it is well known that {s}",
    "most people agree that {s}",
    "as a rule , {s}",
    "we learned today that {s}",
    "according to the experts , {s}",
    "everyone knows that {s}",
    "the old book says that {s}",
    "in fact , {s}",
];

fn relation_phrases(relation: &str) -> Option<&'static [&'static str]> {
    Some(match relation {
        "IsA" => &["is a", "is a kind of", "is a type of", "is one sort of", "belongs to the class of", "counts as a"],
        "DefinedAs" => &["is defined as", "means", "can be described as", "is best defined as", "is understood as", "refers to"],
        "FormOf" => &["is a form of", "is a variant of", "is another form of", "is a version of", "is derived in form from", "takes the form of"],
        "InstanceOf" => &["is an instance of", "is an example of", "is one example of", "is a case of", "is a specimen of", "stands as an instance of"],
        "Synonym" => &["means the same as", "is a synonym of", "is another word for", "is equivalent to", "is just like saying", "can be called"],
        "SimilarTo" => &["is similar to", "resembles", "is much like", "looks like", "is comparable to", "is akin to"],
        "Antonym" => &["is the opposite of", "is the antonym of", "contrasts with", "is the reverse of", "runs counter to", "is opposed to"],
        "DistinctFrom" => &["is distinct from", "is different from", "is not the same as", "differs from", "is unlike", "should not be confused with"],
        "PartOf" => &["is part of", "is a part of", "belongs to", "is a component of", "is found inside", "is one piece of"],
        "HasA" => &["has", "has a", "possesses", "comes with", "is equipped with", "contains"],
        "MadeOf" => &["is made of", "is made from", "consists of", "is built from", "is crafted from", "is composed of"],
        "HasProperty" => &["is", "is often", "is usually", "tends to be", "can be described as being", "is known for being"],
        "UsedFor" => &["is used for", "is useful for", "serves for", "is meant for", "is handy for", "is employed for"],
        "CapableOf" => &["can", "has the ability to", "is able to", "knows how to", "is capable enough to", "is known to"],
        "ReceivesAction" => &["can be", "is often", "is usually", "is typically", "gets", "may be"],
        "AtLocation" => &["is found in", "is located in", "lives in", "can be seen in", "is kept in", "is usually found at"],
        "LocatedNear" => &["is located near", "is found near", "sits close to", "is next to", "is near", "stands beside"],
        _ => return None,
    })
}

/// The built-in pattern bank for a retained relation: every framing sentence
/// combined with every relation phrase (60 distinct patterns per relation).
pub fn pattern_bank(relation: &RelationType) -> Option<Vec<String>> {
    let phrases = relation_phrases(relation.as_str())?;
    let mut out = Vec::with_capacity(FRAMES.len() * phrases.len());
    for frame in FRAMES {
        for phrase in phrases {
            out.push(frame.replace("{s}", &format!("{SLOT} {phrase}")));
        }
    }
    Some(out)
}

/// Splits `per_relation` bank patterns per relation into
/// `ceil(per_relation * (1 - test_fraction))` train and the rest test.
pub fn build_template_pools(
    relations: &[RelationType],
    per_relation: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<TemplatePools> {
    build_template_pools_with(relations, per_relation, test_fraction, seed, pattern_bank)
}

pub(crate) fn build_template_pools_with(
    relations: &[RelationType],
    per_relation: usize,
    test_fraction: f64,
    seed: u64,
    bank: impl Fn(&RelationType) -> Option<Vec<String>>,
) -> Result<TemplatePools> {
    if per_relation < 2 {
        return Err(Error::invalid(format!("per_relation must be at least 2, got {per_relation}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n_train = ((per_relation as f64) * (1.0 - test_fraction) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= per_relation {
        return Err(Error::invalid(format!(
            "per_relation={per_relation} with test_fraction={test_fraction} leaves an empty pool"
        )));
    }

    let mut rels: Vec<RelationType> = relations.to_vec();
    rels.sort();
    rels.dedup();

    let mut pools = TemplatePools::default();
    for rel in rels {
        let mut patterns =
            bank(&rel).ok_or_else(|| Error::invalid(format!("no template bank for relation {rel}")))?;
        patterns.dedup();
        if patterns.len() < per_relation {
            return Err(Error::invalid(format!(
                "relation {rel} has {} patterns, {per_relation} requested",
                patterns.len()
            )));
        }
        let mut rng = rng::stream(seed, &format!("templates/{rel}"));
        patterns.shuffle(&mut rng);
        patterns.truncate(per_relation);

        let mut entry = RelationPools::default();
        for (i, pattern) in patterns.into_iter().enumerate() {
            let pool = if i < n_train { TemplatePool::Train } else { TemplatePool::Test };
            let id = pools.templates.len();
            pools.templates.push(Template::new(id, rel.clone(), pattern, pool)?);
            match pool {
                TemplatePool::Train => entry.train.push(id),
                TemplatePool::Test => entry.test.push(id),
            }
        }
        pools.by_relation.insert(rel, entry);
    }
    Ok(pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn rels() -> Vec<RelationType> {
        RelationType::retained().collect()
    }

    #[test]
    fn bank_has_at_least_fifty_distinct_patterns_per_relation() {
        for r in rels() {
            let bank = pattern_bank(&r).unwrap();
            let distinct: HashSet<_> = bank.iter().collect();
            assert!(distinct.len() >= 50, "{r}: {}", distinct.len());
            assert!(bank.iter().all(|p| p.matches(SLOT).count() == 1));
        }
    }

    #[test]
    fn default_split_is_forty_ten() {
        let pools = build_template_pools(&rels(), 50, 0.2, 3).unwrap();
        for (rel, p) in &pools.by_relation {
            assert_eq!((p.train.len(), p.test.len()), (40, 10), "{rel}");
            let train: HashSet<&str> = p.train.iter().map(|&i| pools.get(i).pattern.as_str()).collect();
            assert!(p.test.iter().all(|&i| !train.contains(pools.get(i).pattern.as_str())));
        }
    }

    #[test]
    fn boundary_two_patterns() {
        let pools = build_template_pools(&[RelationType::new("IsA")], 2, 0.5, 0).unwrap();
        let p = &pools.by_relation[&RelationType::new("IsA")];
        assert_eq!((p.train.len(), p.test.len()), (1, 1));
    }

    #[test]
    fn too_small_or_bad_fraction_is_rejected() {
        let r = [RelationType::new("IsA")];
        assert!(build_template_pools(&r, 1, 0.5, 0).is_err());
        assert!(build_template_pools(&r, 10, 0.0, 0).is_err());
        assert!(build_template_pools(&r, 10, 1.0, 0).is_err());
        assert!(build_template_pools(&r, 2, 0.9, 0).is_ok());
        assert!(build_template_pools(&r, 61, 0.2, 0).is_err());
    }

    #[test]
    fn deterministic_by_seed() {
        let a = build_template_pools(&rels(), 50, 0.2, 11).unwrap();
        let b = build_template_pools(&rels(), 50, 0.2, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slotless_pattern_rejected() {
        let bank = |_: &RelationType| Some(vec!["no slot here".to_string(), "{concept} x".to_string()]);
        assert!(build_template_pools_with(&[RelationType::new("IsA")], 2, 0.5, 0, bank).is_err());
    }
}
