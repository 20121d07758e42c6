// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kb::KnowledgeBase;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    High,
    Moderate,
    Weak,
}

impl GroupKind {
    pub const ALL: [GroupKind; 3] = [GroupKind::High, GroupKind::Moderate, GroupKind::Weak];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::High => "high",
            GroupKind::Moderate => "moderate",
            GroupKind::Weak => "weak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        GroupKind::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatednessGroups {
    pub target: usize,
    pub high: Vec<usize>,
    pub moderate: Vec<usize>,
    pub weak: Vec<usize>,
}

impl RelatednessGroups {
    pub fn group(&self, kind: GroupKind) -> &[usize] {
        match kind {
            GroupKind::High => &self.high,
            GroupKind::Moderate => &self.moderate,
            GroupKind::Weak => &self.weak,
        }
    }
}

/// Where concept feature vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Relatedness {
    /// Indicator vectors over the (relation, object) pairs of each concept.
    Features,
    /// Dense vectors per concept id, e.g. from an external embedder.
    External(BTreeMap<usize, Vec<f64>>),
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Set of (relation, object) features of every concept, indexed by id.
pub fn concept_features(kb: &KnowledgeBase) -> Vec<BTreeSet<(String, String)>> {
    let mut f = vec![BTreeSet::new(); kb.concepts.len()];
    for t in &kb.triples {
        f[t.subject].insert((t.relation.0.clone(), t.object.clone()));
    }
    f
}

/// Cosine of two indicator vectors given as sets.
pub fn set_cosine<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    a.intersection(b).count() as f64 / ((a.len() * b.len()) as f64).sqrt()
}

/// Reads `concept_id,v1,v2,...` rows without a header.
pub fn load_concept_vectors(path: &Path) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut out = BTreeMap::new();
    let mut dim = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let id: usize = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| parse_err("first field must be a concept id".into()))?;
        let v: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("bad vector component: {e}")))?;
        if *dim.get_or_insert(v.len()) != v.len() {
            return Err(parse_err(format!("vector has {} components, expected {}", v.len(), dim.unwrap_or(0))));
        }
        out.insert(id, v);
    }
    Ok(out)
}

/// All other concepts by similarity to `target`, most similar first; ties
/// by ascending id.
pub fn similarity_ranking(kb: &KnowledgeBase, target: usize, method: &Relatedness) -> Result<Vec<(usize, f64)>> {
    let sims: Vec<(usize, f64)> = match method {
        Relatedness::Features => {
            let f = concept_features(kb);
            (0..kb.concepts.len())
                .filter(|&c| c != target)
                .map(|c| (c, set_cosine(&f[target], &f[c])))
                .collect()
        }
        Relatedness::External(vecs) => {
            let get = |c: usize| {
                vecs.get(&c)
                    .ok_or_else(|| Error::invalid(format!("no external vector for concept {c}")))
            };
            let t = get(target)?;
            (0..kb.concepts.len())
                .filter(|&c| c != target)
                .map(|c| Ok((c, cosine(t, get(c)?))))
                .collect::<Result<_>>()?
        }
    };
    let mut sims = sims;
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(sims)
}

/// Top-`k`, bottom-`k` and `k` around the median rank of the similarity
/// ranking, for every target.
pub fn relatedness_groups(
    kb: &KnowledgeBase,
    k: usize,
    targets: &[usize],
    method: &Relatedness,
) -> Result<Vec<RelatednessGroups>> {
    let n = kb.concepts.len();
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if n < 3 * k + 1 {
        return Err(Error::invalid(format!("K = {k} needs at least {} concepts, knowledge base has {n}", 3 * k + 1)));
    }
    targets
        .iter()
        .map(|&target| {
            if target >= n {
                return Err(Error::invalid(format!("target concept {target} does not exist")));
            }
            let ranked: Vec<usize> = similarity_ranking(kb, target, method)?.into_iter().map(|(c, _)| c).collect();
            let len = ranked.len();
            let median = (len - 1) / 2;
            let start = median.saturating_sub((k - 1) / 2).clamp(k, len - 2 * k);
            Ok(RelatednessGroups {
                target,
                high: ranked[..k].to_vec(),
                moderate: ranked[start..start + k].to_vec(),
                weak: ranked[len - k..].to_vec(),
            })
        })
        .collect()
}
