// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{spearman, CorrelationResult};
use crate::kb::{KnowledgeBase, Sample};
use crate::lm::{evaluate_knowledge, Parameters, Vocabulary};
use crate::metrics::MetricVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeKind {
    Learning,
    Forgetting,
}

impl DegreeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DegreeKind::Learning => "learning",
            DegreeKind::Forgetting => "forgetting",
        }
    }
}

/// Which per-triple quantity degrees are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// First target-token logit at the last prefix position.
    #[default]
    Logit,
    /// Mean log-probability of the whole target.
    LogProb,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Logit => "logit",
            Measure::LogProb => "logprob",
        }
    }
}

/// Learning is the rise of the measure, forgetting its fall.
pub fn knowledge_degree(before: f64, after: f64, kind: DegreeKind) -> f64 {
    match kind {
        DegreeKind::Learning => after - before,
        DegreeKind::Forgetting => before - after,
    }
}

pub fn concept_degree(per_triple: &[f64]) -> Result<f64> {
    if per_triple.is_empty() {
        return Err(Error::invalid("concept degree of an empty triple list"));
    }
    Ok(per_triple.iter().sum::<f64>() / per_triple.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleDegree {
    pub triple_id: usize,
    pub concept_id: usize,
    pub before: f64,
    pub after: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRecord {
    pub concept_id: usize,
    pub kind: DegreeKind,
    pub value: f64,
    pub per_triple: Vec<TripleDegree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub kind: DegreeKind,
    pub measure: Measure,
    /// One record per concept, by ascending id.
    pub records: Vec<DegreeRecord>,
}

impl DegreeReport {
    /// All per-triple degrees, the raw distribution behind the records.
    pub fn triple_values(&self) -> Vec<f64> {
        self.records.iter().flat_map(|r| r.per_triple.iter().map(|t| t.value)).collect()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.records.iter().map(|r| r.value).sum::<f64>() / self.records.len() as f64)
    }
}

/// Mean measure per triple, skipping samples whose target is unknown.
fn per_triple_measure(params: &Parameters, samples: &[Sample], vocab: &Vocabulary, measure: Measure) -> Result<BTreeMap<usize, f64>> {
    let records = evaluate_knowledge(params, samples, vocab)?;
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.flagged) {
        let v = match measure {
            Measure::Logit => r.logit,
            Measure::LogProb => r.logprob,
        };
        let e = acc.entry(r.triple_id).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

/// Per-triple and per-concept degrees between two checkpoints.
pub fn compute_degrees(
    before: &Parameters,
    after: &Parameters,
    samples: &[Sample],
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    kind: DegreeKind,
    measure: Measure,
) -> Result<DegreeReport> {
    if before.config != after.config {
        return Err(Error::invalid("checkpoints have different model configs"));
    }
    if before.config.vocab_size != vocab.len() {
        return Err(Error::invalid(format!(
            "model vocabulary size {} does not match vocabulary of {} tokens",
            before.config.vocab_size,
            vocab.len()
        )));
    }
    let a = per_triple_measure(before, samples, vocab, measure)?;
    let b = per_triple_measure(after, samples, vocab, measure)?;
    let subject: BTreeMap<usize, usize> = kb.triples.iter().map(|t| (t.id, t.subject)).collect();
    let mut by_concept: BTreeMap<usize, Vec<TripleDegree>> = BTreeMap::new();
    for (&triple_id, &x) in &a {
        let concept_id = *subject
            .get(&triple_id)
            .ok_or_else(|| Error::invalid(format!("sample refers to unknown triple {triple_id}")))?;
        let y = b[&triple_id];
        by_concept.entry(concept_id).or_default().push(TripleDegree {
            triple_id,
            concept_id,
            before: x,
            after: y,
            value: knowledge_degree(x, y, kind),
        });
    }
    let records = by_concept
        .into_iter()
        .map(|(concept_id, per_triple)| {
            let vals: Vec<f64> = per_triple.iter().map(|t| t.value).collect();
            Ok(DegreeRecord {
                concept_id,
                kind,
                value: concept_degree(&vals)?,
                per_triple,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DegreeReport { kind, measure, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over the value range; the last bin is closed.
pub fn histogram(values: &[f64], n_bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || n_bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width) as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub result: CorrelationResult,
}

/// Spearman correlation of concept degrees with each of the four metrics,
/// joined on concept id.
pub fn correlate_degrees_with_metrics(
    records: &[DegreeRecord],
    metrics: &[(usize, MetricVector)],
    seed: u64,
) -> Result<Vec<MetricCorrelation>> {
    let by_id: BTreeMap<usize, &MetricVector> = metrics.iter().map(|(c, m)| (*c, m)).collect();
    let joined: Vec<(f64, [f64; 4])> = records
        .iter()
        .filter_map(|r| by_id.get(&r.concept_id).map(|m| (r.value, m.as_array())))
        .collect();
    if joined.is_empty() {
        return Err(Error::invalid("no concept has both a degree and circuit metrics"));
    }
    let xs: Vec<f64> = joined.iter().map(|j| j.0).collect();
    MetricVector::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let ys: Vec<f64> = joined.iter().map(|j| j.1[i]).collect();
            Ok(MetricCorrelation {
                metric: name.to_string(),
                result: spearman(&xs, &ys, seed)?,
            })
        })
        .collect()
}
