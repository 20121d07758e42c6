// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corrupt::CorruptPair;
use super::eap::{aggregate_concept_scores, eap_ig_scores_batch, metric_of, EdgeScores};
use super::graph::CompGraph;
use crate::lm::{embed_tokens, run, ActivationCache, EdgePatch, Parameters, PortKind};
use crate::{Error, Result};

/// Pairs whose clean and corrupted metrics are closer than this carry no
/// signal and are left out of faithfulness.
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaithfulnessMode {
    /// `(M_circuit - M_corrupt) / (M_clean - M_corrupt)`.
    #[default]
    Normalized,
    /// `M_circuit / M_clean`.
    RawRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    #[default]
    BinarySearch,
    /// Smallest prefix by exhaustive scan from k = 0.
    LinearScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub threshold: f64,
    pub m: usize,
    pub seed: u64,
    pub faithfulness: FaithfulnessMode,
    pub selection: SelectionMode,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            threshold: 0.7,
            m: 5,
            seed: 0,
            faithfulness: FaithfulnessMode::Normalized,
            selection: SelectionMode::BinarySearch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitEdge {
    pub id: usize,
    pub src: String,
    pub dst: String,
    pub port: PortKind,
    pub score: f64,
}

/// A scored subgraph for one concept at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub concept_id: usize,
    pub checkpoint: String,
    pub threshold: f64,
    pub m: usize,
    pub k_edges: usize,
    pub faithfulness: f64,
    /// Set when no prefix, including the full graph, reached the threshold.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default)]
    pub excluded_pairs: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub edges: Vec<CircuitEdge>,
}

impl Circuit {
    pub fn edge_ids(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.id).collect()
    }

    /// Keep-mask over all edges of `graph`.
    pub fn edge_mask(&self, graph: &CompGraph) -> Result<Vec<bool>> {
        graph.check_shape(self.n_layers, self.n_heads)?;
        let mut keep = vec![false; graph.n_edges()];
        for e in &self.edges {
            *keep
                .get_mut(e.id)
                .ok_or_else(|| Error::GraphMismatch(format!("edge id {} out of range", e.id)))? = true;
        }
        Ok(keep)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Circuit> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// A pair with its corrupted run and both reference metrics.
pub struct PreparedPair {
    pub pair: CorruptPair,
    corrupted: ActivationCache,
    pub clean_metric: f64,
    pub corrupt_metric: f64,
}

impl PreparedPair {
    pub fn new(params: &Parameters, pair: CorruptPair) -> Result<Self> {
        let clean = run(params, &pair.clean, embed_tokens(params, &pair.clean)?, None)?;
        let corrupted = run(params, &pair.corrupted, embed_tokens(params, &pair.corrupted)?, None)?;
        let clean_metric = metric_of(&clean, &pair);
        let corrupt_metric = metric_of(&corrupted, &pair);
        Ok(PreparedPair {
            pair,
            corrupted,
            clean_metric,
            corrupt_metric,
        })
    }

    /// Metric of the clean run with every edge outside `keep` fed from the
    /// corrupted run.
    pub fn patched_metric(&self, params: &Parameters, keep: &[bool]) -> Result<f64> {
        let n_edges = crate::lm::Topology::new(params.config.n_layers, params.config.n_heads).n_edges();
        if keep.len() != n_edges {
            return Err(Error::GraphMismatch(format!("mask has {} entries, graph has {n_edges} edges", keep.len())));
        }
        let patch = EdgePatch {
            keep,
            reference: &self.corrupted,
        };
        let cache = run(params, &self.pair.clean, embed_tokens(params, &self.pair.clean)?, Some(&patch))?;
        Ok(metric_of(&cache, &self.pair))
    }
}

/// Target logit of the clean prompt with edge-level interchange patching of
/// every edge not in `circuit`.
pub fn run_with_circuit(params: &Parameters, circuit: &Circuit, graph: &CompGraph, pair: &CorruptPair) -> Result<f64> {
    graph.check_shape(params.config.n_layers, params.config.n_heads)?;
    let keep = circuit.edge_mask(graph)?;
    PreparedPair::new(params, pair.clone())?.patched_metric(params, &keep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaithfulnessReport {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Per-pair score clamped to `[0, 1]`, or `None` for a degenerate pair.
pub fn pair_faithfulness(mode: FaithfulnessMode, circuit: f64, clean: f64, corrupt: f64) -> Option<f64> {
    let (num, den) = match mode {
        FaithfulnessMode::Normalized => (circuit - corrupt, clean - corrupt),
        FaithfulnessMode::RawRatio => (circuit, clean),
    };
    (den.abs() >= DEGENERATE_EPS).then(|| (num / den).clamp(0.0, 1.0))
}

/// Mean clamped faithfulness of the circuit given by `keep` over `pairs`.
pub fn faithfulness(params: &Parameters, keep: &[bool], pairs: &[PreparedPair], mode: FaithfulnessMode) -> Result<FaithfulnessReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("faithfulness needs at least one pair"));
    }
    let scores: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|p| {
            if pair_faithfulness(mode, 0.0, p.clean_metric, p.corrupt_metric).is_none() {
                return Ok(None);
            }
            let m = p.patched_metric(params, keep)?;
            Ok(pair_faithfulness(mode, m, p.clean_metric, p.corrupt_metric))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = scores.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::AllPairsDegenerate(pairs.len()));
    }
    Ok(FaithfulnessReport {
        value: used.iter().sum::<f64>() / used.len() as f64,
        used: used.len(),
        excluded: pairs.len() - used.len(),
    })
}

/// Edge ids by `|score|` descending, ties by ascending id.
pub fn rank_edges(scores: &EdgeScores) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.values.len()).collect();
    order.sort_by(|&a, &b| {
        scores.values[b]
            .abs()
            .total_cmp(&scores.values[a].abs())
            .then(a.cmp(&b))
    });
    order
}

fn prefix_mask(order: &[usize], k: usize) -> Vec<bool> {
    let mut keep = vec![false; order.len()];
    for &e in &order[..k] {
        keep[e] = true;
    }
    keep
}

/// Outcome of choosing the prefix length.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: usize,
    pub report: FaithfulnessReport,
    pub flagged: bool,
}

/// Smallest rank prefix reaching `threshold`.
///
/// Binary search keeps `f(lo) < threshold <= f(hi)` with `lo = 0` and
/// `hi = |E|`, so the returned `k` always has `f(k - 1) < threshold`
/// evaluated directly; faithfulness need not be monotone, so an earlier
/// prefix may also pass. The linear scan finds the true first passing
/// prefix.
pub fn select_prefix(
    params: &Parameters,
    order: &[usize],
    pairs: &[PreparedPair],
    threshold: f64,
    mode: FaithfulnessMode,
    selection: SelectionMode,
) -> Result<Selection> {
    let eval = |k: usize| faithfulness(params, &prefix_mask(order, k), pairs, mode);
    let n = order.len();
    let at_zero = eval(0)?;
    if at_zero.value >= threshold {
        return Ok(Selection {
            k: 0,
            report: at_zero,
            flagged: false,
        });
    }
    let full = eval(n)?;
    if full.value < threshold {
        return Ok(Selection {
            k: n,
            report: full,
            flagged: true,
        });
    }
    match selection {
        SelectionMode::LinearScan => {
            for k in 1..n {
                let r = eval(k)?;
                if r.value >= threshold {
                    return Ok(Selection {
                        k,
                        report: r,
                        flagged: false,
                    });
                }
            }
            Ok(Selection {
                k: n,
                report: full,
                flagged: false,
            })
        }
        SelectionMode::BinarySearch => {
            let (mut lo, mut hi, mut best) = (0, n, full);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let r = eval(mid)?;
                if r.value >= threshold {
                    hi = mid;
                    best = r;
                } else {
                    lo = mid;
                }
            }
            Ok(Selection {
                k: hi,
                report: best,
                flagged: false,
            })
        }
    }
}

/// Scores every pair, averages the scores and selects the smallest faithful
/// top-ranked prefix.
pub fn extract_circuit(
    params: &Parameters,
    graph: &CompGraph,
    pairs: &[CorruptPair],
    concept_id: usize,
    checkpoint: &str,
    cfg: &ExtractConfig,
) -> Result<Circuit> {
    if pairs.is_empty() {
        return Err(Error::invalid(format!("concept {concept_id} has no samples to extract from")));
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(Error::invalid(format!("threshold {} is outside [0, 1]", cfg.threshold)));
    }
    graph.check_shape(params.config.n_layers, params.config.n_heads)?;
    let scores = aggregate_concept_scores(&eap_ig_scores_batch(params, pairs, cfg.m)?)?;
    let order = rank_edges(&scores);
    let prepared: Vec<PreparedPair> = pairs
        .iter()
        .map(|p| PreparedPair::new(params, p.clone()))
        .collect::<Result<_>>()?;
    let selection = match select_prefix(params, &order, &prepared, cfg.threshold, cfg.faithfulness, cfg.selection) {
        Ok(s) => s,
        Err(Error::AllPairsDegenerate(n)) => Selection {
            k: order.len(),
            report: FaithfulnessReport {
                value: 0.0,
                used: 0,
                excluded: n,
            },
            flagged: true,
        },
        Err(e) => return Err(e),
    };
    let mut ids: Vec<usize> = order[..selection.k].to_vec();
    ids.sort_unstable();
    let edges = ids
        .into_iter()
        .map(|id| {
            let e = &graph.edges[id];
            CircuitEdge {
                id,
                src: graph.nodes[e.src].kind.to_string(),
                dst: graph.nodes[e.dst].kind.to_string(),
                port: e.port,
                score: scores.values[id],
            }
        })
        .collect();
    Ok(Circuit {
        concept_id,
        checkpoint: checkpoint.to_string(),
        threshold: cfg.threshold,
        m: cfg.m,
        k_edges: selection.k,
        faithfulness: selection.report.value,
        flagged: selection.flagged,
        excluded_pairs: selection.report.excluded,
        n_layers: graph.topology.n_layers,
        n_heads: graph.topology.n_heads,
        edges,
    })
}
