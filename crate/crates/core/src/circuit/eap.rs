// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corrupt::CorruptPair;
use crate::lm::{backward, embed_tokens, run, ActivationCache, Parameters, Topology};
use crate::{Error, Result};

/// One signed score per edge of a graph of the given shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub n_layers: usize,
    pub n_heads: usize,
    pub values: Vec<f64>,
}

impl EdgeScores {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Target logit at the metric position of a finished run.
pub(crate) fn metric_of(cache: &ActivationCache, pair: &CorruptPair) -> f64 {
    cache.logits_at(pair.metric_pos)[pair.target]
}

fn check_pair(params: &Parameters, pair: &CorruptPair) -> Result<()> {
    if pair.target >= params.config.vocab_size {
        return Err(Error::TokenOutOfRange {
            id: pair.target,
            vocab_size: params.config.vocab_size,
        });
    }
    CorruptPair::new(pair.clean.clone(), pair.corrupted.clone(), pair.target, pair.metric_pos).map(|_| ())
}

/// Gradient of `scale * M` with respect to every port input.
fn metric_port_grads(params: &Parameters, cache: &ActivationCache, pair: &CorruptPair, scale: f64) -> Vec<Vec<f64>> {
    let v = params.config.vocab_size;
    let mut d_logits = vec![0.0; cache.seq_len() * v];
    d_logits[pair.metric_pos * v + pair.target] = scale;
    backward(params, cache, &d_logits, None).port_inputs
}

/// `score(u -> port) = <corrupt_u - clean_u, grad_port>`, summed over all
/// positions and the residual dimension.
fn edge_products(
    topo: &Topology,
    clean: &ActivationCache,
    corrupt: &ActivationCache,
    grads: &[Vec<f64>],
    n_layers: usize,
    n_heads: usize,
) -> Result<EdgeScores> {
    let n_src = topo.n_nodes() - 1;
    let deltas: Vec<Vec<f64>> = (0..n_src)
        .map(|u| corrupt.outputs[u].iter().zip(&clean.outputs[u]).map(|(a, b)| a - b).collect())
        .collect();
    let mut values = vec![0.0; topo.n_edges()];
    for (port, g) in grads.iter().enumerate() {
        let node = topo.port_node(port);
        for (src, delta) in deltas.iter().enumerate().take(topo.n_upstream(node)) {
            values[topo.edge_id(src, port)] = delta.iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
    if let Some(e) = values.iter().position(|x| !x.is_finite()) {
        let (src, port) = topo.edge_endpoints(e);
        return Err(Error::NonFinite {
            node: format!("score of edge {} -> {}", topo.kind(src), topo.kind(topo.port_node(port))),
        });
    }
    Ok(EdgeScores {
        n_layers,
        n_heads,
        values,
    })
}

/// Integrated-gradient edge attribution with `m` steps.
///
/// The path runs at the input embedding from the clean point
/// (`alpha = 0`) to the corrupted point, with gradients taken at
/// `alpha = k/m` for `k = 1..=m`. With `m = 1` this is the single gradient
/// at the corrupted end.
pub fn eap_ig_edge_scores(params: &Parameters, pair: &CorruptPair, m: usize) -> Result<EdgeScores> {
    eap_ig_edge_scores_scaled(params, pair, m, 1.0)
}

/// As [`eap_ig_edge_scores`] with the metric multiplied by `scale`.
pub fn eap_ig_edge_scores_scaled(params: &Parameters, pair: &CorruptPair, m: usize, scale: f64) -> Result<EdgeScores> {
    if m == 0 {
        return Err(Error::invalid("interpolation steps m must be at least 1"));
    }
    check_pair(params, pair)?;
    let cfg = params.config;
    let topo = Topology::new(cfg.n_layers, cfg.n_heads);
    let e_clean = embed_tokens(params, &pair.clean)?;
    let e_corrupt = embed_tokens(params, &pair.corrupted)?;
    let clean = run(params, &pair.clean, e_clean.clone(), None)?;
    let corrupt = run(params, &pair.corrupted, e_corrupt.clone(), None)?;

    let mut mean: Vec<Vec<f64>> = clean.port_inputs.iter().map(|p| vec![0.0; p.len()]).collect();
    for k in 1..=m {
        let alpha = k as f64 / m as f64;
        let embed: Vec<f64> = e_clean.iter().zip(&e_corrupt).map(|(c, x)| c + alpha * (x - c)).collect();
        let cache = run(params, &pair.corrupted, embed, None)?;
        for (acc, g) in mean.iter_mut().zip(metric_port_grads(params, &cache, pair, scale)) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
    for acc in &mut mean {
        for a in acc.iter_mut() {
            *a /= m as f64;
        }
    }
    edge_products(&topo, &clean, &corrupt, &mean, cfg.n_layers, cfg.n_heads)
}

/// Edge attribution patching: the product with the gradient of a plain
/// forward pass on the corrupted prompt.
pub fn eap_edge_scores(params: &Parameters, pair: &CorruptPair) -> Result<EdgeScores> {
    check_pair(params, pair)?;
    let cfg = params.config;
    let topo = Topology::new(cfg.n_layers, cfg.n_heads);
    let clean = run(params, &pair.clean, embed_tokens(params, &pair.clean)?, None)?;
    let corrupt = run(params, &pair.corrupted, embed_tokens(params, &pair.corrupted)?, None)?;
    let grads = metric_port_grads(params, &corrupt, pair, 1.0);
    edge_products(&topo, &clean, &corrupt, &grads, cfg.n_layers, cfg.n_heads)
}

/// Scores for many pairs in parallel, in input order.
pub fn eap_ig_scores_batch(params: &Parameters, pairs: &[CorruptPair], m: usize) -> Result<Vec<EdgeScores>> {
    pairs.par_iter().map(|p| eap_ig_edge_scores(params, p, m)).collect()
}

/// Per-edge arithmetic mean of signed scores.
pub fn aggregate_concept_scores(per_sample: &[EdgeScores]) -> Result<EdgeScores> {
    let first = per_sample
        .first()
        .ok_or_else(|| Error::invalid("no score sets to aggregate"))?;
    for s in per_sample {
        if (s.n_layers, s.n_heads, s.values.len()) != (first.n_layers, first.n_heads, first.values.len()) {
            return Err(Error::GraphMismatch(format!(
                "score sets over {}x{} and {}x{} graphs",
                first.n_layers, first.n_heads, s.n_layers, s.n_heads
            )));
        }
    }
    let n = per_sample.len() as f64;
    let values = (0..first.values.len())
        .map(|e| per_sample.iter().map(|s| s.values[e]).sum::<f64>() / n)
        .collect();
    Ok(EdgeScores {
        n_layers: first.n_layers,
        n_heads: first.n_heads,
        values,
    })
}
