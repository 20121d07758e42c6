// SPDX-License-Identifier: MIT OR Apache-2.0

//! Graph metrics of circuits.
//!
//! Metrics are computed on the undirected projection of a circuit: nodes are
//! the model components touched by at least one circuit edge and parallel
//! port edges between the same two components collapse into one.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CompGraph};
use crate::{Error, Result};

pub const CENTRALITY_TOL: f64 = 1e-10;
pub const CENTRALITY_MAX_ITER: usize = 10_000;

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UGraph {
    n: usize,
    /// Sorted `(u, v)` with `u < v`.
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    /// Original node ids, when projected from a circuit.
    pub labels: Vec<usize>,
}

impl UGraph {
    /// Normalizes edge orientation and drops duplicates. Self-loops and
    /// out-of-range endpoints are errors.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) outside a graph of {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        Ok(UGraph {
            n,
            edges,
            adj,
            labels: (0..n).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    /// Connected components, each sorted, in order of their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut i = 0;
            while i < members.len() {
                let u = members[i];
                for &v in &self.adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                    }
                }
                i += 1;
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Projects a circuit onto its incident nodes.
pub fn to_undirected(circuit: &Circuit, graph: &CompGraph) -> Result<UGraph> {
    let keep = circuit.edge_mask(graph)?;
    let mut nodes = BTreeSet::new();
    let mut pairs = Vec::new();
    for e in graph.edges.iter().filter(|e| keep[e.id]) {
        nodes.insert(e.src);
        nodes.insert(e.dst);
        pairs.push((e.src, e.dst));
    }
    let labels: Vec<usize> = nodes.into_iter().collect();
    let index = |id: usize| labels.binary_search(&id).expect("incident node");
    let mut g = UGraph::new(labels.len(), pairs.into_iter().map(|(a, b)| (index(a), index(b))))?;
    g.labels = labels;
    Ok(g)
}

/// Eigenvector centrality on the largest component (ties to the component
/// holding the smallest node id), zero elsewhere.
///
/// Power iteration runs on `A + I`, which has the same eigenvectors as `A`
/// but cannot oscillate on bipartite components.
pub fn eigenvector_centrality(g: &UGraph) -> Result<Vec<f64>> {
    let mut out = vec![0.0; g.n];
    let comps = g.components();
    let Some(largest) = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) else {
        return Ok(out);
    };
    let c = largest.len();
    let pos = |u: usize| largest.binary_search(&u).expect("member");
    let mut x = vec![1.0 / (c as f64).sqrt(); c];
    let mut residual = f64::INFINITY;
    for _ in 0..CENTRALITY_MAX_ITER {
        let mut y: Vec<f64> = x.clone();
        for (i, &u) in largest.iter().enumerate() {
            for &v in g.neighbors(u) {
                y[i] += x[pos(v)];
            }
        }
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        for a in &mut y {
            *a /= norm;
        }
        residual = y.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = y;
        if residual < CENTRALITY_TOL {
            for (i, &u) in largest.iter().enumerate() {
                out[u] = x[i];
            }
            return Ok(out);
        }
    }
    Err(Error::NoConvergence {
        iterations: CENTRALITY_MAX_ITER,
        residual,
    })
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of eigenvector centrality over all nodes.
pub fn eigenvector_centrality_std(g: &UGraph) -> Result<f64> {
    Ok(population_std(&eigenvector_centrality(g)?))
}

pub fn density(g: &UGraph) -> f64 {
    if g.n < 2 {
        return 0.0;
    }
    2.0 * g.edges.len() as f64 / (g.n * (g.n - 1)) as f64
}

/// Distinct directed component pairs over `n (n - 1)`, for comparison with
/// the undirected density.
pub fn directed_density(circuit: &Circuit, graph: &CompGraph) -> Result<f64> {
    let keep = circuit.edge_mask(graph)?;
    let mut nodes = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    for e in graph.edges.iter().filter(|e| keep[e.id]) {
        nodes.insert(e.src);
        nodes.insert(e.dst);
        pairs.insert((e.src, e.dst));
    }
    let n = nodes.len();
    Ok(if n < 2 {
        0.0
    } else {
        pairs.len() as f64 / (n * (n - 1)) as f64
    })
}

fn bfs(g: &UGraph, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].expect("visited");
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Mean inverse shortest-path length over ordered pairs; unreachable pairs
/// contribute zero.
pub fn global_efficiency(g: &UGraph) -> f64 {
    if g.n < 2 {
        return 0.0;
    }
    let total: f64 = (0..g.n)
        .map(|s| {
            bfs(g, s)
                .iter()
                .enumerate()
                .filter(|&(t, _)| t != s)
                .filter_map(|(_, d)| d.map(|d| 1.0 / d as f64))
                .sum::<f64>()
        })
        .sum();
    total / (g.n * (g.n - 1)) as f64
}

/// Core number of every node by minimum-degree peeling.
pub fn core_numbers(g: &UGraph) -> Vec<usize> {
    let mut deg: Vec<usize> = (0..g.n).map(|u| g.degree(u)).collect();
    let mut removed = vec![false; g.n];
    let mut core = vec![0; g.n];
    let mut k = 0;
    for _ in 0..g.n {
        let u = (0..g.n)
            .filter(|&u| !removed[u])
            .min_by_key(|&u| (deg[u], u))
            .expect("a node remains");
        k = k.max(deg[u]);
        core[u] = k;
        removed[u] = true;
        for &v in g.neighbors(u) {
            if !removed[v] {
                deg[v] -= 1;
            }
        }
    }
    core
}

pub fn avg_kcore(g: &UGraph) -> f64 {
    if g.n == 0 {
        return 0.0;
    }
    core_numbers(g).iter().sum::<usize>() as f64 / g.n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub centrality_std: f64,
    pub density: f64,
    pub global_efficiency: f64,
    pub avg_kcore: f64,
}

impl MetricVector {
    pub const NAMES: [&'static str; 4] = ["centrality_std", "density", "global_efficiency", "avg_kcore"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.centrality_std, self.density, self.global_efficiency, self.avg_kcore]
    }
}

pub fn ugraph_metrics(g: &UGraph) -> Result<MetricVector> {
    Ok(MetricVector {
        centrality_std: eigenvector_centrality_std(g)?,
        density: density(g),
        global_efficiency: global_efficiency(g),
        avg_kcore: avg_kcore(g),
    })
}

/// The four metrics of a circuit's undirected projection. An empty circuit
/// gives all zeros.
pub fn metric_vector(circuit: &Circuit, graph: &CompGraph) -> Result<MetricVector> {
    ugraph_metrics(&to_undirected(circuit, graph)?)
}

/// Jaccard similarity of two circuits' edge-id sets; 1 when both are empty.
pub fn jaccard_edges(a: &Circuit, b: &Circuit) -> Result<f64> {
    if (a.n_layers, a.n_heads) != (b.n_layers, b.n_heads) {
        return Err(Error::GraphMismatch(format!(
            "circuits over {}x{} and {}x{} graphs",
            a.n_layers, a.n_heads, b.n_layers, b.n_heads
        )));
    }
    let sa: BTreeSet<usize> = a.edges.iter().map(|e| e.id).collect();
    let sb: BTreeSet<usize> = b.edges.iter().map(|e| e.id).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(sa.intersection(&sb).count() as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> UGraph {
        UGraph::new(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b)))).unwrap()
    }

    #[test]
    fn construction_normalizes_and_validates() {
        let g = UGraph::new(3, [(1, 0), (0, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(UGraph::new(3, [(1, 1)]).is_err());
        assert!(UGraph::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn complete_graph_values() {
        let g = complete(4);
        let m = ugraph_metrics(&g).unwrap();
        assert!(m.centrality_std.abs() < 1e-12);
        assert_eq!((m.density, m.global_efficiency, m.avg_kcore), (1.0, 1.0, 3.0));
    }

    #[test]
    fn small_fixtures() {
        let path = UGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!((global_efficiency(&path) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(global_efficiency(&UGraph::new(2, []).unwrap()), 0.0);
        assert_eq!(avg_kcore(&complete(3)), 2.0);
        let star = UGraph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(avg_kcore(&star), 1.0);
        assert_eq!(density(&star), 0.5);
        assert!(eigenvector_centrality_std(&star).unwrap() > 0.0);
        let single = UGraph::new(1, []).unwrap();
        assert_eq!(ugraph_metrics(&single).unwrap().as_array(), [0.0; 4]);
        let empty = UGraph::new(0, []).unwrap();
        assert_eq!(ugraph_metrics(&empty).unwrap().as_array(), [0.0; 4]);
    }

    #[test]
    fn centrality_ignores_smaller_components() {
        let g = UGraph::new(5, [(0, 1), (2, 3), (3, 4)]).unwrap();
        let c = eigenvector_centrality(&g).unwrap();
        assert_eq!((c[0], c[1]), (0.0, 0.0));
        assert!(c[3] > c[2]);
        let tie = UGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        let c = eigenvector_centrality(&tie).unwrap();
        assert!(c[0] > 0.0 && c[2] == 0.0);
    }
}
