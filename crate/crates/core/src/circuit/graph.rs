// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::lm::{ModelConfig, NodeKind, PortKind, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Layer of heads and MLPs; `None` for the embedding and logits.
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub port: PortKind,
    /// Global port index in the model topology.
    pub port_index: usize,
}

/// The model's computational DAG with explicit node and edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct CompGraph {
    pub topology: Topology,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl CompGraph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.topology.n_layers, self.topology.n_heads)
    }

    /// Returns an error unless `(n_layers, n_heads)` matches this graph.
    pub fn check_shape(&self, n_layers: usize, n_heads: usize) -> Result<()> {
        if self.shape() != (n_layers, n_heads) {
            return Err(Error::GraphMismatch(format!(
                "expected {}x{} graph, got {n_layers}x{n_heads}",
                self.topology.n_layers, self.topology.n_heads
            )));
        }
        Ok(())
    }
}

pub fn build_comp_graph(config: &ModelConfig) -> Result<CompGraph> {
    config.validate()?;
    comp_graph_for_shape(config.n_layers, config.n_heads)
}

/// The graph depends only on depth and head count; this builds it without a
/// full model config (e.g. to read saved circuits).
pub fn comp_graph_for_shape(n_layers: usize, n_heads: usize) -> Result<CompGraph> {
    if n_layers == 0 || n_heads == 0 {
        return Err(crate::Error::invalid("graph needs at least one layer and one head"));
    }
    let topology = Topology::new(n_layers, n_heads);
    let nodes = (0..topology.n_nodes())
        .map(|id| {
            let kind = topology.kind(id);
            let layer = match kind {
                NodeKind::AttnHead { layer, .. } | NodeKind::Mlp { layer } => Some(layer),
                _ => None,
            };
            GraphNode { id, kind, layer }
        })
        .collect();
    let edges: Vec<GraphEdge> = (0..topology.n_edges())
        .map(|id| {
            let (src, port_index) = topology.edge_endpoints(id);
            GraphEdge {
                id,
                src,
                dst: topology.port_node(port_index),
                port: topology.port_kind(port_index),
                port_index,
            }
        })
        .collect();
    let expected = Topology::closed_form_edge_count(n_layers, n_heads);
    assert_eq!(edges.len(), expected, "edge enumeration disagrees with the closed form");
    Ok(CompGraph { topology, nodes, edges })
}
