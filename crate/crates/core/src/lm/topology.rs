// SPDX-License-Identifier: MIT OR Apache-2.0

//! Node, port and edge numbering of the model's computational graph.
//!
//! Nodes are ordered `embed, head(0,0..H), mlp(0), head(1,..), mlp(1), ...,
//! logits`. Every node writes into the residual stream and every input port
//! reads the sum of all outputs from strictly earlier *stages*, where heads of
//! one layer share a stage and the MLP of that layer follows them. Because the
//! upstream set of a port is always a prefix of the node order, the edge
//! `src -> port` has id `edge_offset(port) + src`.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    InputEmbed,
    AttnHead { layer: usize, head: usize },
    Mlp { layer: usize },
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKind {
    Q,
    K,
    V,
    In,
}

impl PortKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PortKind::Q => "q",
            PortKind::K => "k",
            PortKind::V => "v",
            PortKind::In => "in",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::InputEmbed => write!(f, "embed"),
            NodeKind::AttnHead { layer, head } => write!(f, "a{layer}.h{head}"),
            NodeKind::Mlp { layer } => write!(f, "m{layer}"),
            NodeKind::Logits => write!(f, "logits"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub n_layers: usize,
    pub n_heads: usize,
    port_node: Vec<usize>,
    port_kind: Vec<PortKind>,
    node_ports: Vec<Vec<usize>>,
    edge_offset: Vec<usize>,
    n_edges: usize,
}

impl Topology {
    pub fn new(n_layers: usize, n_heads: usize) -> Self {
        let mut t = Topology {
            n_layers,
            n_heads,
            port_node: Vec::new(),
            port_kind: Vec::new(),
            node_ports: Vec::new(),
            edge_offset: Vec::new(),
            n_edges: 0,
        };
        let n_nodes = t.n_nodes();
        t.node_ports = vec![Vec::new(); n_nodes];
        for node in 1..n_nodes {
            let kinds: &[PortKind] = match t.kind(node) {
                NodeKind::AttnHead { .. } => &[PortKind::Q, PortKind::K, PortKind::V],
                _ => &[PortKind::In],
            };
            for &k in kinds {
                let port = t.port_node.len();
                t.port_node.push(node);
                t.port_kind.push(k);
                t.node_ports[node].push(port);
                t.edge_offset.push(t.n_edges);
                t.n_edges += t.n_upstream(node);
            }
        }
        t
    }

    pub fn n_nodes(&self) -> usize {
        2 + self.n_layers * (self.n_heads + 1)
    }

    pub fn logits_node(&self) -> usize {
        self.n_nodes() - 1
    }

    pub fn head_node(&self, layer: usize, head: usize) -> usize {
        1 + layer * (self.n_heads + 1) + head
    }

    pub fn mlp_node(&self, layer: usize) -> usize {
        1 + layer * (self.n_heads + 1) + self.n_heads
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node == 0 {
            return NodeKind::InputEmbed;
        }
        if node == self.logits_node() {
            return NodeKind::Logits;
        }
        let layer = (node - 1) / (self.n_heads + 1);
        let within = (node - 1) % (self.n_heads + 1);
        if within == self.n_heads {
            NodeKind::Mlp { layer }
        } else {
            NodeKind::AttnHead { layer, head: within }
        }
    }

    /// Number of nodes feeding `node`; its sources are `0..n_upstream(node)`.
    pub fn n_upstream(&self, node: usize) -> usize {
        match self.kind(node) {
            NodeKind::InputEmbed => 0,
            NodeKind::AttnHead { layer, .. } => 1 + layer * (self.n_heads + 1),
            NodeKind::Mlp { layer } => 1 + layer * (self.n_heads + 1) + self.n_heads,
            NodeKind::Logits => self.n_nodes() - 1,
        }
    }

    pub fn n_ports(&self) -> usize {
        self.port_node.len()
    }

    pub fn port_node(&self, port: usize) -> usize {
        self.port_node[port]
    }

    pub fn port_kind(&self, port: usize) -> PortKind {
        self.port_kind[port]
    }

    pub fn node_ports(&self, node: usize) -> &[usize] {
        &self.node_ports[node]
    }

    pub fn edge_offset(&self, port: usize) -> usize {
        self.edge_offset[port]
    }

    pub fn edge_id(&self, src: usize, port: usize) -> usize {
        debug_assert!(src < self.n_upstream(self.port_node[port]));
        self.edge_offset[port] + src
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// `(src, port)` of an edge id.
    pub fn edge_endpoints(&self, edge: usize) -> (usize, usize) {
        let port = self.edge_offset.partition_point(|&o| o <= edge) - 1;
        (edge - self.edge_offset[port], port)
    }

    /// Closed-form edge count.
    pub fn closed_form_edge_count(n_layers: usize, n_heads: usize) -> usize {
        let (l, h) = (n_layers, n_heads);
        let per_layer: usize = (0..l)
            .map(|i| {
                let up = 1 + i * (h + 1);
                3 * h * up + up + h
            })
            .sum();
        per_layer + 1 + l * (h + 1)
    }
}
