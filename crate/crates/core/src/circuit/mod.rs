// SPDX-License-Identifier: MIT OR Apache-2.0

//! Edge attribution over the model graph and circuit selection.
//!
//! Edges are scored with integrated gradients along a path between a clean
//! prompt and a copy whose subject token is swapped for another concept.
//! A concept's circuit is the shortest prefix of its edges, ranked by the
//! magnitude of the mean score, whose patched runs recover at least the
//! requested share of the clean-minus-corrupted target logit.

mod corrupt;
mod eap;
mod graph;
mod select;

pub use corrupt::{make_corrupted_pair, CorruptPair};
pub use eap::{aggregate_concept_scores, eap_edge_scores, eap_ig_edge_scores, eap_ig_edge_scores_scaled, eap_ig_scores_batch, EdgeScores};
pub use graph::{build_comp_graph, comp_graph_for_shape, CompGraph, GraphEdge, GraphNode};
pub use select::{
    extract_circuit, faithfulness, pair_faithfulness, rank_edges, run_with_circuit, select_prefix, Circuit, CircuitEdge,
    ExtractConfig, FaithfulnessMode, FaithfulnessReport, PreparedPair, Selection, SelectionMode, DEGENERATE_EPS,
};
