// SPDX-License-Identifier: MIT OR Apache-2.0

//! Concept circuits in continually pretrained language models.
//!
//! The crate covers the whole experimental loop at desk scale:
//!
//! - [`kb`] ingests a triple file, maps relations to five knowledge
//!   categories, renames concepts to fictional pseudo-words and renders
//!   prefix/target samples from disjoint template pools.
//! - [`lm`] is a small pre-LN decoder-only transformer written against a
//!   node/port computational graph, with hand-derived reverse-mode
//!   gradients, AdamW training and a binary checkpoint format.
//! - [`circuit`] scores every edge of that graph with integrated-gradient
//!   edge attribution and selects the smallest faithful top-scoring circuit.
//! - [`metrics`] computes eigenvector-centrality spread, density, global
//!   efficiency and average core number of a circuit.
//! - [`dynamics`] turns checkpoints into learning/forgetting degrees,
//!   Spearman correlations, trajectories, interference and transfer runs.
//! - [`harness`] holds the experiment config, the end-to-end pipeline and
//!   the run manifest.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kb;
pub mod lm;
pub mod metrics;
pub(crate) mod rng;

pub use error::{Error, Result};
