// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small pre-LN decoder-only transformer in `f64`.
//!
//! The forward pass is written over the computational graph used for circuit
//! discovery (see [`topology`]), with hand-derived reverse-mode gradients.
//! Attention output projections carry no bias, so every head's contribution
//! to the residual stream is exactly its own output.

mod eval;
mod model;
mod params;
pub mod topology;
mod train;
mod vocab;

pub use eval::{
    evaluate_knowledge, measure_sample, sample_tokens, target_logit, target_logprob, text_sequences, training_sequences,
    KnowledgeRecord,
};
pub use model::{backward, embed_tokens, forward, loss_and_grads, mean_loss, run, ActivationCache, EdgePatch, GraphGrads};
pub use params::{sidecar_path, Checkpoint, CheckpointMeta, LayerLayout, ModelConfig, ParamLayout, Parameters, Stage, TensorRole};
pub use topology::{NodeKind, PortKind, Topology};
pub use train::{train_stage, TrainConfig};
pub use vocab::{build_vocab, Vocabulary, BOS, PAD, UNK};
