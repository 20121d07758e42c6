// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_grads, mean_loss};
use super::params::{Checkpoint, Parameters, Stage, TensorRole};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Emit a checkpoint every this many steps (0 = only first and final).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied to weight matrices only.
    pub weight_decay: f64,
    /// Sequences in the fixed probe set used for the checkpoint loss.
    pub probe_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            batch_size: 128,
            steps: 200,
            checkpoint_every: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            probe_size: 128,
        }
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    decay_mask: Vec<bool>,
    t: i32,
}

impl AdamW {
    fn new(params: &Parameters) -> Self {
        let mut decay_mask = vec![false; params.len()];
        for (_, range, role) in params.layout.tensors() {
            if role == TensorRole::Weight {
                decay_mask[range].fill(true);
            }
        }
        AdamW {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            decay_mask,
            t: 0,
        }
    }

    fn step(&mut self, data: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..data.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay_mask[i] {
                data[i] -= cfg.lr * cfg.weight_decay * data[i];
            }
            data[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Trains `params` on `data` (token sequences) for `cfg.steps` AdamW steps.
///
/// Batches are drawn from a seeded per-epoch shuffle. The returned
/// checkpoints always start with the input parameters at step 0, then one
/// every `checkpoint_every` steps, then the final step.
pub fn train_stage(params: &Parameters, data: &[Vec<usize>], cfg: &TrainConfig, stage: Stage) -> Result<Vec<Checkpoint>> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let probe: Vec<Vec<usize>> = data.iter().take(cfg.probe_size.max(1)).cloned().collect();
    let mut current = params.clone();
    let mut checkpoints = vec![Checkpoint {
        params: current.clone(),
        stage,
        step: 0,
        loss: mean_loss(&current, &probe)?,
    }];

    let mut rng = rng::stream(cfg.seed, "train-batches");
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut opt = AdamW::new(params);
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let (_, grads) = loss_and_grads(&current, &batch)?;
        opt.step(&mut current.data, &grads, cfg);
        if !current.all_finite() {
            return Err(Error::NonFinite {
                node: format!("parameters after step {step}"),
            });
        }
        let due = cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
        if due || step == cfg.steps {
            checkpoints.push(Checkpoint {
                params: current.clone(),
                stage,
                step,
                loss: mean_loss(&current, &probe)?,
            });
        }
    }
    Ok(checkpoints)
}
