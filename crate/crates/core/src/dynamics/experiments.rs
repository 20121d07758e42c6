// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kb::{DatasetSplit, KnowledgeBase, KnowledgeCategory, Sample};
use crate::lm::{evaluate_knowledge, train_stage, training_sequences, Parameters, Stage, TrainConfig, Vocabulary};
use crate::{Error, Result};

/// Mean first-token logit and probability over the non-flagged samples.
pub fn mean_logit_and_prob(params: &Parameters, samples: &[Sample], vocab: &Vocabulary) -> Result<(f64, f64, usize)> {
    let records = evaluate_knowledge(params, samples, vocab)?;
    let used: Vec<_> = records.iter().filter(|r| !r.flagged).collect();
    if used.is_empty() {
        return Err(Error::invalid("no evaluable samples"));
    }
    let n = used.len() as f64;
    Ok((
        used.iter().map(|r| r.logit).sum::<f64>() / n,
        used.iter().map(|r| r.prob).sum::<f64>() / n,
        used.len(),
    ))
}

fn final_params(params: &Parameters, data: &[Vec<usize>], cfg: &TrainConfig, stage: Stage) -> Result<Parameters> {
    let quiet = TrainConfig {
        checkpoint_every: 0,
        probe_size: 1,
        ..cfg.clone()
    };
    Ok(train_stage(params, data, &quiet, stage)?
        .pop()
        .expect("training returns at least one checkpoint")
        .params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceOutcome {
    pub avg_logit: f64,
    pub avg_prob: f64,
    pub n_eval: usize,
    pub n_train: usize,
}

/// Trains from `base` on the train samples of `target` together with those
/// of `group`, then scores the target's test samples.
pub fn run_interference(
    base: &Parameters,
    kb: &KnowledgeBase,
    dataset: &DatasetSplit,
    vocab: &Vocabulary,
    target: usize,
    group: &[usize],
    cfg: &TrainConfig,
) -> Result<InterferenceOutcome> {
    if group.is_empty() {
        return Err(Error::invalid("interference group is empty"));
    }
    if group.contains(&target) {
        return Err(Error::invalid("interference group contains the target"));
    }
    let subject_of = |s: &Sample| kb.triples.iter().find(|t| t.id == s.triple_id).map(|t| t.subject);
    let members: BTreeSet<usize> = group.iter().copied().chain([target]).collect();
    let train: Vec<Sample> = dataset
        .train
        .iter()
        .filter(|s| subject_of(s).is_some_and(|c| members.contains(&c)))
        .cloned()
        .collect();
    let eval: Vec<Sample> = dataset
        .test
        .iter()
        .filter(|s| subject_of(s) == Some(target))
        .cloned()
        .collect();
    if eval.is_empty() {
        return Err(Error::invalid(format!("concept {target} has no test samples")));
    }
    let trained = final_params(base, &training_sequences(&train, vocab), cfg, Stage::Stage1)?;
    let (avg_logit, avg_prob, n_eval) = mean_logit_and_prob(&trained, &eval, vocab)?;
    Ok(InterferenceOutcome {
        avg_logit,
        avg_prob,
        n_eval,
        n_train: train.len(),
    })
}

/// Relative gain of a curriculum over the control; `None` when the control
/// logit is within 1e-9 of zero.
pub fn paired_transferability(logit_after_source: f64, logit_after_bio: f64) -> Option<f64> {
    (logit_after_bio.abs() > 1e-9).then(|| (logit_after_source - logit_after_bio) / logit_after_bio.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: KnowledgeCategory,
    pub target: KnowledgeCategory,
    pub logit_after_source: f64,
    pub logit_after_bio: f64,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub target: KnowledgeCategory,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    /// The 20 ordered pairs, by source then target.
    pub cells: Vec<TransferCell>,
    /// One biography-first run per target category.
    pub controls: Vec<ControlRun>,
}

impl TransferMatrix {
    pub fn cell(&self, source: KnowledgeCategory, target: KnowledgeCategory) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }
}

/// Two-stage curricula over knowledge categories.
///
/// Each source category (and the biography corpus as control) is trained
/// first for `cfg.steps`, then each other category for the same number of
/// steps; the score is the mean logit on the second category's test
/// samples. Stage-one models are shared by the cells that start from them.
pub fn run_transfer_matrix(
    base: &Parameters,
    dataset: &DatasetSplit,
    vocab: &Vocabulary,
    bio: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<TransferMatrix> {
    let cats = KnowledgeCategory::RETAINED;
    let of = |samples: &[Sample], c: KnowledgeCategory| -> Vec<Sample> {
        samples.iter().filter(|s| s.category == c).cloned().collect()
    };
    for c in cats {
        if of(&dataset.train, c).is_empty() || of(&dataset.test, c).is_empty() {
            return Err(Error::invalid(format!("category {} has no train or test samples", c.as_str())));
        }
    }
    if bio.is_empty() {
        return Err(Error::invalid("biography corpus is empty"));
    }
    let stage2_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    };
    // index 5 is the control
    let firsts: Vec<Parameters> = (0..=cats.len())
        .into_par_iter()
        .map(|i| {
            let data = if i < cats.len() {
                training_sequences(&of(&dataset.train, cats[i]), vocab)
            } else {
                bio.to_vec()
            };
            final_params(base, &data, cfg, Stage::Stage1)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..=cats.len())
        .flat_map(|i| (0..cats.len()).filter(move |&j| i != j).map(move |j| (i, j)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let data = training_sequences(&of(&dataset.train, cats[j]), vocab);
            let p = final_params(&firsts[i], &data, &stage2_cfg, Stage::Stage2)?;
            Ok(mean_logit_and_prob(&p, &of(&dataset.test, cats[j]), vocab)?.0)
        })
        .collect::<Result<_>>()?;
    let score = |i: usize, j: usize| scores[jobs.iter().position(|&x| x == (i, j)).expect("job exists")];
    let controls: Vec<ControlRun> = (0..cats.len())
        .map(|j| ControlRun {
            target: cats[j],
            logit: score(cats.len(), j),
        })
        .collect();
    let mut cells = Vec::new();
    for i in 0..cats.len() {
        for j in (0..cats.len()).filter(|&j| j != i) {
            let (a, b) = (score(i, j), controls[j].logit);
            cells.push(TransferCell {
                source: cats[i],
                target: cats[j],
                logit_after_source: a,
                logit_after_bio: b,
                t: paired_transferability(a, b),
            });
        }
    }
    Ok(TransferMatrix { cells, controls })
}
