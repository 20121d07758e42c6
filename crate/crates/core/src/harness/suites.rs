// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::PreparedData;
use crate::dynamics::report::{transfer_rows, InterferenceRow, TransferRow};
use crate::dynamics::{load_concept_vectors, relatedness_groups, run_interference, run_transfer_matrix, GroupKind, Relatedness};
use crate::lm::{Parameters, TrainConfig};
use crate::{Error, Result};

pub fn relatedness_method(cfg: &ExperimentConfig) -> Result<Relatedness> {
    Ok(if cfg.analysis.concept_vectors.is_empty() {
        Relatedness::Features
    } else {
        Relatedness::External(load_concept_vectors(Path::new(&cfg.analysis.concept_vectors))?)
    })
}

fn seeded(t: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: t.seed.wrapping_add(seed),
        ..t.clone()
    }
}

/// Joint-training runs for every (seed, target, group) cell. Targets are the
/// first `interference.targets` test concepts. Each seed starts from its
/// own fresh initialization.
pub fn run_interference_suite(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Vec<InterferenceRow>> {
    let ic = &cfg.interference;
    let tests = &data.dataset.test_concepts;
    if ic.targets > tests.len() {
        return Err(Error::Config(format!(
            "interference.targets {} exceeds the {} test concepts",
            ic.targets,
            tests.len()
        )));
    }
    let kinds: Vec<GroupKind> = ic
        .groups
        .iter()
        .map(|g| GroupKind::parse(g).ok_or_else(|| Error::Config(format!("unknown group `{g}`"))))
        .collect::<Result<_>>()?;
    let groups = relatedness_groups(&data.kb, cfg.analysis.k, &tests[..ic.targets], &relatedness_method(cfg)?)?;
    let model = cfg.model.with_vocab(data.vocab.len());
    let bases: Vec<Parameters> = cfg
        .analysis
        .seeds
        .iter()
        .map(|&s| Parameters::init(model, cfg.seeds.init.wrapping_add(s)))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (si, &seed) in cfg.analysis.seeds.iter().enumerate() {
        for g in &groups {
            for &kind in &kinds {
                jobs.push((si, seed, g.target, kind, g.group(kind).to_vec()));
            }
        }
    }
    jobs.par_iter()
        .map(|(si, seed, target, kind, members)| {
            let o = run_interference(
                &bases[*si],
                &data.kb,
                &data.dataset,
                &data.vocab,
                *target,
                members,
                &seeded(&ic.train, *seed),
            )?;
            Ok(InterferenceRow::new(*seed, *target, *kind, &o))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub seed: u64,
    pub group: String,
    pub n: usize,
    pub mean_logit: f64,
    pub mean_prob: f64,
}

/// Per-seed, per-group means of the interference rows.
pub fn group_means(rows: &[InterferenceRow]) -> Vec<GroupMean> {
    let mut acc: BTreeMap<(u64, &str), (usize, f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.seed, r.group)).or_default();
        e.0 += 1;
        e.1 += r.avg_logit;
        e.2 += r.avg_prob;
    }
    acc.into_iter()
        .map(|((seed, group), (n, l, p))| GroupMean {
            seed,
            group: group.to_string(),
            n,
            mean_logit: l / n as f64,
            mean_prob: p / n as f64,
        })
        .collect()
}

/// One transfer matrix per analysis seed.
pub fn run_transfer_suite(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Vec<TransferRow>> {
    let model = cfg.model.with_vocab(data.vocab.len());
    let bio = data.bio_sequences();
    let mut rows = Vec::new();
    for &seed in &cfg.analysis.seeds {
        let base = Parameters::init(model, cfg.seeds.init.wrapping_add(seed))?;
        let m = run_transfer_matrix(&base, &data.dataset, &data.vocab, &bio, &seeded(&cfg.transfer.train, seed))?;
        rows.extend(transfer_rows(seed, &m));
    }
    Ok(rows)
}
