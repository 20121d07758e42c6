// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::ExtractConfig;
use crate::lm::{ModelConfig, TrainConfig};
use crate::{Error, Result};

/// Dataset generation options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Triple file to ingest; empty means the bundled toy graph.
    pub kb_path: String,
    /// Keep only the first this many concepts (0 = all).
    pub max_concepts: usize,
    pub resamples: usize,
    pub test_concepts: usize,
    pub templates_per_relation: usize,
    pub test_template_fraction: f64,
    /// People in the biography corpus (four sentences each).
    pub bio_people: usize,
    /// Fail on unknown relations instead of skipping them.
    pub strict_relations: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kb_path: String::new(),
            max_concepts: 50,
            resamples: 30,
            test_concepts: 30,
            templates_per_relation: 50,
            test_template_fraction: 0.2,
            bio_people: 200,
            strict_relations: false,
        }
    }
}

/// Model shape. The vocabulary size is fixed by the generated data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub context_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            n_layers: 4,
            n_heads: 4,
            d_model: 32,
            d_mlp: 64,
            context_len: 32,
        }
    }
}

impl ModelShape {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_mlp: self.d_mlp,
            context_len: self.context_len,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircuitOptions {
    #[serde(flatten)]
    pub extract: ExtractConfig,
    /// Prompts per concept used for extraction (0 = all of its test samples).
    pub max_samples_per_concept: usize,
}

impl Default for CircuitOptions {
    fn default() -> Self {
        CircuitOptions {
            extract: ExtractConfig::default(),
            max_samples_per_concept: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Group size for relatedness experiments.
    pub k: usize,
    /// Seeds for repeated experiments (interference, transfer).
    pub seeds: Vec<u64>,
    /// Bins in the emitted degree histograms.
    pub histogram_bins: usize,
    /// Optional `id,v1,v2,...` file of concept vectors for relatedness.
    pub concept_vectors: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: 10,
            seeds: vec![0, 1, 2],
            histogram_bins: 20,
            concept_vectors: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferenceConfig {
    /// Number of target concepts, taken from the test concepts in id order.
    pub targets: usize,
    pub groups: Vec<String>,
    pub train: TrainConfig,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        InterferenceConfig {
            targets: 30,
            groups: vec!["high".into(), "moderate".into(), "weak".into()],
            train: TrainConfig {
                lr: 3e-3,
                batch_size: 16,
                steps: 60,
                checkpoint_every: 0,
                probe_size: 1,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub train: TrainConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            train: TrainConfig {
                lr: 1e-3,
                batch_size: 16,
                steps: 200,
                checkpoint_every: 0,
                probe_size: 1,
                ..TrainConfig::default()
            },
        }
    }
}

/// One seed per stochastic stage. Training seeds live in the stage configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    pub data: u64,
    pub names: u64,
    pub init: u64,
    pub corruption: u64,
    pub permutation: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            data: 1,
            names: 2,
            init: 3,
            corruption: 4,
            permutation: 5,
        }
    }
}

fn stage_default(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 32,
        steps: 200,
        checkpoint_every: 50,
        seed,
        probe_size: 64,
        ..TrainConfig::default()
    }
}

/// Everything a run depends on. A saved config replays a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub out_dir: String,
    /// Worker threads for independent jobs (0 = all cores).
    pub workers: usize,
    pub data: DataConfig,
    pub model: ModelShape,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub circuit: CircuitOptions,
    pub analysis: AnalysisConfig,
    pub interference: InterferenceConfig,
    pub transfer: TransferConfig,
    pub seeds: SeedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out_dir: "runs/default".into(),
            workers: 0,
            data: DataConfig::default(),
            model: ModelShape::default(),
            stage1: stage_default(10),
            stage2: stage_default(20),
            circuit: CircuitOptions::default(),
            analysis: AnalysisConfig::default(),
            interference: InterferenceConfig::default(),
            transfer: TransferConfig::default(),
            seeds: SeedConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn out_path(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }
}

/// A broken invariant; `fields` names every config key involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub fields: Vec<String>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.fields.join(", "), self.message)
    }
}

fn push(out: &mut Vec<Violation>, fields: &[&str], message: String) {
    out.push(Violation {
        fields: fields.iter().map(|s| s.to_string()).collect(),
        message,
    });
}

fn check_train(out: &mut Vec<Violation>, name: &str, t: &TrainConfig) {
    let mut bad = |field: &str, msg: String| push(out, &[&format!("{name}.{field}")], msg);
    if !(t.lr.is_finite() && t.lr > 0.0) {
        bad("lr", format!("must be positive, got {}", t.lr));
    }
    if t.batch_size == 0 {
        bad("batch_size", "must be at least 1".into());
    }
    if !(0.0..1.0).contains(&t.beta1) {
        bad("beta1", format!("must lie in [0, 1), got {}", t.beta1));
    }
    if !(0.0..1.0).contains(&t.beta2) {
        bad("beta2", format!("must lie in [0, 1), got {}", t.beta2));
    }
    if !(t.eps.is_finite() && t.eps > 0.0) {
        bad("eps", format!("must be positive, got {}", t.eps));
    }
    if !(t.weight_decay.is_finite() && t.weight_decay >= 0.0) {
        bad("weight_decay", format!("must be non-negative, got {}", t.weight_decay));
    }
}

/// Every broken invariant of `cfg`. Empty means valid.
///
/// Checks against the concept count use `data.max_concepts` when it is set
/// and otherwise the bundled graph's size; a custom `kb_path` with
/// `max_concepts = 0` is only checked once loaded.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();

    if cfg.out_dir.trim().is_empty() {
        push(&mut out, &["out_dir"], "must not be empty".into());
    }

    let d = &cfg.data;
    let n_concepts = if d.max_concepts > 0 {
        Some(d.max_concepts)
    } else if d.kb_path.is_empty() {
        Some(crate::kb::toy::BUNDLED_CONCEPTS)
    } else {
        None
    };
    if d.resamples == 0 {
        push(&mut out, &["data.resamples"], "must be at least 1".into());
    }
    if d.templates_per_relation < 2 {
        push(&mut out, &["data.templates_per_relation"], "need at least 2 to split train and test".into());
    }
    if !(d.test_template_fraction > 0.0 && d.test_template_fraction < 1.0) {
        push(
            &mut out,
            &["data.test_template_fraction"],
            format!("must lie strictly between 0 and 1, got {}", d.test_template_fraction),
        );
    }
    if d.bio_people == 0 {
        push(&mut out, &["data.bio_people"], "must be at least 1".into());
    }
    if d.test_concepts == 0 {
        push(&mut out, &["data.test_concepts"], "must be at least 1".into());
    }
    if let Some(n) = n_concepts {
        if d.test_concepts > n {
            push(
                &mut out,
                &["data.test_concepts", "data.max_concepts"],
                format!("{} test concepts requested but only {n} concepts", d.test_concepts),
            );
        }
        if n < 3 * cfg.analysis.k + 1 {
            push(
                &mut out,
                &["analysis.k", "data.max_concepts"],
                format!("K={} needs at least {} concepts, have {n}", cfg.analysis.k, 3 * cfg.analysis.k + 1),
            );
        }
    }

    let m = &cfg.model;
    if m.n_layers == 0 {
        push(&mut out, &["model.n_layers"], "must be at least 1".into());
    }
    if m.n_heads == 0 || m.d_model % m.n_heads.max(1) != 0 {
        push(
            &mut out,
            &["model.d_model", "model.n_heads"],
            format!("d_model {} must be a positive multiple of n_heads {}", m.d_model, m.n_heads),
        );
    }
    if m.d_mlp == 0 {
        push(&mut out, &["model.d_mlp"], "must be at least 1".into());
    }
    if m.context_len < 2 {
        push(&mut out, &["model.context_len"], "must be at least 2".into());
    }

    check_train(&mut out, "stage1", &cfg.stage1);
    check_train(&mut out, "stage2", &cfg.stage2);
    check_train(&mut out, "interference.train", &cfg.interference.train);
    check_train(&mut out, "transfer.train", &cfg.transfer.train);

    let c = &cfg.circuit.extract;
    if !(0.0..=1.0).contains(&c.threshold) {
        push(
            &mut out,
            &["circuit.threshold"],
            format!("is a fraction and must lie in [0, 1], got {}", c.threshold),
        );
    }
    if c.m == 0 {
        push(&mut out, &["circuit.m"], "needs at least 1 integration step".into());
    }

    if cfg.analysis.k == 0 {
        push(&mut out, &["analysis.k"], "must be at least 1".into());
    }
    if cfg.analysis.seeds.is_empty() {
        push(&mut out, &["analysis.seeds"], "must list at least one seed".into());
    }
    let mut sorted = cfg.analysis.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != cfg.analysis.seeds.len() {
        push(&mut out, &["analysis.seeds"], "seeds must be distinct".into());
    }
    if cfg.interference.targets == 0 {
        push(&mut out, &["interference.targets"], "must be at least 1".into());
    }
    if cfg.interference.targets > d.test_concepts {
        push(
            &mut out,
            &["interference.targets", "data.test_concepts"],
            format!(
                "{} targets requested but only {} test concepts",
                cfg.interference.targets, d.test_concepts
            ),
        );
    }
    if cfg.interference.groups.is_empty() {
        push(&mut out, &["interference.groups"], "must name at least one group".into());
    }
    for g in &cfg.interference.groups {
        if crate::dynamics::GroupKind::parse(g).is_none() {
            push(&mut out, &["interference.groups"], format!("unknown group `{g}` (high, moderate, weak)"));
        }
    }
    out
}
