// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{validate_config, CircuitOptions, ExperimentConfig};
use super::data::{prepare_data, PreparedData};
use super::{digest_tree, write_atomic, write_csv};
use crate::circuit::{build_comp_graph, extract_circuit, make_corrupted_pair, Circuit, CompGraph, CorruptPair};
use crate::dynamics::report::{correlation_rows, degree_rows, trajectory_rows, CorrelationRow};
use crate::dynamics::{
    compute_degrees, correlate_degrees_with_metrics, histogram, spearman, track_trajectories, CheckpointMetrics,
    DegreeKind, DegreeReport, Measure, PValueMethod,
};
use crate::kb::Sample;
use crate::lm::{train_stage, Checkpoint, Parameters, Stage};
use crate::metrics::{metric_vector, MetricVector};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

/// What a run produced: the config it ran from, a digest of every output
/// file and how long each step took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Path relative to the output directory -> sha256 hex digest.
    pub files: BTreeMap<String, String>,
    pub timings: Vec<StepTiming>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, files: BTreeMap<String, String>, timings: Vec<StepTiming>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            files,
            timings,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Headline numbers of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_concepts: usize,
    pub n_test_concepts: usize,
    pub stage1_losses: Vec<(usize, f64)>,
    pub stage2_losses: Vec<(usize, f64)>,
    pub mean_learning_logit: Option<f64>,
    pub mean_forgetting_logit: Option<f64>,
    pub mean_learning_logprob: Option<f64>,
    pub mean_forgetting_logprob: Option<f64>,
    /// Spearman correlation of concept learning and forgetting degrees.
    pub learning_forgetting_rho: Option<f64>,
    pub learning_forgetting_p: Option<f64>,
    pub circuits: usize,
    pub flagged_circuits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub checkpoint: String,
    pub stage: String,
    pub step: usize,
    pub concept_id: usize,
    pub k_edges: usize,
    pub faithfulness: f64,
    pub flagged: bool,
    pub centrality_std: f64,
    pub density: f64,
    pub global_efficiency: f64,
    pub avg_kcore: f64,
}

impl MetricRow {
    pub fn metrics(&self) -> MetricVector {
        MetricVector {
            centrality_std: self.centrality_std,
            density: self.density,
            global_efficiency: self.global_efficiency,
            avg_kcore: self.avg_kcore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HistogramRow {
    kind: &'static str,
    measure: &'static str,
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Default)]
struct Steps {
    timings: Vec<StepTiming>,
}

impl Steps {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("step {name}");
        let start = Instant::now();
        let out = f().map_err(|e| Error::Step {
            step: name.to_string(),
            source: Box::new(e),
        });
        self.timings.push(StepTiming {
            step: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Test samples of one concept, in dataset order.
pub fn concept_samples(data: &PreparedData, concept: usize) -> Vec<Sample> {
    data.dataset
        .test
        .iter()
        .filter(|s| data.kb.triples.iter().find(|t| t.id == s.triple_id).map(|t| t.subject) == Some(concept))
        .cloned()
        .collect()
}

/// Clean/corrupted prompt pairs for one concept built from `samples`
/// (`max` = 0 keeps them all).
pub fn pairs_from_samples(data: &PreparedData, samples: &[Sample], max: usize, seed: u64) -> Result<Vec<CorruptPair>> {
    let take = if max == 0 { samples.len() } else { max.min(samples.len()) };
    samples[..take]
        .iter()
        .map(|s| make_corrupted_pair(s, &data.kb, &data.vocab, seed))
        .collect()
}

/// Extracts one circuit per concept from `params`, in concept order.
pub fn extract_concepts(
    params: &Parameters,
    graph: &CompGraph,
    data: &PreparedData,
    concepts: &[usize],
    label: &str,
    opts: &CircuitOptions,
    corruption_seed: u64,
) -> Result<Vec<Circuit>> {
    concepts
        .par_iter()
        .map(|&c| {
            let pairs = pairs_from_samples(data, &concept_samples(data, c), opts.max_samples_per_concept, corruption_seed)?;
            extract_circuit(params, graph, &pairs, c, label, &opts.extract)
        })
        .collect()
}

pub fn metric_rows(label: &str, stage: Stage, step: usize, circuits: &[Circuit], graph: &CompGraph) -> Result<Vec<MetricRow>> {
    circuits
        .iter()
        .map(|c| {
            let m = metric_vector(c, graph)?;
            Ok(MetricRow {
                checkpoint: label.to_string(),
                stage: stage.as_str().to_string(),
                step,
                concept_id: c.concept_id,
                k_edges: c.k_edges,
                faithfulness: c.faithfulness,
                flagged: c.flagged,
                centrality_std: m.centrality_std,
                density: m.density,
                global_efficiency: m.global_efficiency,
                avg_kcore: m.avg_kcore,
            })
        })
        .collect()
}

/// Metric vectors of the non-flagged circuits; flagged circuits are the
/// whole graph and carry no structure.
pub fn usable_metrics(rows: &[MetricRow]) -> Vec<(usize, MetricVector)> {
    rows.iter().filter(|r| !r.flagged).map(|r| (r.concept_id, r.metrics())).collect()
}

fn save_circuits(dir: &Path, circuits: &[Circuit]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for c in circuits {
        write_atomic(
            &dir.join(format!("concept-{:05}.json", c.concept_id)),
            serde_json::to_string_pretty(c)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn save_checkpoints(dir: &Path, prefix: &str, cks: &[Checkpoint]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for c in cks {
        c.save(&dir.join(format!("{prefix}-step-{:06}.ckpt", c.step)))?;
    }
    Ok(())
}

fn correlate_or_blank(analysis: &str, report: &DegreeReport, metrics: &[(usize, MetricVector)], seed: u64) -> Vec<CorrelationRow> {
    match correlate_degrees_with_metrics(&report.records, metrics, seed) {
        Ok(res) => correlation_rows(analysis, &res),
        Err(e) => {
            log::warn!("{analysis}: {e}");
            let joined = report
                .records
                .iter()
                .filter(|r| metrics.iter().any(|(c, _)| *c == r.concept_id))
                .count();
            MetricVector::NAMES
                .iter()
                .map(|m| CorrelationRow {
                    analysis: analysis.to_string(),
                    metric: m.to_string(),
                    n: joined,
                    rho: None,
                    p_value: None,
                    method: "none",
                })
                .collect()
        }
    }
}

fn learning_vs_forgetting(learn: &DegreeReport, forget: &DegreeReport, seed: u64) -> CorrelationRow {
    let f: BTreeMap<usize, f64> = forget.records.iter().map(|r| (r.concept_id, r.value)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = learn
        .records
        .iter()
        .filter_map(|r| f.get(&r.concept_id).map(|&v| (r.value, v)))
        .unzip();
    let analysis = format!("learning_vs_forgetting/{}", learn.measure.as_str());
    let mut row = CorrelationRow {
        analysis,
        metric: "forgetting_degree".into(),
        n: xs.len(),
        rho: None,
        p_value: None,
        method: "none",
    };
    match spearman(&xs, &ys, seed) {
        Ok(r) => {
            row.rho = r.rho;
            row.p_value = r.p_value;
            row.method = match r.method {
                PValueMethod::TApprox => "t_approx",
                PValueMethod::Permutation => "permutation",
            };
        }
        Err(e) => log::warn!("{}: {e}", row.analysis),
    }
    row
}

/// Validates `cfg` and runs it on a worker pool of `cfg.workers` threads.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Config(msg.join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| pipeline(cfg))
}

fn pipeline(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let out = cfg.out_path();
    std::fs::create_dir_all(&out)?;
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml()?.as_bytes())?;
    let mut steps = Steps::default();
    let ckpt_dir = out.join("checkpoints");
    let circuit_dir = |label: &str| -> PathBuf { out.join("circuits").join(label) };
    let corruption = cfg.seeds.corruption;

    let data = steps.run("gen-data", || {
        let d = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len)?;
        d.save(&out.join("data"))?;
        Ok(d)
    })?;
    let model_cfg = cfg.model.with_vocab(data.vocab.len());
    let graph = build_comp_graph(&model_cfg)?;
    let concepts = data.dataset.test_concepts.clone();

    let stage1 = steps.run("train-stage1", || {
        let init = Parameters::init(model_cfg, cfg.seeds.init)?;
        let cks = train_stage(&init, &data.train_sequences(), &cfg.stage1, Stage::Stage1)?;
        save_checkpoints(&ckpt_dir, "stage1", &cks)?;
        Ok(cks)
    })?;
    let pi0 = &stage1[0].params;
    let pi1 = &stage1.last().expect("at least one checkpoint").params;

    let mut metric_table: Vec<MetricRow> = Vec::new();
    let mut all_circuits = 0;
    let mut flagged = 0;
    let mut extract = |steps: &mut Steps, params: &Parameters, label: &str, stage: Stage, step: usize| -> Result<Vec<MetricRow>> {
        steps.run(&format!("extract-{label}"), || {
            let circuits = extract_concepts(params, &graph, &data, &concepts, label, &cfg.circuit, corruption)?;
            save_circuits(&circuit_dir(label), &circuits)?;
            all_circuits += circuits.len();
            flagged += circuits.iter().filter(|c| c.flagged).count();
            let rows = metric_rows(label, stage, step, &circuits, &graph)?;
            metric_table.extend(rows.iter().cloned());
            Ok(rows)
        })
    };
    let m_pi0 = extract(&mut steps, pi0, "pi0", Stage::Init, 0)?;
    let m_pi1 = extract(&mut steps, pi1, "pi1", Stage::Stage1, stage1.last().map_or(0, |c| c.step))?;

    let stage2 = steps.run("train-stage2", || {
        let cks = train_stage(pi1, &data.bio_sequences(), &cfg.stage2, Stage::Stage2)?;
        save_checkpoints(&ckpt_dir, "stage2", &cks)?;
        Ok(cks)
    })?;
    let mut trajectory: Vec<CheckpointMetrics> = vec![CheckpointMetrics {
        step: 0,
        rows: usable_metrics(&m_pi1),
    }];
    let mut m_last = m_pi1.clone();
    for ck in stage2.iter().skip(1) {
        let label = format!("stage2-step-{:06}", ck.step);
        m_last = extract(&mut steps, &ck.params, &label, Stage::Stage2, ck.step)?;
        trajectory.push(CheckpointMetrics {
            step: ck.step,
            rows: usable_metrics(&m_last),
        });
    }
    let pi2 = &stage2.last().expect("at least one checkpoint").params;
    write_csv(&out.join("metrics.csv"), &metric_table)?;

    let summary = steps.run("analyze", || {
        let test = &data.dataset.test;
        let deg = |a: &Parameters, b: &Parameters, kind, measure| compute_degrees(a, b, test, &data.kb, &data.vocab, kind, measure);
        let mut reports = Vec::new();
        for measure in [Measure::Logit, Measure::LogProb] {
            reports.push(deg(pi0, pi1, DegreeKind::Learning, measure)?);
            reports.push(deg(pi1, pi2, DegreeKind::Forgetting, measure)?);
        }
        let refs: Vec<&DegreeReport> = reports.iter().collect();
        let (concept_rows, triple_rows) = degree_rows(&refs);
        write_csv(&out.join("degrees.csv"), &concept_rows)?;
        write_csv(&out.join("degree_triples.csv"), &triple_rows)?;
        let hist: Vec<HistogramRow> = reports
            .iter()
            .flat_map(|r| {
                histogram(&r.triple_values(), cfg.analysis.histogram_bins)
                    .into_iter()
                    .map(|b| HistogramRow {
                        kind: r.kind.as_str(),
                        measure: r.measure.as_str(),
                        lo: b.lo,
                        hi: b.hi,
                        count: b.count,
                    })
            })
            .collect();
        write_csv(&out.join("degree_histograms.csv"), &hist)?;

        let perm = cfg.seeds.permutation;
        let (u0, u1, u2) = (usable_metrics(&m_pi0), usable_metrics(&m_pi1), usable_metrics(&m_last));
        let mut corr = Vec::new();
        for pair in reports.chunks(2) {
            let (learn, forget) = (&pair[0], &pair[1]);
            let m = learn.measure.as_str();
            corr.extend(correlate_or_blank(&format!("learning/{m}/pre"), learn, &u0, perm));
            corr.extend(correlate_or_blank(&format!("learning/{m}/post"), learn, &u1, perm));
            corr.extend(correlate_or_blank(&format!("forgetting/{m}/pre"), forget, &u1, perm));
            corr.extend(correlate_or_blank(&format!("forgetting/{m}/post"), forget, &u2, perm));
            corr.push(learning_vs_forgetting(learn, forget, perm));
        }
        write_csv(&out.join("correlations.csv"), &corr)?;

        if trajectory.len() >= 2 {
            let (rows, peaks) = trajectory_rows(&track_trajectories(&trajectory)?);
            write_csv(&out.join("trajectories.csv"), &rows)?;
            write_csv(&out.join("trajectory_peaks.csv"), &peaks)?;
        } else {
            log::warn!("stage 2 produced a single checkpoint; no trajectories");
        }

        let lf = corr
            .iter()
            .find(|r| r.analysis == "learning_vs_forgetting/logit")
            .expect("logit row present");
        let summary = RunSummary {
            n_concepts: data.kb.concepts.len(),
            n_test_concepts: concepts.len(),
            stage1_losses: stage1.iter().map(|c| (c.step, c.loss)).collect(),
            stage2_losses: stage2.iter().map(|c| (c.step, c.loss)).collect(),
            mean_learning_logit: reports[0].mean(),
            mean_forgetting_logit: reports[1].mean(),
            mean_learning_logprob: reports[2].mean(),
            mean_forgetting_logprob: reports[3].mean(),
            learning_forgetting_rho: lf.rho,
            learning_forgetting_p: lf.p_value,
            circuits: all_circuits,
            flagged_circuits: flagged,
        };
        write_atomic(&out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?.as_bytes())?;
        Ok(summary)
    })?;
    log::info!(
        "learning {:?}, forgetting {:?}, rho {:?}",
        summary.mean_learning_logit,
        summary.mean_forgetting_logit,
        summary.learning_forgetting_rho
    );

    let files = digest_tree(&out, &[MANIFEST_FILE])?;
    let manifest = RunManifest::new(cfg, files, steps.timings);
    write_atomic(&out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
