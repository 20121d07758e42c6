// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use concept_circuits::circuit::{comp_graph_for_shape, build_comp_graph, Circuit};
use concept_circuits::dynamics::report::{correlation_rows, degree_rows, trajectory_rows};
use concept_circuits::dynamics::{
    compute_degrees, correlate_degrees_with_metrics, track_trajectories, CheckpointMetrics, DegreeKind, DegreeRecord,
    Measure,
};
use concept_circuits::harness::{
    extract_concepts, group_means, metric_rows, prepare_data, run_interference_suite, run_pipeline, run_transfer_suite,
    usable_metrics, validate_config, write_atomic, write_csv, ExperimentConfig, MetricRow, PreparedData,
};
use concept_circuits::lm::{train_stage, Checkpoint, Parameters, Stage};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser)]
#[command(name = "concept-circuits", version, about = "Concept circuits across two-stage continual pretraining")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default config as TOML.
    InitConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate the renamed kb, dataset, bio corpus and vocabulary.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage and write its checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one circuit per test concept from a checkpoint.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Concept ids (default: every test concept).
        #[arg(long, value_delimiter = ',')]
        concepts: Vec<usize>,
        #[arg(long, default_value = "ckpt")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Graph metrics of every circuit JSON in a directory.
    Metrics {
        #[arg(long)]
        circuits: PathBuf,
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Analyze(Analyze),
    /// Joint training with high/moderate/weak relatedness groups.
    Interference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        groups: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// The 5x4 knowledge-category transfer matrix with its controls.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data, both stages, extraction at every checkpoint and the analyses.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Learning,
    Forgetting,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Logit,
    Logprob,
}

#[derive(Subcommand)]
enum Analyze {
    /// Per-concept degrees between two checkpoints.
    Degrees {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "logit")]
        measure: MeasureArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spearman correlation of degrees against one checkpoint's metrics.
    Correlate {
        #[arg(long)]
        degrees: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        /// Checkpoint label to take from the metrics file.
        #[arg(long)]
        checkpoint: String,
        #[arg(long, value_enum, default_value = "logit")]
        measure: MeasureArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-concept metric series over the stage-2 checkpoints.
    Trajectory {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "stage2")]
        stage: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error that should exit with the validation code.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    let violations = validate_config(&cfg);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Invalid(format!("{} is invalid:\n{}", path.display(), lines.join("\n"))).into());
    }
    Ok(cfg)
}

fn load_circuits(dir: &Path) -> anyhow::Result<Vec<Circuit>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| Circuit::load(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

#[derive(Deserialize)]
struct DegreeIn {
    concept_id: usize,
    kind: String,
    measure: String,
    value: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn measure_of(m: MeasureArg) -> Measure {
    match m {
        MeasureArg::Logit => Measure::Logit,
        MeasureArg::Logprob => Measure::LogProb,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::InitConfig { out } => {
            let text = ExperimentConfig::default().to_toml()?;
            match out {
                Some(p) => std::fs::write(&p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Validate { config } => {
            load_config(&config)?;
            println!("{} is valid", config.display());
        }
        Command::GenData { config, out } => {
            let cfg = load_config(&config)?;
            let data = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len)?;
            data.save(&out)?;
            let s = &data.dataset.stats;
            println!(
                "{} concepts, {} train / {} test samples, vocabulary {}",
                data.kb.concepts.len(),
                s.samples_train,
                s.samples_test,
                data.vocab.len()
            );
        }
        Command::Train {
            config,
            data,
            stage,
            init,
            out,
        } => {
            let cfg = load_config(&config)?;
            let data = PreparedData::load(&data)?;
            let model = cfg.model.with_vocab(data.vocab.len());
            let start = match init {
                Some(p) => Checkpoint::load(&p)?.params,
                None => Parameters::init(model, cfg.seeds.init)?,
            };
            if start.config != model {
                bail!("checkpoint shape {:?} does not match the config {:?}", start.config, model);
            }
            let (seqs, tc, st) = if stage == 1 {
                (data.train_sequences(), &cfg.stage1, Stage::Stage1)
            } else {
                (data.bio_sequences(), &cfg.stage2, Stage::Stage2)
            };
            std::fs::create_dir_all(&out)?;
            for ck in train_stage(&start, &seqs, tc, st)? {
                let path = out.join(format!("{}-step-{:06}.ckpt", st.as_str(), ck.step));
                ck.save(&path)?;
                println!("{} loss {:.6}", path.display(), ck.loss);
            }
        }
        Command::Extract {
            config,
            data,
            checkpoint,
            concepts,
            label,
            out,
        } => {
            let cfg = load_config(&config)?;
            let data = PreparedData::load(&data)?;
            let params = Checkpoint::load(&checkpoint)?.params;
            let graph = build_comp_graph(&params.config)?;
            let ids = if concepts.is_empty() {
                data.dataset.test_concepts.clone()
            } else {
                concepts
            };
            let circuits = extract_concepts(&params, &graph, &data, &ids, &label, &cfg.circuit, cfg.seeds.corruption)?;
            std::fs::create_dir_all(&out)?;
            for c in &circuits {
                let path = out.join(format!("concept-{:05}.json", c.concept_id));
                write_atomic(&path, serde_json::to_string_pretty(c)?.as_bytes())?;
                println!(
                    "concept {}: {} edges, faithfulness {:.3}{}",
                    c.concept_id,
                    c.k_edges,
                    c.faithfulness,
                    if c.flagged { " (flagged)" } else { "" }
                );
            }
        }
        Command::Metrics { circuits, step, out } => {
            let cs = load_circuits(&circuits)?;
            let Some(first) = cs.first() else {
                bail!("no circuit files in {}", circuits.display());
            };
            let graph = comp_graph_for_shape(first.n_layers, first.n_heads)?;
            let mut rows = Vec::new();
            for c in &cs {
                rows.extend(metric_rows(&c.checkpoint, Stage::Stage2, step, std::slice::from_ref(c), &graph)?);
            }
            write_csv(&out, &rows)?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
        Command::Analyze(a) => analyze(a)?,
        Command::Interference { config, k, groups, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(k) = k {
                cfg.analysis.k = k;
            }
            if !groups.is_empty() {
                cfg.interference.groups = groups;
            }
            let violations = validate_config(&cfg);
            if !violations.is_empty() {
                let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(Invalid(v.join("; ")).into());
            }
            let data = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len)?;
            let rows = run_interference_suite(&cfg, &data)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("interference.csv"), &rows)?;
            let means = group_means(&rows);
            write_csv(&out.join("interference_means.csv"), &means)?;
            for m in &means {
                println!(
                    "seed {} {:>8}: mean logit {:.4}, mean prob {:.4} over {} targets",
                    m.seed, m.group, m.mean_logit, m.mean_prob, m.n
                );
            }
        }
        Command::Transfer { config, steps, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = steps {
                cfg.transfer.train.steps = s;
            }
            let data = prepare_data(&cfg.data, &cfg.seeds, cfg.model.context_len)?;
            let rows = run_transfer_suite(&cfg, &data)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("transfer_matrix.csv"), &rows)?;
            for r in rows.iter().filter(|r| r.t.is_some()) {
                println!("seed {} {} -> {}: T = {:+.4}", r.seed, r.source, r.target, r.t.unwrap_or(f64::NAN));
            }
        }
        Command::Pipeline { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o.to_string_lossy().into_owned();
            }
            let manifest = run_pipeline(&cfg)?;
            let total: f64 = manifest.timings.iter().map(|t| t.seconds).sum();
            println!("{} files in {} ({total:.1} s)", manifest.files.len(), cfg.out_dir);
        }
    }
    Ok(())
}

fn analyze(a: Analyze) -> anyhow::Result<()> {
    match a {
        Analyze::Degrees {
            data,
            before,
            after,
            kind,
            measure,
            out,
        } => {
            let data = PreparedData::load(&data)?;
            let (a, b) = (Checkpoint::load(&before)?.params, Checkpoint::load(&after)?.params);
            let kind = match kind {
                KindArg::Learning => DegreeKind::Learning,
                KindArg::Forgetting => DegreeKind::Forgetting,
            };
            let rep = compute_degrees(&a, &b, &data.dataset.test, &data.kb, &data.vocab, kind, measure_of(measure))?;
            let (rows, _) = degree_rows(&[&rep]);
            write_csv(&out, &rows)?;
            println!("{} concepts, mean {:?}", rows.len(), rep.mean());
        }
        Analyze::Correlate {
            degrees,
            metrics,
            checkpoint,
            measure,
            seed,
            out,
        } => {
            let measure = measure_of(measure).as_str();
            let degs: Vec<DegreeIn> = read_csv(&degrees)?;
            let mut by_kind: BTreeMap<String, Vec<DegreeRecord>> = BTreeMap::new();
            for d in degs.into_iter().filter(|d| d.measure == measure) {
                let kind = match d.kind.as_str() {
                    "learning" => DegreeKind::Learning,
                    "forgetting" => DegreeKind::Forgetting,
                    other => bail!("unknown degree kind `{other}`"),
                };
                by_kind.entry(d.kind.clone()).or_default().push(DegreeRecord {
                    concept_id: d.concept_id,
                    kind,
                    value: d.value,
                    per_triple: Vec::new(),
                });
            }
            let rows: Vec<MetricRow> = read_csv(&metrics)?;
            let picked: Vec<MetricRow> = rows.into_iter().filter(|r| r.checkpoint == checkpoint).collect();
            if picked.is_empty() {
                bail!("no rows for checkpoint `{checkpoint}` in {}", metrics.display());
            }
            let m = usable_metrics(&picked);
            let mut out_rows = Vec::new();
            for (kind, records) in &by_kind {
                let res = correlate_degrees_with_metrics(records, &m, seed)?;
                out_rows.extend(correlation_rows(&format!("{kind}/{measure}/{checkpoint}"), &res));
            }
            write_csv(&out, &out_rows)?;
            for r in &out_rows {
                println!("{} {}: rho {:?} p {:?} (n = {})", r.analysis, r.metric, r.rho, r.p_value, r.n);
            }
        }
        Analyze::Trajectory { metrics, stage, out } => {
            let rows: Vec<MetricRow> = read_csv(&metrics)?;
            let mut by_step: BTreeMap<usize, Vec<MetricRow>> = BTreeMap::new();
            for r in rows.into_iter().filter(|r| r.stage == stage || (stage == "stage2" && r.checkpoint == "pi1")) {
                by_step.entry(if r.checkpoint == "pi1" { 0 } else { r.step }).or_default().push(r);
            }
            let cps: Vec<CheckpointMetrics> = by_step
                .iter()
                .map(|(&step, rs)| CheckpointMetrics {
                    step,
                    rows: usable_metrics(rs),
                })
                .collect();
            let (series, peaks) = trajectory_rows(&track_trajectories(&cps)?);
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("trajectories.csv"), &series)?;
            write_csv(&out.join("trajectory_peaks.csv"), &peaks)?;
            for p in peaks.iter().filter(|p| p.concept == "mean") {
                println!("{}: peak at step {} ({:.4})", p.metric, p.peak_step, p.peak_value);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
