// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration, the end-to-end two-stage pipeline and its
//! bookkeeping.
//!
//! A run directory looks like
//!
//! ```text
//! config.toml            replayable config snapshot
//! data/                  kb, templates, dataset, bio corpus, vocabulary
//! checkpoints/           stage1-step-*.ckpt, stage2-step-*.ckpt (+ .json sidecars)
//! circuits/<checkpoint>/ one JSON circuit per test concept
//! metrics.csv            graph metrics of every circuit
//! degrees.csv, degree_triples.csv, degree_histograms.csv
//! correlations.csv, trajectories.csv, trajectory_peaks.csv
//! summary.json
//! manifest.json          sha256 of every other file, timings
//! ```
//!
//! Every file except `manifest.json` is a pure function of the config.

mod config;
mod data;
mod pipeline;
mod suites;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

pub use config::{
    validate_config, AnalysisConfig, CircuitOptions, DataConfig, ExperimentConfig, InterferenceConfig, ModelShape,
    SeedConfig, TransferConfig, Violation,
};
pub use data::{load_kb, prepare_data, subset_concepts, PreparedData};
pub use pipeline::{
    concept_samples, extract_concepts, metric_rows, pairs_from_samples, run_pipeline, usable_metrics, MetricRow,
    RunManifest, RunSummary, StepTiming, CONFIG_FILE, MANIFEST_FILE, SUMMARY_FILE,
};
pub use suites::{group_means, relatedness_method, run_interference_suite, run_transfer_suite, GroupMean};

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV with a header row, written atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Digest of every regular file under `root`, keyed by `/`-separated
/// relative path. Top-level names in `skip` are left out.
pub fn digest_tree(root: &Path, skip: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let rel = path.strip_prefix(root).expect("under root");
            let key: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            if key.len() == 1 && skip.contains(&key[0].as_str()) {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(key.join("/"), sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}
