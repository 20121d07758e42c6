// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV reports. Undefined values are written as empty fields.

use std::path::Path;

use serde::Serialize;

use super::degrees::{DegreeReport, MetricCorrelation};
use super::experiments::TransferMatrix;
use super::relatedness::GroupKind;
use super::stats::PValueMethod;
use super::trajectory::TrajectoryReport;
use crate::Result;

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    pub concept_id: usize,
    pub kind: &'static str,
    pub measure: &'static str,
    pub value: f64,
    pub n_triples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleDegreeRow {
    pub concept_id: usize,
    pub triple_id: usize,
    pub kind: &'static str,
    pub measure: &'static str,
    pub before: f64,
    pub after: f64,
    pub value: f64,
}

pub fn degree_rows(reports: &[&DegreeReport]) -> (Vec<DegreeRow>, Vec<TripleDegreeRow>) {
    let mut concepts = Vec::new();
    let mut triples = Vec::new();
    for rep in reports {
        for r in &rep.records {
            concepts.push(DegreeRow {
                concept_id: r.concept_id,
                kind: rep.kind.as_str(),
                measure: rep.measure.as_str(),
                value: r.value,
                n_triples: r.per_triple.len(),
            });
            for t in &r.per_triple {
                triples.push(TripleDegreeRow {
                    concept_id: t.concept_id,
                    triple_id: t.triple_id,
                    kind: rep.kind.as_str(),
                    measure: rep.measure.as_str(),
                    before: t.before,
                    after: t.after,
                    value: t.value,
                });
            }
        }
    }
    (concepts, triples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    /// Free-form label of the join, e.g. `forgetting/logit/pre`.
    pub analysis: String,
    pub metric: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub method: &'static str,
}

pub fn correlation_rows(analysis: &str, results: &[MetricCorrelation]) -> Vec<CorrelationRow> {
    results
        .iter()
        .map(|c| CorrelationRow {
            analysis: analysis.to_string(),
            metric: c.metric.clone(),
            n: c.result.n,
            rho: c.result.rho,
            p_value: c.result.p_value,
            method: match c.result.method {
                PValueMethod::TApprox => "t_approx",
                PValueMethod::Permutation => "permutation",
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    /// Concept id, or `mean` for the across-concept average.
    pub concept: String,
    pub step: usize,
    pub centrality_std: Option<f64>,
    pub density: Option<f64>,
    pub global_efficiency: Option<f64>,
    pub avg_kcore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakRow {
    pub concept: String,
    pub metric: String,
    pub peak_step: usize,
    pub peak_value: f64,
    pub post_peak_mean: Option<f64>,
    pub falls_after_peak: Option<bool>,
}

pub fn trajectory_rows(report: &TrajectoryReport) -> (Vec<TrajectoryRow>, Vec<PeakRow>) {
    let row = |concept: String, step: usize, m: Option<crate::metrics::MetricVector>| TrajectoryRow {
        concept,
        step,
        centrality_std: m.map(|m| m.centrality_std),
        density: m.map(|m| m.density),
        global_efficiency: m.map(|m| m.global_efficiency),
        avg_kcore: m.map(|m| m.avg_kcore),
    };
    let mut rows: Vec<TrajectoryRow> = report
        .mean_series
        .iter()
        .map(|(s, m)| row("mean".into(), *s, *m))
        .collect();
    for s in &report.series {
        rows.extend(s.points.iter().map(|p| row(s.concept_id.to_string(), p.step, p.metrics)));
    }
    let peaks = report
        .peaks
        .iter()
        .map(|p| PeakRow {
            concept: p.concept_id.map_or_else(|| "mean".to_string(), |c| c.to_string()),
            metric: p.metric.clone(),
            peak_step: p.peak_step,
            peak_value: p.peak_value,
            post_peak_mean: p.post_peak_mean,
            falls_after_peak: p.falls_after_peak,
        })
        .collect();
    (rows, peaks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterferenceRow {
    pub seed: u64,
    pub target: usize,
    pub group: &'static str,
    pub avg_logit: f64,
    pub avg_prob: f64,
    pub n_eval: usize,
    pub n_train: usize,
}

impl InterferenceRow {
    pub fn new(seed: u64, target: usize, group: GroupKind, o: &super::experiments::InterferenceOutcome) -> Self {
        InterferenceRow {
            seed,
            target,
            group: group.as_str(),
            avg_logit: o.avg_logit,
            avg_prob: o.avg_prob,
            n_eval: o.n_eval,
            n_train: o.n_train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRow {
    pub seed: u64,
    /// Source category, or `BIO` for a control run.
    pub source: &'static str,
    pub target: &'static str,
    pub logit_after_source: f64,
    pub logit_after_bio: f64,
    pub t: Option<f64>,
}

pub fn transfer_rows(seed: u64, m: &TransferMatrix) -> Vec<TransferRow> {
    let mut rows: Vec<TransferRow> = m
        .cells
        .iter()
        .map(|c| TransferRow {
            seed,
            source: c.source.as_str(),
            target: c.target.as_str(),
            logit_after_source: c.logit_after_source,
            logit_after_bio: c.logit_after_bio,
            t: c.t,
        })
        .collect();
    rows.extend(m.controls.iter().map(|c| TransferRow {
        seed,
        source: "BIO",
        target: c.target.as_str(),
        logit_after_source: c.logit,
        logit_after_bio: c.logit,
        t: None,
    }));
    rows
}
