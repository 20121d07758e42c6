// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::metrics::MetricVector;
use crate::{Error, Result};

/// Circuit metrics of every concept at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub step: usize,
    pub rows: Vec<(usize, MetricVector)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// `None` where no circuit was extracted.
    pub metrics: Option<MetricVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub concept_id: usize,
    pub points: Vec<TrajectoryPoint>,
}

/// Where a metric series peaks and whether it declines afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    /// `None` for the across-concept mean series.
    pub concept_id: Option<usize>,
    pub metric: String,
    pub peak_step: usize,
    pub peak_value: f64,
    pub post_peak_mean: Option<f64>,
    /// `post_peak_mean < peak_value`; `None` when the peak is the last point.
    pub falls_after_peak: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub steps: Vec<usize>,
    pub series: Vec<TrajectorySeries>,
    /// Per step, the mean of each metric over concepts present there.
    pub mean_series: Vec<(usize, Option<MetricVector>)>,
    pub peaks: Vec<PeakSummary>,
}

/// First maximum of `(step, value)` points and the mean after it.
pub fn peak_summary(concept_id: Option<usize>, metric: &str, points: &[(usize, f64)]) -> Option<PeakSummary> {
    let (imax, &(peak_step, peak_value)) = points
        .iter()
        .enumerate()
        .fold(None::<(usize, &(usize, f64))>, |best, (i, p)| match best {
            Some((_, b)) if b.1 >= p.1 => best,
            _ => Some((i, p)),
        })?;
    let after = &points[imax + 1..];
    let post_peak_mean = (!after.is_empty()).then(|| after.iter().map(|p| p.1).sum::<f64>() / after.len() as f64);
    Some(PeakSummary {
        concept_id,
        metric: metric.to_string(),
        peak_step,
        peak_value,
        post_peak_mean,
        falls_after_peak: post_peak_mean.map(|m| m < peak_value),
    })
}

/// Orders metric series per concept across checkpoints and summarizes each
/// metric's peak. Missing circuits are recorded as gaps.
pub fn track_trajectories(checkpoints: &[CheckpointMetrics]) -> Result<TrajectoryReport> {
    if checkpoints.len() < 2 {
        return Err(Error::invalid("trajectories need at least two checkpoints"));
    }
    let steps: Vec<usize> = checkpoints.iter().map(|c| c.step).collect();
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("checkpoint steps must be strictly increasing"));
    }
    let lookup: Vec<BTreeMap<usize, MetricVector>> = checkpoints.iter().map(|c| c.rows.iter().copied().collect()).collect();
    let concepts: BTreeSet<usize> = lookup.iter().flat_map(|m| m.keys().copied()).collect();
    let series: Vec<TrajectorySeries> = concepts
        .iter()
        .map(|&concept_id| TrajectorySeries {
            concept_id,
            points: steps
                .iter()
                .zip(&lookup)
                .map(|(&step, m)| TrajectoryPoint {
                    step,
                    metrics: m.get(&concept_id).copied(),
                })
                .collect(),
        })
        .collect();
    let mean_series: Vec<(usize, Option<MetricVector>)> = steps
        .iter()
        .zip(&lookup)
        .map(|(&step, m)| {
            if m.is_empty() {
                return (step, None);
            }
            let n = m.len() as f64;
            let mut acc = [0.0; 4];
            for v in m.values() {
                for (a, x) in acc.iter_mut().zip(v.as_array()) {
                    *a += x;
                }
            }
            (
                step,
                Some(MetricVector {
                    centrality_std: acc[0] / n,
                    density: acc[1] / n,
                    global_efficiency: acc[2] / n,
                    avg_kcore: acc[3] / n,
                }),
            )
        })
        .collect();

    let mut peaks = Vec::new();
    for (i, name) in MetricVector::NAMES.iter().enumerate() {
        let pts: Vec<(usize, f64)> = mean_series
            .iter()
            .filter_map(|(s, m)| m.map(|m| (*s, m.as_array()[i])))
            .collect();
        peaks.extend(peak_summary(None, name, &pts));
    }
    for s in &series {
        for (i, name) in MetricVector::NAMES.iter().enumerate() {
            let pts: Vec<(usize, f64)> = s
                .points
                .iter()
                .filter_map(|p| p.metrics.map(|m| (p.step, m.as_array()[i])))
                .collect();
            peaks.extend(peak_summary(Some(s.concept_id), name, &pts));
        }
    }
    Ok(TrajectoryReport {
        steps,
        series,
        mean_series,
        peaks,
    })
}
