// SPDX-License-Identifier: MIT OR Apache-2.0

//! Learning and forgetting degrees, rank correlations, metric trajectories
//! and the grouped training experiments.

mod degrees;
mod experiments;
mod relatedness;
pub mod report;
mod stats;
mod trajectory;

pub use degrees::{
    compute_degrees, concept_degree, correlate_degrees_with_metrics, histogram, knowledge_degree, DegreeKind, DegreeRecord,
    DegreeReport, HistogramBin, Measure, MetricCorrelation, TripleDegree,
};
pub use experiments::{
    mean_logit_and_prob, paired_transferability, run_interference, run_transfer_matrix, ControlRun, InterferenceOutcome,
    TransferCell, TransferMatrix,
};
pub use relatedness::{
    concept_features, cosine, load_concept_vectors, relatedness_groups, set_cosine, similarity_ranking, GroupKind, Relatedness,
    RelatednessGroups,
};
pub use stats::{
    average_ranks, pearson, spearman, CorrelationResult, PValueMethod, EXACT_PERMUTATION_MAX_N, PERMUTATION_DRAWS,
    T_APPROX_MIN_N,
};
pub use trajectory::{peak_summary, track_trajectories, CheckpointMetrics, PeakSummary, TrajectoryPoint, TrajectoryReport, TrajectorySeries};
