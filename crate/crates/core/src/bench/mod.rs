//! Experiment harness: the clustering grid, distance-percentile separation,
//! Sinkhorn/λ ablations and transductive prototype episodes.
//!
//! Work units (grid cells, seeds, episodes) fan out through [`crate::par`]
//! and are collected in input order, so every report is identical for any
//! worker count.

mod ablation;
mod episode;
mod grid;
mod separation;
mod stats;

pub use ablation::{ablate_lambda, ablate_sinkhorn_iters, AblationRow, CellSpec, DEFAULT_ABLATION_ITERS, DEFAULT_ABLATION_LAMBDAS};
pub use episode::{episode_prototype_eval, run_episodes, EpisodeReport};
pub use grid::{
    default_seeds, run_clustering_grid, summarize, CellSummary, GridResult, GridRow, GridSpec, Method, DEFAULT_DIMS,
    DEFAULT_SIGMAS, GRID_CSV_HEADER,
};
pub use separation::{
    distance_percentile_analysis, min_rank_percentiles, separation_report, PercentileStats, SeparationEntry,
    SeparationReport,
};
pub use stats::{mean, sign_test_p_value, std_dev};

use crate::clustering::{kmeans, score, MetricReport};
use crate::error::Result;
use crate::matrix::Mat;
use crate::sot::{sot_transform, SotConfig};
use crate::synth::LabeledDataset;

/// Clusters `features` with k-means (k = number of true classes) and scores
/// the result against the labels.
pub(crate) fn cluster_and_score(features: &Mat, labels: &[usize], k: usize, seed: u64, restarts: usize) -> Result<MetricReport> {
    let r = kmeans(features, k, seed, restarts)?;
    score(&r.assignments, labels)
}

/// SOT rows of the dataset's features.
pub(crate) fn sot_features(ds: &LabeledDataset, cfg: &SotConfig) -> Result<Mat> {
    Ok(sot_transform(&ds.features, cfg)?.w)
}
