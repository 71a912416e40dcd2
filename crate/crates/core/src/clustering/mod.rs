//! k-means and the label-agreement metrics used to score it.

mod hungarian;
mod kmeans;
mod metrics;

pub use hungarian::solve_min_cost_assignment;
pub use kmeans::{kmeans, kmeans_with, ClusteringResult, KMeansParams, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
pub use metrics::{ari, contingency, hungarian_accuracy, nmi, score, MetricReport};
