//! Self-optimal-transport feature transform and the tooling around it.
//!
//! The transform turns an n×d feature set into an n×n embedding: each row is
//! that item's entropic transport plan to every other item, computed with the
//! self-match diagonal forbidden. Around it sit k-means/metric utilities, a
//! synthetic sphere-cluster generator and a reproducible experiment harness.

pub mod bench;
pub mod clustering;
pub mod error;
pub mod io;
pub mod matrix;
pub mod par;
pub mod sinkhorn;
pub mod sot;
pub mod synth;

pub use error::{Result, SotError};
pub use matrix::{DistanceMatrix, FeatureMatrix, Mat};
pub use sinkhorn::{sinkhorn_solve, SinkhornParams, TransportPlan};
pub use sot::{sot_transform, SotConfig, SotEmbedding};
