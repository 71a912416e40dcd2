//! The self-optimal-transport feature transform.
//!
//! Features are unit-normalized, turned into masked squared distances and
//! matched against themselves with Sinkhorn. Row `i` of the resulting plan
//! is the new embedding of item `i`: a distribution over the other items,
//! with the self-coordinate set to one.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SotError};
use crate::matrix::{cosine_similarity, pairwise_sq_distances, DistanceMatrix, FeatureMatrix, Mat};
use crate::sinkhorn::{marginal_error, sinkhorn_solve, SinkhornParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SotConfig {
    pub sinkhorn: SinkhornParams,
    /// Replace the plan by `(W + Wᵀ) / 2`.
    pub symmetrize: bool,
    /// Replace the zero diagonal by ones.
    pub set_unit_diagonal: bool,
}

impl Default for SotConfig {
    fn default() -> Self {
        SotConfig {
            sinkhorn: SinkhornParams::default(),
            symmetrize: true,
            set_unit_diagonal: true,
        }
    }
}

impl SotConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.sinkhorn.lambda = lambda;
        self
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sinkhorn.max_sweeps = sweeps;
        self
    }
}

/// n×n embedding; row `i` re-embeds item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SotEmbedding {
    pub w: Mat,
    pub config: SotConfig,
    /// Marginal error of the off-diagonal part after symmetrization.
    pub marginal_err: f64,
}

impl SotEmbedding {
    pub fn n(&self) -> usize {
        self.w.rows()
    }

    /// The plan with its diagonal zeroed, i.e. `W − I` in the unit-diagonal
    /// configuration.
    pub fn off_diagonal(&self) -> Mat {
        let mut m = self.w.clone();
        for i in 0..m.rows() {
            m.set(i, i, 0.0);
        }
        m
    }
}

/// Full pipeline from raw features.
pub fn sot_transform(features: &FeatureMatrix, cfg: &SotConfig) -> Result<SotEmbedding> {
    if features.n() < 2 {
        return Err(SotError::InvalidShape {
            rows: features.n(),
            cols: features.d(),
            reason: "transform needs at least two items",
        });
    }
    let unit = features.normalize_rows()?;
    let dist = pairwise_sq_distances(&cosine_similarity(&unit)?);
    sot_transform_from_distances(&dist, cfg)
}

/// Pipeline starting from precomputed distances. An unmasked matrix is
/// masked here; a masked one is used as is.
pub fn sot_transform_from_distances(dist: &DistanceMatrix, cfg: &SotConfig) -> Result<SotEmbedding> {
    let n = dist.n();
    if n < 2 {
        return Err(SotError::InvalidShape {
            rows: n,
            cols: n,
            reason: "transform needs at least two items",
        });
    }
    let asym = dist.mat().asymmetry();
    if asym > crate::matrix::SYMMETRY_TOL {
        return Err(SotError::Asymmetric(asym));
    }
    let masked = if dist.is_masked() {
        dist.clone()
    } else {
        dist.clone().mask_diagonal()?
    };
    let plan = sinkhorn_solve(&masked, &cfg.sinkhorn)?;
    let mut w = plan.w;
    if cfg.symmetrize {
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (w.get(i, j) + w.get(j, i));
                w.set(i, j, avg);
                w.set(j, i, avg);
            }
        }
    }
    let marginal_err = marginal_error(&w);
    if cfg.set_unit_diagonal {
        for i in 0..n {
            w.set(i, i, 1.0);
        }
    }
    Ok(SotEmbedding {
        w,
        config: *cfg,
        marginal_err,
    })
}

/// Coordinates of `|w_i − w_j|` split into the mutual ("direct") part and
/// the third-party ("indirect") part.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceDecomposition {
    /// `1 − w_ij`, the value of coordinates `i` and `j`.
    pub direct: f64,
    /// `|w_ik − w_jk|` for every `k ∉ {i, j}`, in increasing `k`.
    pub indirect: Vec<f64>,
}

pub fn embedded_difference_decomposition(
    emb: &SotEmbedding,
    i: usize,
    j: usize,
) -> Result<DifferenceDecomposition> {
    let n = emb.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(SotError::IndexOutOfRange { index: idx, n });
        }
    }
    if i == j {
        return Err(SotError::ConfigMismatch("decomposition needs i != j"));
    }
    if !(emb.config.symmetrize && emb.config.set_unit_diagonal) {
        return Err(SotError::ConfigMismatch(
            "decomposition needs a symmetrized, unit-diagonal embedding",
        ));
    }
    let (wi, wj) = (emb.w.row(i), emb.w.row(j));
    let indirect = (0..n)
        .filter(|&k| k != i && k != j)
        .map(|k| (wi[k] - wj[k]).abs())
        .collect();
    Ok(DifferenceDecomposition {
        direct: 1.0 - emb.w.get(i, j),
        indirect,
    })
}

/// `|w_i − w_j|` coordinate-wise.
pub fn embedded_abs_difference(emb: &SotEmbedding, i: usize, j: usize) -> Vec<f64> {
    emb.w
        .row(i)
        .iter()
        .zip(emb.w.row(j))
        .map(|(a, b)| (a - b).abs())
        .collect()
}
