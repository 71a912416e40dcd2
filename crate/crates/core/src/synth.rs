//! Clustered data on the unit sphere, PCA reduction and few-shot episode
//! sampling.
//!
//! Randomness: a dataset seed drives ChaCha8 on stream 0 for the cluster
//! centers and on stream `1 + c` for the noise of cluster `c`. Episodes use
//! their own seed on stream 0.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SotError};
use crate::matrix::{l2_norm, FeatureMatrix, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereTaskSpec {
    /// Number of clusters.
    pub k: usize,
    pub points_per_cluster: usize,
    /// Ambient dimension.
    pub dim: usize,
    /// Per-coordinate standard deviation of the Gaussian perturbation.
    pub sigma: f64,
    pub seed: u64,
    /// PCA target applied when `dim > pca_dim`; 0 disables reduction.
    pub pca_dim: usize,
}

impl Default for SphereTaskSpec {
    fn default() -> Self {
        SphereTaskSpec {
            k: 10,
            points_per_cluster: 20,
            dim: 100,
            sigma: 0.3,
            seed: 42,
            pca_dim: 50,
        }
    }
}

impl SphereTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.points_per_cluster == 0 {
            return Err(SotError::InvalidSpec("k and points_per_cluster must be >= 1".into()));
        }
        if self.k * self.points_per_cluster < 2 {
            return Err(SotError::InvalidSpec("need at least two points".into()));
        }
        if self.dim < 2 {
            return Err(SotError::InvalidSpec(format!("dim must be >= 2, got {}", self.dim)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SotError::InvalidSpec(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.k * self.points_per_cluster
    }

    /// Whether [`prepare_dataset`] reduces this task with PCA.
    pub fn uses_pca(&self) -> bool {
        self.pca_dim > 0 && self.dim > self.pca_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        if features.n() != labels.len() {
            return Err(SotError::LengthMismatch(features.n(), labels.len()));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Item indices per label, labels ascending, indices ascending.
    pub fn class_indices(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            map.entry(l).or_default().push(i);
        }
        map
    }

    pub fn n_classes(&self) -> usize {
        self.class_indices().len()
    }

    pub fn select(&self, idx: &[usize]) -> Result<LabeledDataset> {
        LabeledDataset::new(
            FeatureMatrix::new(self.features.mat().select_rows(idx))?,
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn normalized(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(self.features.normalize_rows()?, self.labels.clone())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = l2_norm(&v);
    if norm <= 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Uniform random cluster centers on the sphere, points perturbed by
/// isotropic Gaussian noise and projected back onto the sphere. Rows are
/// cluster-major: cluster `c` occupies rows `c·ppc .. (c+1)·ppc`.
pub fn generate_sphere_dataset(spec: &SphereTaskSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut center_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    center_rng.set_stream(0);
    let centers: Vec<Vec<f64>> = (0..spec.k)
        .map(|_| loop {
            if let Some(c) = unit(gaussian_vec(&mut center_rng, spec.dim)) {
                break c;
            }
        })
        .collect();

    let mut data = Vec::with_capacity(spec.n() * spec.dim);
    let mut labels = Vec::with_capacity(spec.n());
    for (c, center) in centers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1 + c as u64);
        for _ in 0..spec.points_per_cluster {
            let point = loop {
                let noisy: Vec<f64> = center
                    .iter()
                    .map(|&x| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x + spec.sigma * z
                    })
                    .collect();
                if let Some(p) = unit(noisy) {
                    break p;
                }
            };
            data.extend(point);
            labels.push(c);
        }
    }
    LabeledDataset::new(FeatureMatrix::new(Mat::new(spec.n(), spec.dim, data)?)?, labels)
}

/// A fitted PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// target×d, orthonormal rows (zero rows for null directions).
    pub components: Mat,
    /// Variance along each retained component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Total variance of the centered data.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn retained_fraction(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    /// Maps projected scores back to the original space.
    pub fn reconstruct(&self, scores: &Mat) -> Mat {
        let d = self.mean.len();
        let mut out = Mat::zeros(scores.rows(), d);
        for i in 0..scores.rows() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for (k, &s) in scores.row(i).iter().enumerate() {
                for (o, c) in row.iter_mut().zip(self.components.row(k)) {
                    *o += s * c;
                }
            }
        }
        out
    }
}

/// Fits PCA on `x` via the n×n Gram matrix of the centered rows and returns
/// the model plus the n×target scores.
///
/// Each Gram eigenvector is sign-fixed so its largest-magnitude entry is
/// positive, which makes the projection commute with row permutations.
pub fn fit_pca(x: &Mat, target: usize) -> Result<(PcaModel, Mat)> {
    let (n, d) = (x.rows(), x.cols());
    let limit = n.min(d);
    if target == 0 || target > limit {
        return Err(SotError::TargetTooLarge { target, limit });
    }
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let denom = (n.max(2) - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;

    let mut scores = Mat::zeros(n, target);
    let mut components = Mat::zeros(target, d);
    let mut explained_variance = Vec::with_capacity(target);
    for (k, &idx) in order.iter().take(target).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let mut a: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = a
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v.abs() > bv.abs() { (i, v) } else { (bi, bv) });
        if lead.1 < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
        }
        let s = lambda.sqrt();
        for i in 0..n {
            scores.set(i, k, a[i] * s);
        }
        if s > 1e-12 * total_variance.sqrt().max(1.0) {
            for j in 0..d {
                let dotv: f64 = (0..n).map(|i| centered[(i, j)] * a[i]).sum();
                components.set(k, j, dotv / s);
            }
        }
        explained_variance.push(lambda / denom);
    }
    Ok((
        PcaModel {
            mean,
            components,
            explained_variance,
            total_variance,
        },
        scores,
    ))
}

/// Projects the dataset onto its top `target_dim` principal directions.
/// Rows are not renormalized.
pub fn pca_reduce(ds: &LabeledDataset, target_dim: usize) -> Result<LabeledDataset> {
    let (_, scores) = fit_pca(ds.features.mat(), target_dim)?;
    LabeledDataset::new(FeatureMatrix::new(scores)?, ds.labels.clone())
}

/// The dataset both benchmark arms consume: generated, PCA-reduced when
/// `dim > pca_dim`, and unit-normalized afterwards.
pub fn prepare_dataset(spec: &SphereTaskSpec) -> Result<LabeledDataset> {
    let ds = generate_sphere_dataset(spec)?;
    if spec.uses_pca() {
        pca_reduce(&ds, spec.pca_dim)?.normalized()
    } else {
        Ok(ds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            n_way: 5,
            k_shot: 5,
            q_query: 15,
            seed: 42,
        }
    }
}

/// Support and query sets; labels are episode-local `0..n_way`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: LabeledDataset,
    pub query: LabeledDataset,
    /// Source-dataset rows of the support set.
    pub support_idx: Vec<usize>,
    /// Source-dataset rows of the query set.
    pub query_idx: Vec<usize>,
}

pub fn sample_episode(ds: &LabeledDataset, spec: &EpisodeSpec) -> Result<Episode> {
    if spec.n_way == 0 || spec.k_shot == 0 || spec.q_query == 0 {
        return Err(SotError::InvalidSpec("n_way, k_shot and q_query must be >= 1".into()));
    }
    let classes = ds.class_indices();
    if spec.n_way > classes.len() {
        return Err(SotError::InvalidSpec(format!(
            "{}-way episode from a {}-class dataset",
            spec.n_way,
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = classes.keys().copied().collect();
    labels.shuffle(&mut rng);
    labels.truncate(spec.n_way);

    let need = spec.k_shot + spec.q_query;
    for &l in &labels {
        let available = classes[&l].len();
        if available < need {
            return Err(SotError::InsufficientPoints {
                class: l,
                available,
                needed: need,
            });
        }
    }
    let mut support_idx = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query_idx = Vec::with_capacity(spec.n_way * spec.q_query);
    let mut support_labels = Vec::with_capacity(support_idx.capacity());
    let mut query_labels = Vec::with_capacity(query_idx.capacity());
    for (local, &l) in labels.iter().enumerate() {
        let mut members = classes[&l].clone();
        members.shuffle(&mut rng);
        support_idx.extend_from_slice(&members[..spec.k_shot]);
        query_idx.extend_from_slice(&members[spec.k_shot..need]);
        support_labels.extend(std::iter::repeat_n(local, spec.k_shot));
        query_labels.extend(std::iter::repeat_n(local, spec.q_query));
    }
    let pick = |idx: &[usize], labels: Vec<usize>| -> Result<LabeledDataset> {
        LabeledDataset::new(FeatureMatrix::new(ds.features.mat().select_rows(idx))?, labels)
    };
    Ok(Episode {
        support: pick(&support_idx, support_labels)?,
        query: pick(&query_idx, query_labels)?,
        support_idx,
        query_idx,
    })
}
