//! Where intra-class pairs fall in the ranking of all pairwise distances,
//! before and after the transform.

use serde::{Deserialize, Serialize};

use super::{mean, sot_features, std_dev};
use crate::error::{Result, SotError};
use crate::matrix::{sq_euclidean, Mat};
use crate::par;
use crate::sot::SotConfig;
use crate::synth::{prepare_dataset, LabeledDataset, SphereTaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileStats {
    pub intra_mean: f64,
    pub intra_std: f64,
    pub inter_mean: f64,
    pub inter_std: f64,
}

impl PercentileStats {
    fn from_split(intra: &[f64], inter: &[f64]) -> Self {
        PercentileStats {
            intra_mean: mean(intra),
            intra_std: std_dev(intra),
            inter_mean: mean(inter),
            inter_std: std_dev(inter),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationEntry {
    pub original: PercentileStats,
    pub sot: PercentileStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `(dim, sigma, entry)` in input order; percentiles pooled over seeds.
    pub entries: Vec<(usize, f64, SeparationEntry)>,
}

/// Percentile rank (0..=100) of every value within `values`. Tied values
/// share the lowest rank, so the pooled minimum is always at 0.
pub fn min_rank_percentiles(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    if m <= 1 {
        return vec![0.0; m];
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; m];
    let scale = 100.0 / (m - 1) as f64;
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && values[order[end]] == values[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            out[i] = start as f64 * scale;
        }
        start = end;
    }
    out
}

/// Percentiles of all `n(n−1)/2` pairwise Euclidean distances, split into
/// same-label and different-label pairs.
fn split_percentiles(x: &Mat, labels: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows();
    let per_row: Vec<Vec<f64>> = par::map_range(n, |i| {
        ((i + 1)..n).map(|j| sq_euclidean(x.row(i), x.row(j)).sqrt()).collect()
    });
    let dists: Vec<f64> = per_row.into_iter().flatten().collect();
    let pct = min_rank_percentiles(&dists);
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                intra.push(pct[k]);
            } else {
                inter.push(pct[k]);
            }
            k += 1;
        }
    }
    (intra, inter)
}

struct RawSplit {
    original: (Vec<f64>, Vec<f64>),
    sot: (Vec<f64>, Vec<f64>),
}

fn raw_analysis(ds: &LabeledDataset, cfg: &SotConfig) -> Result<RawSplit> {
    if ds.n_classes() < 2 {
        return Err(SotError::SingleClass);
    }
    let w = sot_features(ds, cfg)?;
    Ok(RawSplit {
        original: split_percentiles(ds.features.mat(), &ds.labels),
        sot: split_percentiles(&w, &ds.labels),
    })
}

pub fn distance_percentile_analysis(ds: &LabeledDataset, cfg: &SotConfig) -> Result<SeparationEntry> {
    let raw = raw_analysis(ds, cfg)?;
    Ok(SeparationEntry {
        original: PercentileStats::from_split(&raw.original.0, &raw.original.1),
        sot: PercentileStats::from_split(&raw.sot.0, &raw.sot.1),
    })
}

/// Runs the analysis on generated data for every (dim, sigma). Each seed's
/// distances are ranked within that seed's dataset; the resulting
/// percentiles are pooled across seeds before taking mean and std.
pub fn separation_report(
    dims: &[usize],
    sigmas: &[f64],
    seeds: &[u64],
    task: &SphereTaskSpec,
    cfg: &SotConfig,
) -> Result<SeparationReport> {
    let cells: Vec<(usize, f64)> = dims
        .iter()
        .flat_map(|&d| sigmas.iter().map(move |&s| (d, s)))
        .collect();
    let entries = par::map_slice(&cells, |&(dim, sigma)| -> Result<(usize, f64, SeparationEntry)> {
        let splits = par::map_slice(seeds, |&seed| {
            let ds = prepare_dataset(&SphereTaskSpec { dim, sigma, seed, ..*task })?;
            raw_analysis(&ds, cfg)
        });
        let mut pooled = RawSplit {
            original: (Vec::new(), Vec::new()),
            sot: (Vec::new(), Vec::new()),
        };
        for s in splits {
            let s = s?;
            pooled.original.0.extend(s.original.0);
            pooled.original.1.extend(s.original.1);
            pooled.sot.0.extend(s.sot.0);
            pooled.sot.1.extend(s.sot.1);
        }
        Ok((
            dim,
            sigma,
            SeparationEntry {
                original: PercentileStats::from_split(&pooled.original.0, &pooled.original.1),
                sot: PercentileStats::from_split(&pooled.sot.0, &pooled.sot.1),
            },
        ))
    });
    Ok(SeparationReport {
        entries: entries.into_iter().collect::<Result<_>>()?,
    })
}
