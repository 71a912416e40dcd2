use serde::{Deserialize, Serialize};

use super::{cluster_and_score, mean, sot_features};
use crate::clustering::{MetricReport, DEFAULT_RESTARTS};
use crate::error::{Result, SotError};
use crate::par;
use crate::sot::SotConfig;
use crate::synth::{prepare_dataset, LabeledDataset, SphereTaskSpec};

pub const DEFAULT_ABLATION_ITERS: [usize; 5] = [1, 2, 4, 8, 16];
pub const DEFAULT_ABLATION_LAMBDAS: [f64; 6] = [0.01, 0.025, 0.1, 0.25, 1.0, 4.0];

/// One (dim, sigma) cell evaluated over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    /// `seed` is overridden by each entry of `seeds`.
    pub task: SphereTaskSpec,
    pub seeds: Vec<u64>,
    pub sot: SotConfig,
    pub kmeans_restarts: usize,
}

impl Default for CellSpec {
    /// d = 100, σ = 0.3, ten seeds, default SOT settings.
    fn default() -> Self {
        CellSpec {
            task: SphereTaskSpec::default(),
            seeds: super::default_seeds(),
            sot: SotConfig::default(),
            kmeans_restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Swept parameter value (sweep count or λ).
    pub value: f64,
    /// Seed-averaged metrics.
    pub mean: MetricReport,
    pub per_seed: Vec<MetricReport>,
}

fn datasets(cell: &CellSpec) -> Result<Vec<LabeledDataset>> {
    if cell.seeds.is_empty() {
        return Err(SotError::InvalidSpec("cell needs at least one seed".into()));
    }
    par::map_slice(&cell.seeds, |&seed| prepare_dataset(&SphereTaskSpec { seed, ..cell.task }))
        .into_iter()
        .collect()
}

fn sweep(cell: &CellSpec, values: &[f64], configure: impl Fn(f64) -> SotConfig + Sync) -> Result<Vec<AblationRow>> {
    let data = datasets(cell)?;
    values
        .iter()
        .map(|&value| {
            let cfg = configure(value);
            cfg.sinkhorn.validate()?;
            let per_seed: Vec<MetricReport> = par::map_range(data.len(), |i| {
                let w = sot_features(&data[i], &cfg)?;
                cluster_and_score(&w, &data[i].labels, cell.task.k, cell.seeds[i], cell.kmeans_restarts)
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let avg = |f: fn(&MetricReport) -> f64| mean(&per_seed.iter().map(f).collect::<Vec<_>>());
            Ok(AblationRow {
                value,
                mean: MetricReport {
                    accuracy: avg(|m| m.accuracy),
                    nmi: avg(|m| m.nmi),
                    ari: avg(|m| m.ari),
                },
                per_seed,
            })
        })
        .collect()
}

/// Re-runs the SOT arm of a cell varying only the Sinkhorn sweep count.
pub fn ablate_sinkhorn_iters(cell: &CellSpec, iters: &[usize]) -> Result<Vec<AblationRow>> {
    let values: Vec<f64> = iters.iter().map(|&i| i as f64).collect();
    sweep(cell, &values, |v| cell.sot.with_sweeps(v as usize))
}

/// Re-runs the SOT arm of a cell varying only λ.
pub fn ablate_lambda(cell: &CellSpec, lambdas: &[f64]) -> Result<Vec<AblationRow>> {
    sweep(cell, lambdas, |v| cell.sot.with_lambda(v))
}
