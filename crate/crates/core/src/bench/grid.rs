use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{cluster_and_score, mean, sot_features};
use crate::clustering::{MetricReport, DEFAULT_RESTARTS};
use crate::error::{Result, SotError};
use crate::io::format_f64;
use crate::par;
use crate::sot::SotConfig;
use crate::synth::{prepare_dataset, SphereTaskSpec};

pub const DEFAULT_DIMS: [usize; 5] = [10, 32, 100, 316, 1000];
pub const DEFAULT_SIGMAS: [f64; 8] = [0.10, 0.15, 0.19, 0.23, 0.29, 0.40, 0.55, 0.75];
pub const GRID_CSV_HEADER: &str = "dim,sigma,seed,method,accuracy,nmi,ari,wallclock_ms";

/// Ten consecutive seeds starting at 42.
pub fn default_seeds() -> Vec<u64> {
    (42..52).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Sot,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Sot => "sot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Template; `dim`, `sigma` and `seed` are overridden per cell.
    pub task: SphereTaskSpec,
    pub sot: SotConfig,
    pub methods: Vec<Method>,
    pub kmeans_restarts: usize,
    /// Record per-cell wall-clock time. Off by default so result files are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dims: DEFAULT_DIMS.to_vec(),
            sigmas: DEFAULT_SIGMAS.to_vec(),
            seeds: default_seeds(),
            task: SphereTaskSpec::default(),
            sot: SotConfig::default(),
            methods: vec![Method::Baseline, Method::Sot],
            kmeans_restarts: DEFAULT_RESTARTS,
            record_timing: false,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.sigmas.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(SotError::InvalidSpec("dims, sigmas, seeds and methods must be nonempty".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(SotError::InvalidSpec("kmeans_restarts must be >= 1".into()));
        }
        if self.task.k < 2 {
            return Err(SotError::InvalidSpec("k-means needs k >= 2".into()));
        }
        self.sot.sinkhorn.validate().map_err(|e| SotError::InvalidSpec(e.to_string()))?;
        for &dim in &self.dims {
            for &sigma in &self.sigmas {
                self.cell_task(dim, sigma, 0).validate()?;
            }
        }
        Ok(())
    }

    pub fn cell_task(&self, dim: usize, sigma: f64, seed: u64) -> SphereTaskSpec {
        SphereTaskSpec {
            dim,
            sigma,
            seed,
            ..self.task
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
    pub method: Method,
    pub accuracy: f64,
    pub nmi: f64,
    pub ari: f64,
    pub wallclock_ms: f64,
    /// Set when the cell failed; metrics are NaN in that case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridRow {
    pub fn metrics(&self) -> MetricReport {
        MetricReport {
            accuracy: self.accuracy,
            nmi: self.nmi,
            ari: self.ari,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
}

impl GridResult {
    /// Flat CSV with [`GRID_CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(GRID_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dim,
                r.sigma,
                r.seed,
                r.method.as_str(),
                format_f64(r.accuracy),
                format_f64(r.nmi),
                format_f64(r.ari),
                r.wallclock_ms
            );
        }
        out
    }

    /// `{"spec": ..., "rows": [...], "version": 1}`
    pub fn to_json(&self, spec: &GridSpec) -> serde_json::Value {
        serde_json::json!({
            "spec": spec,
            "rows": self.rows,
            "version": 1,
        })
    }

    pub fn failed(&self) -> impl Iterator<Item = &GridRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }
}

struct Cell {
    dim: usize,
    sigma: f64,
    seed: u64,
}

fn run_cell(spec: &GridSpec, cell: &Cell) -> Vec<GridRow> {
    let task = spec.cell_task(cell.dim, cell.sigma, cell.seed);
    let dataset = prepare_dataset(&task);
    spec.methods
        .iter()
        .map(|&method| {
            let t0 = Instant::now();
            let outcome = dataset.as_ref().map_err(Clone::clone).and_then(|ds| {
                let feats = match method {
                    Method::Baseline => ds.features.mat().clone(),
                    Method::Sot => sot_features(ds, &spec.sot)?,
                };
                cluster_and_score(&feats, &ds.labels, task.k, cell.seed, spec.kmeans_restarts)
            });
            // Dataset preparation is shared by all methods and not included.
            let wallclock_ms = if spec.record_timing {
                t0.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let (m, error) = match outcome {
                Ok(m) => (m, None),
                Err(e) => (
                    MetricReport {
                        accuracy: f64::NAN,
                        nmi: f64::NAN,
                        ari: f64::NAN,
                    },
                    Some(e.to_string()),
                ),
            };
            GridRow {
                dim: cell.dim,
                sigma: cell.sigma,
                seed: cell.seed,
                method,
                accuracy: m.accuracy,
                nmi: m.nmi,
                ari: m.ari,
                wallclock_ms,
                error,
            }
        })
        .collect()
}

/// Runs every (dim, sigma, seed) cell for every method. Rows are ordered by
/// dim, then sigma, then seed, then method, following the spec's list order.
/// A failing cell yields rows carrying the error message instead of
/// aborting the run.
pub fn run_clustering_grid(spec: &GridSpec) -> Result<GridResult> {
    spec.validate()?;
    let cells: Vec<Cell> = spec
        .dims
        .iter()
        .flat_map(|&dim| {
            spec.sigmas.iter().flat_map(move |&sigma| {
                spec.seeds.iter().map(move |&seed| Cell { dim, sigma, seed })
            })
        })
        .collect();
    let rows = par::map_slice(&cells, |c| run_cell(spec, c)).into_iter().flatten().collect();
    Ok(GridResult { rows })
}

/// Seed-averaged metrics of one (dim, sigma) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dim: usize,
    pub sigma: f64,
    pub baseline: Option<MetricReport>,
    pub sot: Option<MetricReport>,
}

impl CellSummary {
    /// Whether SOT scores at least the baseline on the chosen metric.
    pub fn sot_at_least_baseline(&self, metric: impl Fn(&MetricReport) -> f64) -> Option<bool> {
        Some(metric(self.sot.as_ref()?) >= metric(self.baseline.as_ref()?))
    }
}

/// Averages successful rows over seeds, per (dim, sigma), in grid order.
pub fn summarize(result: &GridResult) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in &result.rows {
        if !keys.iter().any(|&(d, s)| d == r.dim && s == r.sigma) {
            keys.push((r.dim, r.sigma));
        }
    }
    let avg = |dim: usize, sigma: f64, method: Method| -> Option<MetricReport> {
        let rows: Vec<&GridRow> = result
            .rows
            .iter()
            .filter(|r| r.dim == dim && r.sigma == sigma && r.method == method && r.error.is_none())
            .collect();
        if rows.is_empty() {
            return None;
        }
        let pick = |f: fn(&GridRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        Some(MetricReport {
            accuracy: pick(|r| r.accuracy),
            nmi: pick(|r| r.nmi),
            ari: pick(|r| r.ari),
        })
    };
    keys.into_iter()
        .map(|(dim, sigma)| CellSummary {
            dim,
            sigma,
            baseline: avg(dim, sigma, Method::Baseline),
            sot: avg(dim, sigma, Method::Sot),
        })
        .collect()
}
