use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sot_core::bench::{
    ablate_lambda, ablate_sinkhorn_iters, distance_percentile_analysis, run_clustering_grid, run_episodes, summarize,
    AblationRow, CellSpec, GridSpec, PercentileStats, DEFAULT_ABLATION_ITERS, DEFAULT_ABLATION_LAMBDAS,
};
use sot_core::io::{format_f64, read_features, read_labels, write_labels, write_matrix};
use sot_core::synth::{generate_sphere_dataset, prepare_dataset, EpisodeSpec, LabeledDataset, SphereTaskSpec};
use sot_core::{par, sot_transform, SotConfig, SotError};

const DEFAULT_LAMBDA: f64 = 0.1;
const DEFAULT_ITERS: usize = 10;
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "sot", version, about = "Self-optimal-transport feature transform and experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Entropic regularization strength [default: 0.1]
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Sinkhorn sweeps [default: 10]
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Base seed [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    /// Number of clusters
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    points_per_cluster: usize,
    /// PCA target dimension for dim above it; 0 disables
    #[arg(long, default_value_t = 50)]
    pca_dim: usize,
}

impl TaskArgs {
    fn spec(&self, seed: u64) -> SphereTaskSpec {
        SphereTaskSpec {
            k: self.k,
            points_per_cluster: self.points_per_cluster,
            dim: self.dim,
            sigma: self.sigma,
            seed,
            pca_dim: self.pca_dim,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Transform a feature CSV into its n×n SOT embedding
    Transform {
        input: PathBuf,
        /// Output path (stdout if omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        no_symmetrize: bool,
        #[arg(long)]
        no_unit_diagonal: bool,
    },
    /// Run the baseline-vs-SOT clustering grid
    ClusterBench {
        /// JSON grid spec; flags below override its fields
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Explicit seed list; otherwise `--n-seeds` seeds starting at --seed
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        n_seeds: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Record per-cell wall-clock time (makes the CSV non-reproducible)
        #[arg(long)]
        timing: bool,
        /// Output prefix; writes PREFIX.json and PREFIX.csv
        #[arg(short, long, default_value = "grid")]
        output: PathBuf,
    },
    /// Accuracy versus Sinkhorn sweep count on one cell
    AblateIters {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        n_seeds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Accuracy versus λ on one cell
    AblateLambda {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        n_seeds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Intra/inter-class distance percentiles before and after SOT
    Distances {
        features: PathBuf,
        labels: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a labeled sphere-cluster dataset
    Generate {
        #[command(flatten)]
        task: TaskArgs,
        /// Apply the PCA step used by the experiments
        #[arg(long)]
        pca: bool,
        /// Feature CSV path
        #[arg(short, long)]
        output: PathBuf,
        /// Label file path
        #[arg(long)]
        labels: PathBuf,
    },
    /// Paired nearest-prototype episodes with and without SOT
    Episodes {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        n_way: usize,
        #[arg(long, default_value_t = 5)]
        k_shot: usize,
        #[arg(long, default_value_t = 15)]
        q_query: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.common.workers;
    match par::with_workers(workers, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn sot_config(&self) -> SotConfig {
        let mut cfg = SotConfig::default()
            .with_lambda(self.lambda.unwrap_or(DEFAULT_LAMBDA))
            .with_sweeps(self.iters.unwrap_or(DEFAULT_ITERS));
        cfg.sinkhorn.marginal_tol = 0.0;
        cfg
    }
}

fn open(path: &Path) -> Result<BufReader<File>, SotError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| SotError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, SotError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SotError::Io(format!("{}: {e}", path.display())))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, SotError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json(out: &mut dyn Write, v: &serde_json::Value) -> Result<(), SotError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| SotError::Io(e.to_string()))?;
    writeln!(out, "{s}")?;
    out.flush()?;
    Ok(())
}

fn seed_list(start: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| start.wrapping_add(i)).collect()
}

fn run(cli: Cli) -> Result<(), SotError> {
    let common = &cli.common;
    match &cli.cmd {
        Cmd::Transform { input, output, no_symmetrize, no_unit_diagonal } => {
            let features = read_features(open(input)?)?;
            let mut cfg = common.sot_config();
            cfg.symmetrize = !no_symmetrize;
            cfg.set_unit_diagonal = !no_unit_diagonal;
            let t0 = Instant::now();
            let emb = sot_transform(&features, &cfg)?;
            eprintln!(
                "n={} d={} marginal_err={:e} wallclock_ms={:.3}",
                features.n(),
                features.d(),
                emb.marginal_err,
                t0.elapsed().as_secs_f64() * 1e3
            );
            let mut out = sink(output.as_deref())?;
            match common.format {
                Format::Csv => write_matrix(out, &emb.w),
                Format::Json => {
                    let rows: Vec<&[f64]> = emb.w.iter_rows().collect();
                    write_json(&mut out, &json!({ "n": emb.n(), "marginal_err": emb.marginal_err, "w": rows }))
                }
            }
        }
        Cmd::ClusterBench { spec, dims, sigmas, seeds, n_seeds, restarts, timing, output } => {
            let mut grid = match spec {
                Some(p) => serde_json::from_reader(open(p)?).map_err(|e| SotError::InvalidSpec(format!("{}: {e}", p.display())))?,
                None => GridSpec::default(),
            };
            if let Some(v) = dims {
                grid.dims = v.clone();
            }
            if let Some(v) = sigmas {
                grid.sigmas = v.clone();
            }
            if let Some(v) = seeds {
                grid.seeds = v.clone();
            } else if common.seed.is_some() || n_seeds.is_some() {
                grid.seeds = seed_list(common.seed(), n_seeds.unwrap_or(grid.seeds.len()));
            }
            if let Some(l) = common.lambda {
                grid.sot.sinkhorn.lambda = l;
            }
            if let Some(i) = common.iters {
                grid.sot.sinkhorn.max_sweeps = i;
            }
            if let Some(r) = restarts {
                grid.kmeans_restarts = *r;
            }
            grid.record_timing |= timing;
            grid.validate()?;

            let result = run_clustering_grid(&grid)?;
            let json_path = output.with_extension("json");
            let csv_path = output.with_extension("csv");
            write_json(&mut create(&json_path)?, &result.to_json(&grid))?;
            let mut csv = create(&csv_path)?;
            csv.write_all(result.to_csv().as_bytes())?;
            csv.flush()?;

            println!("{:>6} {:>6} {:>9} {:>9}", "dim", "sigma", "baseline", "sot");
            let fmt = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.4}"));
            for c in summarize(&result) {
                println!(
                    "{:>6} {:>6.3} {:>9} {:>9}",
                    c.dim,
                    c.sigma,
                    fmt(c.baseline.map(|m| m.accuracy)),
                    fmt(c.sot.map(|m| m.accuracy))
                );
            }
            let failed = result.failed().count();
            if failed > 0 {
                eprintln!("{failed} cell runs failed; see the error field in {}", json_path.display());
            }
            eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
            Ok(())
        }
        Cmd::AblateIters { task, values, n_seeds, output } => {
            let cell = cell_spec(common, task, *n_seeds);
            let values = values.clone().unwrap_or_else(|| DEFAULT_ABLATION_ITERS.to_vec());
            let rows = ablate_sinkhorn_iters(&cell, &values)?;
            write_ablation(common.format, output.as_deref(), "iters", &cell, &rows)
        }
        Cmd::AblateLambda { task, values, n_seeds, output } => {
            let cell = cell_spec(common, task, *n_seeds);
            let values = values.clone().unwrap_or_else(|| DEFAULT_ABLATION_LAMBDAS.to_vec());
            let rows = ablate_lambda(&cell, &values)?;
            write_ablation(common.format, output.as_deref(), "lambda", &cell, &rows)
        }
        Cmd::Distances { features, labels, output } => {
            let f = read_features(open(features)?)?;
            let l = read_labels(open(labels)?)?;
            let ds = LabeledDataset::new(f, l)?.normalized()?;
            let entry = distance_percentile_analysis(&ds, &common.sot_config())?;
            let mut out = sink(output.as_deref())?;
            match common.format {
                Format::Json => write_json(&mut out, &serde_json::to_value(entry).expect("plain data")),
                Format::Csv => {
                    writeln!(out, "features,intra_mean,intra_std,inter_mean,inter_std")?;
                    for (name, s) in [("original", &entry.original), ("sot", &entry.sot)] {
                        writeln!(out, "{name},{}", stats_csv(s))?;
                    }
                    out.flush()?;
                    Ok(())
                }
            }
        }
        Cmd::Generate { task, pca, output, labels } => {
            let spec = task.spec(common.seed());
            let ds = if *pca { prepare_dataset(&spec)? } else { generate_sphere_dataset(&spec)? };
            write_matrix(create(output)?, ds.features.mat())?;
            write_labels(create(labels)?, &ds.labels)?;
            eprintln!("n={} d={} classes={}", ds.n(), ds.features.d(), ds.n_classes());
            Ok(())
        }
        Cmd::Episodes { task, count, n_way, k_shot, q_query, output } => {
            let ep = EpisodeSpec { n_way: *n_way, k_shot: *k_shot, q_query: *q_query, seed: common.seed() };
            let report = run_episodes(&task.spec(common.seed()), &ep, *count, &common.sot_config())?;
            let mut out = sink(output.as_deref())?;
            match common.format {
                Format::Json => write_json(&mut out, &serde_json::to_value(&report).expect("plain data")),
                Format::Csv => {
                    writeln!(out, "episode,baseline,sot")?;
                    for (e, (b, s)) in report.baseline.iter().zip(&report.sot).enumerate() {
                        writeln!(out, "{e},{},{}", format_f64(*b), format_f64(*s))?;
                    }
                    out.flush()?;
                    eprintln!(
                        "mean baseline={:.4} sot={:.4} wins={} losses={} ties={} sign_test_p={:.4e}",
                        report.mean_baseline, report.mean_sot, report.wins, report.losses, report.ties, report.sign_test_p
                    );
                    Ok(())
                }
            }
        }
    }
}

fn cell_spec(common: &Common, task: &TaskArgs, n_seeds: usize) -> CellSpec {
    CellSpec {
        task: task.spec(common.seed()),
        seeds: seed_list(common.seed(), n_seeds),
        sot: common.sot_config(),
        ..CellSpec::default()
    }
}

fn stats_csv(s: &PercentileStats) -> String {
    [s.intra_mean, s.intra_std, s.inter_mean, s.inter_std]
        .iter()
        .map(|v| format_f64(*v))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_ablation(format: Format, path: Option<&Path>, name: &str, cell: &CellSpec, rows: &[AblationRow]) -> Result<(), SotError> {
    let mut out = sink(path)?;
    match format {
        Format::Json => write_json(&mut out, &json!({ "parameter": name, "cell": cell, "rows": rows })),
        Format::Csv => {
            writeln!(out, "{name},accuracy,nmi,ari")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{}",
                    r.value,
                    format_f64(r.mean.accuracy),
                    format_f64(r.mean.nmi),
                    format_f64(r.mean.ari)
                )?;
            }
            out.flush()?;
            Ok(())
        }
    }
}
