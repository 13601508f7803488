//! `nltiso`: online identification of nonlinear directed dependencies among
//! streaming time series, with a linear baseline, synthetic benchmark
//! experiments, and CSV ingest.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::EvaluateRequest;
use config::{ExperimentKind, Method, Settings, TsFormat};

#[derive(Parser)]
#[command(
    name = "nltiso",
    version,
    about = "Online nonlinear topology identification over streaming time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in synthetic experiment end to end (generate + estimate)
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Generate a synthetic dataset with known ground truth
    Generate {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run the online estimator on a CSV of recorded series
    Estimate {
        /// Input CSV: header row of column labels, one row per time step
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
        /// Shift/scale each column to zero mean, unit variance before
        /// estimation [default: true]
        #[arg(long)]
        standardize: Option<bool>,
        /// Encoding of the first (timestamp) column
        #[arg(long = "timestamp-format", value_enum)]
        timestamp_format: Option<TsFormat>,
        /// Resample onto a uniform grid with this period before estimation
        #[arg(long = "resample-period")]
        resample_period: Option<f64>,
        /// Trailing window (steps) for the averaged adjacency artifact;
        /// 0 disables [default: 720]
        #[arg(long = "average-window")]
        average_window: Option<usize>,
    },
    /// Score a stored adjacency estimate against ground truth
    Evaluate {
        /// Estimated adjacency CSV (stacked lag blocks)
        #[arg(long)]
        estimate: PathBuf,
        /// Ground truth: a truth.json or an adjacency CSV to threshold
        #[arg(long)]
        truth: PathBuf,
        /// Optional flat key-value config file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Absolute value above which a CSV truth entry counts as an edge
        #[arg(long = "truth-threshold")]
        truth_threshold: Option<f64>,
        /// How many top-ranked cross-node entries to score
        /// [default: the number of true cross-node edges]
        #[arg(long = "top-k")]
        top_k: Option<usize>,
        /// Optional stored ISE trace to summarize
        #[arg(long)]
        ise: Option<PathBuf>,
        /// Records to skip before averaging the ISE trace
        #[arg(long = "burn-in")]
        burn_in: Option<usize>,
        /// Also write evaluation.json here
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
}

/// Flags shared by the artifact-producing modes. Every value defaults per
/// mode, can be set in `--config`, and is overridden by the flag.
#[derive(Args)]
struct CommonFlags {
    /// Flat key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for generation (estimation itself is deterministic)
    #[arg(long)]
    seed: Option<u64>,
    /// Group-sparsity regularization weight
    #[arg(long)]
    lambda: Option<f64>,
    /// Online step size (capped per group for stability)
    #[arg(long)]
    gamma: Option<f64>,
    /// Gaussian kernel variance used for estimation
    #[arg(long = "kernel-var")]
    kernel_var: Option<f64>,
    /// Sliding-window capacity (retained kernel centers)
    #[arg(long)]
    window: Option<usize>,
    /// Lag order P
    #[arg(long)]
    order: Option<usize>,
    /// Estimator selection
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Worker threads for per-node updates; 0 = one per core.
    /// Results are identical for every thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for artifacts [default: out]
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Steps between group-norm snapshots; 0 disables
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<usize>,
    /// Number of samples to generate
    #[arg(long)]
    samples: Option<usize>,
    /// Number of series to generate
    #[arg(long)]
    nodes: Option<usize>,
    /// Records to skip in summary error averages
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
}

/// Defaults < config file < flags.
fn resolve(mut settings: Settings, flags: &CommonFlags) -> Result<Settings> {
    if let Some(path) = &flags.config {
        settings.apply_file(path)?;
    }
    if let Some(v) = flags.seed {
        settings.seed = v;
    }
    if let Some(v) = flags.lambda {
        settings.lambda = v;
    }
    if let Some(v) = flags.gamma {
        settings.gamma = v;
    }
    if let Some(v) = flags.kernel_var {
        settings.kernel_var = v;
    }
    if let Some(v) = flags.window {
        settings.window = v;
    }
    if let Some(v) = flags.order {
        settings.order = v;
    }
    if let Some(v) = flags.method {
        settings.method = v;
    }
    if let Some(v) = flags.snapshot_every {
        settings.snapshot_every = v;
    }
    if let Some(v) = flags.samples {
        settings.samples = v;
    }
    if let Some(v) = flags.nodes {
        settings.nodes = v;
    }
    if let Some(v) = flags.burn_in {
        settings.burn_in = v;
    }
    Ok(settings)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("cannot configure thread pool")?;
        }
    }
    Ok(())
}

fn out_dir_or_default(out_dir: Option<PathBuf>) -> PathBuf {
    out_dir.unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Experiment { kind, flags } => {
            let settings = resolve(Settings::for_experiment(kind), &flags)?;
            init_threads(flags.threads)?;
            let out = out_dir_or_default(flags.out_dir.clone());
            commands::cmd_experiment(kind, &settings, &out)
        }
        Command::Generate { kind, flags } => {
            let settings = resolve(Settings::for_experiment(kind), &flags)?;
            let out = out_dir_or_default(flags.out_dir.clone());
            commands::cmd_generate(kind, &settings, &out)
        }
        Command::Estimate {
            input,
            flags,
            standardize,
            timestamp_format,
            resample_period,
            average_window,
        } => {
            let mut settings = resolve(Settings::for_estimate(), &flags)?;
            if let Some(v) = standardize {
                settings.standardize = v;
            }
            if let Some(v) = timestamp_format {
                settings.timestamp_format = v;
            }
            if let Some(v) = resample_period {
                settings.resample_period = Some(v);
            }
            if let Some(v) = average_window {
                settings.average_window = v;
            }
            init_threads(flags.threads)?;
            let out = out_dir_or_default(flags.out_dir.clone());
            commands::cmd_estimate(&input, &settings, &out)
        }
        Command::Evaluate {
            estimate,
            truth,
            config,
            truth_threshold,
            top_k,
            ise,
            burn_in,
            out_dir,
        } => {
            let mut settings = Settings::base();
            if let Some(path) = &config {
                settings.apply_file(path)?;
            }
            let request = EvaluateRequest {
                estimate,
                truth,
                truth_threshold: truth_threshold.unwrap_or(settings.truth_threshold),
                top_k: top_k.or(settings.top_k),
                ise,
                burn_in: burn_in.unwrap_or(settings.burn_in),
                out_dir,
            };
            let report = commands::cmd_evaluate(&request)?;
            println!("{report}");
            Ok(())
        }
    }
}
