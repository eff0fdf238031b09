use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use qmem_ml::ModelKind;

#[derive(Parser, Debug, Clone)]
#[command(name = "qmemlab", version, about = "Quantum memristor simulation, datasets, surrogate models and search")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Simulation config file (flat TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed for sampling, splits, models and search.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,

    /// Output file (when it has an extension) or directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Levels kept per mode.
    #[arg(long, global = true)]
    pub trunc: Option<usize>,

    /// Drive periods to simulate.
    #[arg(long, global = true)]
    pub periods: Option<usize>,

    /// RK4 steps per drive period.
    #[arg(long = "steps-per-period", global = true)]
    pub steps_per_period: Option<usize>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: qmem_ml::MlError| e.to_string())
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Simulate one configuration and write trajectory and loop CSVs.
    Simulate(SimulateArgs),
    /// Sample a parameter space and simulate every row.
    Dataset(DatasetArgs),
    /// Quartile table of a dataset.
    Stats(DataArg),
    /// Fit one model on the training split and save it.
    Train(TrainArgs),
    /// Fit several models on one split and rank them.
    Benchmark(BenchmarkArgs),
    /// Search a surrogate for the best (or worst) configuration.
    Optimize(OptimizeArgs),
    /// Simulate optimal and sub-optimal coupled configurations side by side.
    Compare(CompareArgs),
    /// Render columns of a CSV file as an SVG line plot.
    PlotData(PlotArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Dataset(_) => "dataset",
            Command::Stats(_) => "stats",
            Command::Train(_) => "train",
            Command::Benchmark(_) => "benchmark",
            Command::Optimize(_) => "optimize",
            Command::Compare(_) => "compare",
            Command::PlotData(_) => "plot-data",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Spectral-density amplitude.
    #[arg(long)]
    pub lambda: f64,

    /// Initial-state phase.
    #[arg(long, default_value_t = FRAC_PI_2)]
    pub phi: f64,

    /// Simulate two identical coupled memristors.
    #[arg(long)]
    pub coupled: bool,

    /// Coupling capacitance (F); implies --coupled.
    #[arg(long)]
    pub c12: Option<f64>,

    /// Coupling inductance (H), 0 for none; implies --coupled.
    #[arg(long)]
    pub l12: Option<f64>,
}

#[derive(Args, Debug, Clone)]
#[command(group(ArgGroup::new("kind").required(true).args(["single", "coupled"])))]
pub struct DatasetArgs {
    #[arg(long)]
    pub single: bool,

    #[arg(long)]
    pub coupled: bool,

    /// Rows to sample in random mode.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    /// Full grid with this many levels per feature instead of random draws.
    #[arg(long, value_name = "LEVELS")]
    pub grid: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArg {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, default_value = "hist-gbdt", value_parser = parse_kind)]
    pub model: ModelKind,

    /// Train on every row instead of the 2/3 split.
    #[arg(long)]
    pub full: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// Comma-separated model kinds; all by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub models: Vec<ModelKind>,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// Surrogate kind, fitted on the whole dataset.
    #[arg(long, default_value = "hist-gbdt", value_parser = parse_kind)]
    pub model: ModelKind,

    /// Look for the lowest form factor instead of the highest.
    #[arg(long)]
    pub minimize: bool,

    /// Skip re-simulating the best candidate.
    #[arg(long)]
    pub no_verify: bool,

    #[arg(long, default_value_t = 512)]
    pub starts: usize,

    #[arg(long, default_value_t = 100)]
    pub refine: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// Coupled dataset used to fit the surrogate.
    #[arg(long, required_unless_present_all = ["optimal", "suboptimal"])]
    pub data: Option<PathBuf>,

    #[arg(long, default_value = "hist-gbdt", value_parser = parse_kind)]
    pub model: ModelKind,

    /// Optimal features c12,l12,phi,lambda; skips the maximization.
    #[arg(long, value_delimiter = ',')]
    pub optimal: Option<Vec<f64>>,

    /// Sub-optimal features c12,l12,phi,lambda; skips the minimization.
    #[arg(long, value_delimiter = ',')]
    pub suboptimal: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub csv: PathBuf,

    /// Column for the x axis; the first column by default.
    #[arg(long)]
    pub x: Option<String>,

    /// Comma-separated columns to draw; every other column by default.
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}
