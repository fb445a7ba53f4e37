//! Command-line front end: fit scalar-on-function models, run linearity and
//! no-effect tests, simulate RLRT null distributions, generate synthetic
//! data, and execute rejection-rate studies. CSV in, JSON/CSV out.

mod commands;
mod errors;
mod io;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use errors::CliError;

#[derive(Parser)]
#[command(
    name = "fgam",
    version,
    about = "Functional regression fitting and linearity tests",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for Monte Carlo loops (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write a JSON report (optionally a surface CSV).
    Fit(FitArgs),
    /// Run a hypothesis test on a data set.
    Test(TestArgs),
    /// Run a rejection-rate study from a TOML/JSON config.
    Simulate(SimulateArgs),
    /// Simulate the RLRT null distribution for a data set's design.
    Nulldist(NulldistArgs),
    /// Generate synthetic data sets (convex or mixed scenario).
    Gen(GenArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Response CSV (N rows, one column).
    #[arg(long)]
    pub(crate) y: PathBuf,
    /// Predictor CSV (N rows, J columns; one curve per row).
    #[arg(long)]
    pub(crate) x: PathBuf,
    /// Observation-time CSV (J rows, one column, strictly increasing).
    #[arg(long)]
    pub(crate) t: PathBuf,
    /// Input files carry a header row.
    #[arg(long)]
    pub(crate) header: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuadArg {
    Midpoint,
    Trapezoid,
}

impl From<QuadArg> for fgam_core::QuadratureRule {
    fn from(q: QuadArg) -> Self {
        match q {
            QuadArg::Midpoint => fgam_core::QuadratureRule::Midpoint,
            QuadArg::Trapezoid => fgam_core::QuadratureRule::Trapezoid,
        }
    }
}

impl QuadArg {
    fn name(&self) -> &'static str {
        match self {
            QuadArg::Midpoint => "midpoint",
            QuadArg::Trapezoid => "trapezoid",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Flm,
    FgamGcv,
    Fgamm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Equalvc,
    Bonferroni,
    Bootstrap,
    NoEffect,
    LinearInT,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ComponentArg {
    /// Merged non-FLM block [Z2 : Z3].
    Equalvc,
    /// The x-smooth main-effect block Z2.
    Sigma2,
    /// The interaction block Z3.
    Sigma3,
    /// The FLM slope-smooth block Z1 (linear-in-t test design).
    LinearInT,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    pub(crate) data: DataArgs,
    #[arg(long, value_enum)]
    pub(crate) model: ModelArg,
    #[arg(long, default_value_t = 10)]
    pub(crate) kx: usize,
    #[arg(long, default_value_t = 10)]
    pub(crate) kt: usize,
    #[arg(long, value_enum, default_value_t = QuadArg::Trapezoid)]
    pub(crate) quad: QuadArg,
    /// Output JSON report path.
    #[arg(long)]
    pub(crate) out: PathBuf,
    /// Also write the surface decomposition over a grid to this CSV.
    #[arg(long)]
    pub(crate) surface: Option<PathBuf>,
    /// Surface grid resolution per axis.
    #[arg(long, default_value_t = 51)]
    pub(crate) surface_grid: usize,
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Read the written report back and re-derive the fitted values from the
    /// stored coefficients; fails (exit 4) beyond 1e-10.
    #[arg(long)]
    pub(crate) verify: bool,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    pub(crate) data: DataArgs,
    #[arg(long, value_enum)]
    pub(crate) method: MethodArg,
    #[arg(long, default_value_t = 10)]
    pub(crate) kx: usize,
    #[arg(long, default_value_t = 10)]
    pub(crate) kt: usize,
    #[arg(long, value_enum, default_value_t = QuadArg::Trapezoid)]
    pub(crate) quad: QuadArg,
    /// Null-sample size (spectral simulation or parametric refits).
    #[arg(long, default_value_t = 10_000)]
    pub(crate) nsim: usize,
    /// Bootstrap refits (bootstrap method only).
    #[arg(long, default_value_t = 1000)]
    pub(crate) nboot: usize,
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub(crate) alpha: f64,
    #[arg(long)]
    pub(crate) out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study configuration (TOML; JSON accepted with a .json extension).
    #[arg(long)]
    pub(crate) config: PathBuf,
    /// Output directory for the table CSV and the JSON report.
    #[arg(long)]
    pub(crate) out_dir: PathBuf,
}

#[derive(Args)]
struct NulldistArgs {
    #[command(flatten)]
    pub(crate) data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub(crate) kx: usize,
    #[arg(long, default_value_t = 10)]
    pub(crate) kt: usize,
    #[arg(long, value_enum, default_value_t = QuadArg::Trapezoid)]
    pub(crate) quad: QuadArg,
    #[arg(long, value_enum, default_value_t = ComponentArg::Equalvc)]
    pub(crate) component: ComponentArg,
    #[arg(long, default_value_t = 10_000)]
    pub(crate) nsim: usize,
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Null-sample CSV path.
    #[arg(long)]
    pub(crate) out: PathBuf,
    /// Optional JSON report path.
    #[arg(long)]
    pub(crate) json: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Convex,
    Mixed,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    pub(crate) scenario: ScenarioArg,
    #[arg(long, default_value_t = 100)]
    pub(crate) n: usize,
    #[arg(long, default_value_t = 30)]
    pub(crate) j: usize,
    /// Convex scenario: mixture weight of the linear surface.
    #[arg(long, default_value_t = 1.0)]
    pub(crate) phi: f64,
    /// Mixed scenario: variance of the x-smooth component.
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    /// Mixed scenario: variance of the interaction component.
    #[arg(long, default_value_t = 0.0)]
    sigma3: f64,
    #[arg(long, default_value_t = 10)]
    pub(crate) kx: usize,
    #[arg(long, default_value_t = 10)]
    pub(crate) kt: usize,
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Directory for y.csv, X.csv, t.csv (and b1.csv for mixed).
    #[arg(long)]
    pub(crate) out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Deterministic per-draw streams make results thread-count
        // independent; the pool size only affects wall-clock time.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    let command_line: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Fit(args) => commands::cmd_fit(&args, &command_line),
        Command::Test(args) => commands::cmd_test(&args, &command_line),
        Command::Simulate(args) => commands::cmd_simulate(&args, &command_line),
        Command::Nulldist(args) => commands::cmd_nulldist(&args, &command_line),
        Command::Gen(args) => commands::cmd_gen(&args, &command_line),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn validate_alpha(alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    Ok(())
}
