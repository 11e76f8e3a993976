//! `ldeconv`: experiments on lattice Green functions and Gaussian
//! deconvolution from the command line.
//!
//! Exit codes: 0 ok, 1 invariant breach, 2 usage or precondition failure.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "ldeconv", version, about = "Lattice Green functions and Gaussian deconvolution on Z^d")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "LDECONV_THREADS")]
    threads: Option<usize>,

    /// Largest number of stored grid cells a run may allocate.
    #[arg(long, global = true, env = "LDECONV_MAX_CELLS", default_value_t = 1 << 27)]
    max_cells: u128,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lattice Green function C_mu on a box, with its asymptotic amplitude.
    Green(GreenArgs),
    /// Solve F * G = delta for a model config and split off lambda C_mu.
    Deconv(DeconvArgs),
    /// Exact exponent arithmetic for (d, rho), or the model table.
    Exponents(ExponentArgs),
    /// Holder curve ||U_u h^_alpha||_1 over grid-aligned u.
    Fracnorm(FracnormArgs),
    /// The constant int_0^inf sin(u) u^{-1-delta} du.
    Cdelta(CdeltaArgs),
    /// Check a kernel against the decay and infrared assumptions.
    VerifyAssumptions(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Spectral,
    Extrapolated,
    Walk,
}

#[derive(Debug, Args)]
struct GreenArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 16)]
    radius: usize,
    /// Points per torus axis; defaults to 4 * radius.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Extrapolated)]
    method: MethodArg,
    /// Walk length for `--method walk`.
    #[arg(long, default_value_t = 400)]
    n_max: usize,
    /// Fit window `a,b` in |x|; defaults to R/4,R/2.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    annulus: Option<Vec<f64>>,
    /// CSV output; the manifest goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DeconvArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for result.json, G.csv, f.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Allow rho outside the admissible range.
    #[arg(long)]
    exploratory: bool,
    /// Repeat the run on a grid with 2M points per axis and report relative changes.
    #[arg(long)]
    doubling: bool,
}

#[derive(Debug, Args)]
struct ExponentArgs {
    /// Print the model table.
    #[arg(long, conflicts_with_all = ["dim", "rho"])]
    table: bool,
    #[arg(long, requires = "rho")]
    dim: Option<u32>,
    /// Decimal or fraction, read exactly.
    #[arg(long, requires = "dim")]
    rho: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldArg {
    /// The remainder f = G - lambda C_mu.
    Remainder,
    /// The error kernel E.
    Error,
    /// The kernel F.
    Kernel,
}

#[derive(Debug, Args)]
struct FracnormArgs {
    /// Run config (same format as `deconv --config`).
    #[arg(long)]
    model: PathBuf,
    /// Multi-index, comma separated, one entry per dimension.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = FieldArg::Remainder)]
    field: FieldArg,
    #[arg(long)]
    u_min: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    u_max: f64,
    /// Exponent in the reported ratio norm / u^eta; defaults to the config's eta or 0.5.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 5)]
    per_decade: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CdeltaArgs {
    #[arg(long)]
    delta: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Model kernel JSON (kind, d, rho, epsilon, ...).
    #[arg(long)]
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    }
    let cap = cli.max_cells;
    match cli.command {
        Command::Green(a) => commands::green(&a, cap),
        Command::Deconv(a) => commands::deconv(&a, cap),
        Command::Exponents(a) => commands::exponents(&a),
        Command::Fracnorm(a) => commands::fracnorm(&a, cap),
        Command::Cdelta(a) => commands::cdelta(&a),
        Command::VerifyAssumptions(a) => commands::verify_assumptions(&a),
    }
}
