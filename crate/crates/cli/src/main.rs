//! `tensionlab`: solve, construct, audit and compare sampled harmonic maps.
//!
//! Exit codes: 0 success, 1 malformed input, 2 solver did not converge
//! (output still written), 3 audit found a failing check.

mod commands;
mod files;
mod parse;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub message: String,
}

impl CliError {
    /// Bad input attributed to `--flag`.
    pub fn input(flag: &str, err: impl Display) -> Self {
        Self { message: format!("--{flag}: {err}") }
    }

    pub fn output(path: &Path, err: impl Display) -> Self {
        Self { message: format!("--out: cannot write {}: {err}", path.display()) }
    }

    pub fn with_flag(self, flag: &str) -> Self {
        match self.message.split_once(": ") {
            Some((_, rest)) => Self { message: format!("--{flag}: {rest}") },
            None => self,
        }
    }
}

#[derive(Parser)]
#[command(name = "tensionlab", version, about = "Harmonic maps into flat conformal metrics: solve, construct, audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the tension equation with Dirichlet data.
    Solve(SolveArgs),
    /// Build the entire harmonic map with inverse coefficient alpha e^{-iv}.
    Construct(ConstructArgs),
    /// Run the residual checks on a map record.
    Audit(AuditArgs),
    /// Pairwise Teichmüller distances between records on one grid.
    Distance(DistanceArgs),
    /// Tabulate the real-coefficient example u(x) + iy.
    Example51(Example51Args),
    /// Write a closed-form fixture as a map record.
    Sample(SampleArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    /// Built-in metric: euclid, exp_x, exp_y, gauss_nonflat.
    #[arg(long, conflicts_with = "theta")]
    pub metric: Option<String>,
    /// Flat metric with lambda = sum theta_k w^k, as `RE,IM;RE,IM;...`.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// `X0,Y0,NX,NY,H`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Map record whose edge values are the Dirichlet data.
    #[arg(long, conflicts_with = "boundary_from")]
    pub boundary: Option<PathBuf>,
    /// Fixture supplying the Dirichlet data: identity, linear:RE,IM,
    /// tanh[:SHIFT], conformal, peaked, example51:C[,paper|corrected].
    #[arg(long, allow_hyphen_values = true)]
    pub boundary_from: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConstructArgs {
    /// `RE,IM` with |alpha| < 1.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: String,
    #[arg(long, conflicts_with = "theta")]
    pub metric: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Record of the map f.
    #[arg(long)]
    pub out: PathBuf,
    /// Record of the inverse g, sampled on the target plane.
    #[arg(long)]
    pub out_inverse: Option<PathBuf>,
}

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Regenerate the record at half the spacing and report residual ratios.
    #[arg(long)]
    pub refine: bool,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol_tension: Option<f64>,
    #[arg(long)]
    pub tol_hopf: Option<f64>,
    #[arg(long)]
    pub tol_lemma1: Option<f64>,
    #[arg(long)]
    pub tol_lemma2: Option<f64>,
    #[arg(long)]
    pub tol_lemma3: Option<f64>,
    #[arg(long)]
    pub tol_arg_hopf: Option<f64>,
    #[arg(long)]
    pub tol_spread: Option<f64>,
    #[arg(long)]
    pub tol_inverse: Option<f64>,
    #[arg(long)]
    pub tol_twist: Option<f64>,
}

#[derive(Args)]
pub struct DistanceArgs {
    /// Two or more records on the same grid, comma-separated.
    #[arg(long = "in", value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Central fraction of the grid the supremum runs over.
    #[arg(long, default_value_t = tensionlab::teichmuller::ISOMETRY_WINDOW)]
    pub window: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Example51Args {
    #[arg(long, allow_hyphen_values = true)]
    pub c: f64,
    /// `paper` (delta = c e^{-x}) or `corrected` (delta = c e^{-2x}).
    #[arg(long, default_value = "paper")]
    pub variant: String,
    /// `A,B,N`.
    #[arg(long, default_value = "-20,40,601", allow_hyphen_values = true)]
    pub xrange: String,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON audit summary; printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct SampleArgs {
    /// identity, linear:RE,IM, tanh[:SHIFT], conformal, peaked,
    /// example51:C[,paper|corrected].
    #[arg(long, allow_hyphen_values = true)]
    pub fixture: String,
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Defaults to exp_x for tanh and example51, euclid otherwise.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Construct(a) => commands::construct(a),
        Command::Audit(a) => commands::audit(a),
        Command::Distance(a) => commands::distance(a),
        Command::Example51(a) => commands::example51(a),
        Command::Sample(a) => commands::sample(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(1)
        }
    }
}
