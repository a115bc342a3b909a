use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

/// Symmetry checks, conservation laws and extremals for optimal control
/// problems.
#[derive(Parser, Debug)]
#[command(name = "noether", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a group against the finite invariance identities
    Check(CheckArgs),
    /// Check the linearised identities of the group's generator
    CheckInfinitesimal(CheckArgs),
    /// Print the conservation law of a group
    Law(LawArgs),
    /// Integrate an extremal and write it as CSV
    Extremal(ExtremalArgs),
    /// Test a law for constancy along an extremal
    Conserve(ConserveArgs),
    /// Compare dH/dt with the explicit time derivative along an extremal
    Dhdt(DhdtArgs),
    /// Solve for psi(a) so that x(b) = beta
    Shoot(ShootArgs),
    /// Sweep multipliers over the simplex and filter dominated outcomes
    Pareto(ParetoArgs),
    /// Built-in aircraft example
    Aircraft {
        #[command(subcommand)]
        command: AircraftCommand,
    },
}

#[derive(Subcommand, Debug)]
enum AircraftCommand {
    /// Write the problem, its groups and the sample box as JSON files
    Export(ExportArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Form {
    P,
    P1,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum LawKind {
    /// Grid search over the control box
    Grid,
    /// Closed-form aircraft control
    Aircraft,
}

#[derive(Args, Debug, Serialize)]
struct Output {
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    problem: PathBuf,
    group: PathBuf,
    /// Sample configuration JSON (intervals, samples, seed, tolerance)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Leave samples with evaluation domain errors out of the verdict
    #[arg(long)]
    skip_domain_errors: bool,
    /// Problem form; defaults to p1 when N = 1 and p otherwise
    #[arg(long, value_enum)]
    form: Option<Form>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct LawArgs {
    problem: PathBuf,
    group: PathBuf,
    #[arg(long, value_enum)]
    form: Option<Form>,
    /// Sample configuration for the identity-at-zero check; controls
    /// default to the control box
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the law as JSON
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct LawChoice {
    #[arg(long, value_enum, default_value = "grid")]
    law: LawKind,
    /// Grid points per control dimension
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Golden-section iterations in the best grid cell
    #[arg(long, default_value_t = 20)]
    refinements: usize,
    /// Control expression in t, x, psi0, psi, lambda; once per control
    #[arg(long = "control", allow_hyphen_values = true)]
    controls: Vec<String>,
    /// Switching function for an expression law
    #[arg(long, allow_hyphen_values = true)]
    switching: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct ExtremalSetup {
    problem: PathBuf,
    /// Initial state; defaults to the problem's alpha
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Initial costate psi(a)
    #[arg(long = "psi0", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    psi_a: Vec<f64>,
    /// Multipliers lambda (cost multipliers in the p form, constraint
    /// multipliers in the p1 form)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Vec<f64>,
    /// Cost multiplier psi0 <= 0; selects the p1 form
    #[arg(long, allow_hyphen_values = true)]
    cost_multiplier: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[command(flatten)]
    law: LawChoice,
}

#[derive(Args, Debug, Serialize)]
struct ExtremalArgs {
    #[command(flatten)]
    setup: ExtremalSetup,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ConserveArgs {
    #[command(flatten)]
    setup: ExtremalSetup,
    /// Group whose law is tested
    #[arg(long, conflicts_with = "expr")]
    group: Option<PathBuf>,
    /// Law given directly as an expression
    #[arg(long, allow_hyphen_values = true)]
    expr: Option<String>,
    /// Sample configuration for validating the group
    #[arg(long)]
    config: Option<PathBuf>,
    /// Normalised drift tolerance; defaults to max(C h^4, 50 h [switch])
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct DhdtArgs {
    #[command(flatten)]
    setup: ExtremalSetup,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Control jump that excludes a node; defaults to 100 h
    #[arg(long)]
    jump_threshold: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ShootArgs {
    #[command(flatten)]
    setup: ExtremalSetup,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    /// Required max-norm of x(b) - beta
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Also write the converged extremal as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ParetoArgs {
    problem: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long = "psi0", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    psi_a: Vec<f64>,
    /// Points along each edge of the multiplier simplex
    #[arg(long, default_value_t = 11)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Collapse outcomes with equal cost vectors
    #[arg(long)]
    dedup: bool,
    #[command(flatten)]
    law: LawChoice,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    /// Target directory
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[arg(long, default_value_t = 1.0)]
    u1_max: f64,
    #[arg(long, default_value_t = -1.2, allow_hyphen_values = true)]
    u2_lo: f64,
    #[arg(long, default_value_t = 1.2)]
    u2_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    ExitCode::from(code)
}
