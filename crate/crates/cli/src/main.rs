mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes are a stable contract.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lpv-dwell", version, about = "Dwell-time stability certificates for LPV systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one certificate program.
    Certify(CertifyArgs),
    /// Bisect for the smallest certified dwell-time.
    Search(SearchArgs),
    /// Run one search per value of ν or ρ̄ and write a CSV table.
    Sweep(SweepArgs),
    /// Simulate trajectories and audit a certificate along them.
    Simulate(SimulateArgs),
    /// Write the SDP behind a certificate program in sparse text form.
    DumpSdp(CertifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Quadratic,
    Robust,
    Constant,
    Minimum,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyArg {
    Constant,
    Minimum,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisArg {
    Nu,
    RhoMax,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// System file.
    pub file: PathBuf,
    /// Sets the constant `nu`.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Sets the constant `rho_max`.
    #[arg(long = "rho-max")]
    pub rho_max: Option<f64>,
    /// Sets any named constant, `NAME=VALUE`; repeatable.
    #[arg(long = "const", value_name = "NAME=VALUE")]
    pub constants: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ProgramArgs {
    #[arg(long, value_enum, default_value = "minimum")]
    pub mode: ModeArg,
    /// Degree of S.
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Keep the jump constraint non-strict (no εI term).
    #[arg(long)]
    pub no_jump_epsilon: bool,
    /// Seed for the sampled verification.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Dwell-time T̄ (constant and minimum modes).
    #[arg(long)]
    pub dwell: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BracketArgs {
    #[arg(long, default_value_t = 1.0)]
    pub start: f64,
    #[arg(long, default_value_t = 1048576.0)]
    pub cap: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub floor: f64,
    #[arg(long = "rel-tol", default_value_t = 1e-2)]
    pub rel_tol: f64,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub program: ProgramArgs,
    #[command(flatten)]
    pub bracket: BracketArgs,
    /// Probes solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub program: ProgramArgs,
    #[command(flatten)]
    pub bracket: BracketArgs,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Rows solved concurrently; row order is unaffected.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write 0 in the wall-time column so output is byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Certificate or certify result document.
    #[arg(long)]
    pub cert: PathBuf,
    /// Defaults to the family the certificate covers.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Defaults to the certified dwell-time.
    #[arg(long)]
    pub dwell: Option<f64>,
    /// Simulated time; defaults to 50 T̄.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Initial state, comma-separated; a seeded random unit vector when absent.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = lpv_dwell::sim::AUDIT_TOL)]
    pub tol: f64,
    /// Trace CSV; the audit summary goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Certify(a) => commands::certify(&a),
        Command::Search(a) => commands::search(&a),
        Command::Sweep(a) => sweep::run(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::DumpSdp(a) => commands::dump_sdp(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
