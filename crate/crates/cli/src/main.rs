//! `almg`: spectra, quench protocols and dynamical-phase-transition
//! diagnostics of the anharmonic LMG model.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::Grid;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "almg", version, about = "Anharmonic Lipkin-Meshkov-Glick simulations")]
struct Cli {
    /// Run configuration (flat JSON object); flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, or the output file for single-file commands.
    #[arg(short = 'o', long = "out-dir", global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scaled spectrum as a function of xi.
    SpectrumFlow(FlowArgs),
    /// Opposite-parity doublets and their charge matrix elements.
    Doublets(DoubletArgs),
    /// Classical orbit by RK4, optionally with a phase-space energy map.
    Orbit(OrbitArgs),
    /// Spin expectations after the second quench, with the classical trace.
    Evolve(RunArgs),
    /// Long-time averages and ensemble predictions over tau_int.
    Scan(RunArgs),
    /// Generalized microcanonical ensemble report (JSON).
    Gme(RunArgs),
    /// Return probabilities and rate functions.
    Dpt2(RunArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlowArgs {
    #[arg(long, default_value_t = 40)]
    pub j2: u32,
    #[arg(long, default_value_t = -0.6, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub xi_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub xi_max: f64,
    /// Number of xi grid points.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DoubletArgs {
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub xi: f64,
    #[arg(long, default_value_t = -0.6, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 6400)]
    pub j2: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OrbitArgs {
    /// Hamiltonian parameters (default: the final stage of the protocol,
    /// or (0.5, -0.6)).
    #[arg(long, allow_negative_numbers = true)]
    pub xi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Initial point; without it the classical image of the state at
    /// tau_int is used.
    #[arg(long = "q0", id = "q0", allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long = "p0", id = "p0", allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
    /// Keep every stride-th step.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Also write an n-by-n phase-space energy map.
    #[arg(long, value_name = "N")]
    pub contour: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Figure preset (4, 5, 6, 7 or 8).
    #[arg(long)]
    pub fig: Option<u32>,
    #[arg(long)]
    pub j2: Option<u32>,
    /// Sizes as values of j, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub j_list: Option<Vec<f64>>,
    /// Initial-stage parameters as `xi,alpha`.
    #[arg(long, value_parser = parse_pair, allow_negative_numbers = true)]
    pub theta_ini: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair, allow_negative_numbers = true)]
    pub theta_int: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair, allow_negative_numbers = true)]
    pub theta_fin: Option<(f64, f64)>,
    /// Initial superposition: s1 or s2.
    #[arg(long, value_parser = ["s1", "s2"])]
    pub state: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub tau_int: Option<f64>,
    #[arg(long)]
    pub tau_fin: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, value_parser = Grid::parse)]
    pub tau_grid: Option<Grid>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_dt: Option<f64>,
    #[arg(long)]
    pub width_sigmas: Option<f64>,
    /// `double`, `auto` or a bit count.
    #[arg(long)]
    pub precision: Option<String>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `xi,alpha`")?;
    let f = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((f(a)?, f(b)?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    let config = cli.config.as_deref();
    let out = cli.out.as_deref();
    match cli.command {
        Command::SpectrumFlow(a) => commands::spectrum_flow(&a, out),
        Command::Doublets(a) => commands::doublets(&a, out),
        Command::Orbit(a) => commands::orbit(&a, config, out),
        Command::Evolve(a) => commands::evolve(&a, config, out),
        Command::Scan(a) => commands::scan(&a, config, out),
        Command::Gme(a) => commands::gme(&a, config, out),
        Command::Dpt2(a) => commands::dpt2(&a, config, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("almg: {e}");
            e.exit_code()
        }
    }
}
