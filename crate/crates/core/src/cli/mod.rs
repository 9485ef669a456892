//! Command-line driver.
//!
//! Exit status: 0 when every executed check passed, 1 when a check failed,
//! 2 for configuration or output-directory errors, 3 when the time stepper
//! broke down.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{RunConfig, KEYS_HELP};

#[derive(Debug, Parser)]
#[command(name = "kahler-flow", version, about = "Rotationally symmetric Kähler metrics under the Kähler–Ricci flow", after_help = KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Comma-separated subset of csv,json,svg [default: csv,json,svg].
    #[arg(long, global = true, value_name = "LIST")]
    formats: Option<String>,
    /// Worker threads [default: available CPUs].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<String>,
    /// Seed for oracle sample points [default: 42].
    #[arg(long, global = true, value_name = "N")]
    seed: Option<String>,
    /// Complex dimension [default: 2].
    #[arg(long, global = true, value_name = "N")]
    n: Option<String>,
    /// Exponent a [default: 1].
    #[arg(long, global = true, value_name = "A", allow_hyphen_values = true)]
    a: Option<String>,
    /// Cone parameter c [default: 1].
    #[arg(long, global = true, value_name = "C", allow_hyphen_values = true)]
    c: Option<String>,
    /// paper-n2 or corrected-general [default: corrected-general].
    #[arg(long, global = true, value_name = "NAME")]
    variant: Option<String>,
    /// Final flow time [default: 1e-3].
    #[arg(long = "t-final", global = true, value_name = "T")]
    t_final: Option<String>,
    /// Grid as rmin:rmax:nodes [default: -12:12:2401].
    #[arg(long, global = true, value_name = "SPEC", allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate φ, ψ, Ricci eigenvalues and bisectional curvatures over the grid.
    Report,
    /// Evolve by the flow and locate where the radial Ricci eigenvalue turns negative.
    Flow,
    /// Run every applicable check for the configured family.
    Verify,
    /// Run `verify` over the sweep ranges from the configuration file.
    Sweep,
    /// Compare closed forms with finite differences and audit the general-dimension formulas.
    Oracle,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
    Compute(crate::Error),
    Solver(crate::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Compute(_) => 1,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(e) => write!(f, "output error: {e}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
            CliError::Solver(e) => write!(f, "solver failure: {e}"),
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text, path).map_err(CliError::Config)?;
    }
    let overrides = [
        ("out", &cli.out),
        ("formats", &cli.formats),
        ("jobs", &cli.jobs),
        ("seed", &cli.seed),
        ("n", &cli.n),
        ("a", &cli.a),
        ("c", &cli.c),
        ("variant", &cli.variant),
        ("t_final", &cli.t_final),
        ("grid", &cli.grid),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v).map_err(CliError::Config)?;
        }
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<commands::Outcome, CliError> {
    let cfg = build_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    pool.install(|| match cli.command {
        Command::Report => commands::cmd_report(&cfg),
        Command::Flow => commands::cmd_flow(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
        Command::Oracle => commands::cmd_oracle(&cfg),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            outcome.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
