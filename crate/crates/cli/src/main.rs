use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod output;
mod run;

use config::ConfigError;

/// Exit code for configuration parse/validation problems.
const EXIT_CONFIG: u8 = 2;
/// Exit code for numerical failures in any computed row.
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dbe",
    about = "Scattering-derived thermal rates and detailed-balance diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
struct CommonArgs {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for independent sweep rows (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the quadrature relative tolerance from the config.
    #[arg(long)]
    quad_tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Temperature sweep of the balance ratios and stationarity conditions.
    Sweep(CommonArgs),
    /// Scattering-defect and identity diagnostics.
    Check(CommonArgs),
    /// Population trajectory with its entropy production.
    Evolve(CommonArgs),
    /// Full rate-table export per temperature.
    Rates(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&run::Context) -> run::RunStatus) = match &cli.command {
        Command::Sweep(a) => (a, run::sweep),
        Command::Check(a) => (a, run::check),
        Command::Evolve(a) => (a, run::evolve),
        Command::Rates(a) => (a, run::rates),
    };

    let cfg = match config::load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(err) => {
            report_config_error(&err);
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let ctx = match run::Context::new(cfg, args.out.clone(), args.format, args.jobs, args.quad_tol)
    {
        Ok(ctx) => ctx,
        Err(err) => {
            report_config_error(&err);
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    match runner(&ctx) {
        run::RunStatus::Clean => ExitCode::SUCCESS,
        run::RunStatus::ConfigProblem(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        run::RunStatus::NumericalFailures(n) => {
            eprintln!("error: {n} row(s) failed numerically; see status columns");
            ExitCode::from(EXIT_NUMERIC)
        }
        run::RunStatus::Fatal(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

fn report_config_error(err: &ConfigError) {
    match err {
        ConfigError::Io(msg) | ConfigError::Parse(msg) => eprintln!("error: {msg}"),
        ConfigError::Validation(problems) => {
            eprintln!("error: configuration invalid:");
            for p in problems {
                eprintln!("  - {p}");
            }
        }
    }
}
