#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{json_text, OutputSet};

#[derive(Debug, Parser)]
#[command(name = "coag", version, about = "Arm-merging coagulation: ODE, closed forms, simulation and limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format; overrides `output.format` of the config.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical constants of the normalized initial state.
    Analyze(Common),
    /// Integrate the truncated ODE system.
    Ode(Common),
    /// Closed-form concentrations of a solvable family.
    Explicit(Common),
    /// Marcus-Lushnikov simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Record wall-clock time in simulate.json.
        #[arg(long)]
        timing: bool,
    },
    /// Limiting concentrations as t goes to infinity.
    Limit(Common),
    /// Galton-Watson total progeny, by series and by sampling.
    Gw(Common),
    /// Compare two (t,a,b,m,value) tables.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(f) = common.format {
        cfg.output.format = f;
    }
    let dir = match (&common.out, &cfg.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("."),
    };
    Ok((cfg, dir))
}

fn write(out: OutputSet, dir: &Path) -> Result<(), CliError> {
    for path in out.write(dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_with_config(common: &Common, f: impl FnOnce(&RunConfig) -> Result<OutputSet, CliError>) -> Result<(), CliError> {
    let (cfg, dir) = load(common)?;
    write(f(&cfg)?, &dir)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(common) => {
            let (cfg, dir) = load(&common)?;
            let report = commands::analyze(&cfg)?;
            print!("{}", json_text(&report));
            let mut out = OutputSet::default();
            out.add_json("analyze.json", &report);
            out.write(&dir)?;
            Ok(())
        }
        Command::Ode(common) => run_with_config(&common, commands::ode),
        Command::Explicit(common) => run_with_config(&common, commands::explicit),
        Command::Simulate { common, timing } => run_with_config(&common, |cfg| commands::simulate(cfg, timing)),
        Command::Limit(common) => run_with_config(&common, commands::limit),
        Command::Gw(common) => run_with_config(&common, commands::gw),
        Command::Compare { first, second, tolerance } => {
            let report = commands::compare(&first, &second, tolerance)?;
            print!("{}", json_text(&report));
            let max = report["max_abs_diff"].as_f64().unwrap_or(f64::INFINITY);
            if max <= tolerance {
                Ok(())
            } else {
                Err(CliError::OverTolerance { max, tolerance })
            }
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("COAG_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::Config(format!("COAG_THREADS must be a positive integer (got {value:?})")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
