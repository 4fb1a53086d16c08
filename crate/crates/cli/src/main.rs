use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pilotwave_cli::config::{parse_config, Experiment};
use pilotwave_cli::report::{read_report, recheck};
use pilotwave_cli::{experiments, resolve_output_dir, OUT_ENV};

#[derive(Parser)]
#[command(name = "pilotwave", version, about = "Two-particle two-slit pilot-wave experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override ensemble.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override experiment.workers.
        #[arg(long)]
        workers: Option<usize>,
        /// Output base directory (overrides PILOTWAVE_OUT and experiment.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiments and the config sections they read.
    List,
    /// Re-evaluate the assertions of a written report.
    Check {
        /// Directory containing report.json.
        dir: PathBuf,
    },
}

const FAILED: u8 = 1;
const ERROR: u8 = 2;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => run(config, seed, workers, out),
        Command::List => {
            list();
            ExitCode::SUCCESS
        }
        Command::Check { dir } => check(dir),
    }
}

fn run(config: PathBuf, seed: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(ERROR);
        }
    };
    let mut spec = match parse_config(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(ERROR);
        }
    };
    if let Some(seed) = seed {
        spec.ensemble.master_seed = seed;
    }
    if let Some(w) = workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(ERROR);
        }
        spec.workers = w;
    }
    let base = resolve_output_dir(out, std::env::var_os(OUT_ENV), spec.output_dir.clone());
    match experiments::run(&spec, &base) {
        Ok(report) => {
            for a in &report.assertions {
                println!("{}", a.line());
            }
            let dir = base.join(spec.experiment.name());
            if report.passed() {
                println!("{}: all assertions passed ({})", report.experiment, dir.display());
                ExitCode::SUCCESS
            } else {
                println!("{}: assertions failed ({})", report.experiment, dir.display());
                ExitCode::from(FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", spec.experiment);
            ExitCode::from(ERROR)
        }
    }
}

fn list() {
    println!("required key: experiment.name");
    println!("optional keys: every other key; see README for the full table");
    for e in Experiment::ALL {
        println!("{:<15} {}", e.name(), e.description());
        println!("{:<15} sections: experiment, {}", "", e.sections().join(", "));
    }
}

fn check(dir: PathBuf) -> ExitCode {
    let verdict = read_report(&dir).and_then(|r| recheck(&r).map(|ok| (r, ok)));
    match verdict {
        Ok((report, ok)) => {
            for a in &report.assertions {
                println!("{}", a.line());
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR)
        }
    }
}
