use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obstacle_core::acceptance;
use obstacle_core::error::Result;
use obstacle_core::runner::{self, ExitStatus, ExperimentConfig, RunOutcome};

/// Obstacle-problem workbench: radial solves, grid audits, two-phase diagnostics.
#[derive(Parser, Debug)]
#[command(name = "obstacle-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment config
    Run { config: PathBuf },
    /// Run a config once per value of a numeric key and combine the results
    Sweep {
        config: PathBuf,
        /// Config key to vary, e.g. numeric.h
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty
        #[arg(long, value_delimiter = ',', num_args = 0.., allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Run the acceptance suite and print one line per criterion
    Accept,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::parse(&text)
}

fn save_acceptance(outcomes: &[acceptance::Outcome], dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("acceptance.csv");
    acceptance::write_csv(outcomes, std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report(outcome: Result<RunOutcome>) -> ExitCode {
    match outcome {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.status == ExitStatus::NonConvergence {
                eprintln!("warning: a solve stopped before reaching the tolerance");
            }
            ExitCode::from(out.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::for_error(&e).code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = runner::output_root();
    match cli.command {
        Command::Run { config } => report(load(&config).and_then(|cfg| runner::run(&cfg, &root))),
        Command::Sweep { config, param, values } => {
            let values: Vec<String> = values.into_iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            report(load(&config).and_then(|cfg| runner::sweep(&cfg, &param, &values, &root)))
        }
        Command::Accept => {
            let outcomes = acceptance::run_all();
            for o in &outcomes {
                println!("{}", o.line());
            }
            if let Err(e) = save_acceptance(&outcomes, &root.join("acceptance")) {
                eprintln!("error: {e}");
                return ExitCode::from(ExitStatus::Failure.code() as u8);
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!("{passed}/{} criteria passed", outcomes.len());
            if passed == outcomes.len() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ExitStatus::Failure.code() as u8)
            }
        }
    }
}
