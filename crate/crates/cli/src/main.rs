//! `admmnet`: train, evaluate and benchmark ADMM-trained networks.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "admmnet", version, about = "Gradient-free network training by ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with ADMM (one worker runs single-node, more run data-parallel)
    Train(RunArgs),
    /// Train the SGD baseline
    TrainSgd(RunArgs),
    /// Score a saved model on a dataset
    Eval(RunArgs),
    /// Time to a test-accuracy threshold for each worker count
    BenchScaling(RunArgs),
    /// ADMM and SGD on the same split, written to one file
    Compare(RunArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::train(&RunConfig::resolve(a, "metrics.csv")?),
        Command::TrainSgd(a) => commands::train_sgd(&RunConfig::resolve(a, "metrics.csv")?),
        Command::Eval(a) => commands::eval(&RunConfig::resolve(a, "metrics.csv")?),
        Command::BenchScaling(a) => commands::bench_scaling(&RunConfig::resolve(a, "scaling.csv")?),
        Command::Compare(a) => commands::compare(&RunConfig::resolve(a, "compare.csv")?),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, matching configuration errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("admmnet: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
