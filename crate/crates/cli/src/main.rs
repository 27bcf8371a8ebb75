//! `fdclass`: simulate, split, fit, evaluate and report.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures inside a sampler or factorization.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fdclass", version, about = "Bayesian classification of multiclass functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset.
    Simulate {
        /// Generator spec (TOML); flags override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// omp, ump, mlo, lda or qda.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/test split.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model (every J of the prior support for basis models).
    Fit {
        /// Run configuration (TOML); flags override its fields.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        j_min: Option<usize>,
        #[arg(long)]
        j_max: Option<usize>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset label used in reports.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Classify a test set from stored draws and write the averaged report.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Combine report files into a dataset-by-model table.
    Report {
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> fdclass::Result<()> {
    match cli.command {
        Command::Simulate {
            spec,
            kind,
            seed,
            n_per_class,
            out,
        } => commands::simulate(commands::SimulateArgs {
            spec,
            kind,
            seed,
            n_per_class,
            out,
        }),
        Command::Split {
            data,
            test_fraction,
            seed,
            out,
        } => commands::split(&data, test_fraction, seed, &out),
        Command::Fit {
            config,
            model,
            seed,
            iterations,
            burn_in,
            j_min,
            j_max,
            train,
            out,
            dataset,
        } => commands::fit(
            &config,
            commands::FitOverrides {
                model,
                seed,
                iterations,
                burn_in,
                j_min,
                j_max,
                train,
                out,
                dataset,
            },
        ),
        Command::Evaluate { run, test, name } => commands::evaluate(&run, &test, name.as_deref()),
        Command::Report { files, out } => commands::report(&files, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
