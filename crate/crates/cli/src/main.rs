use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsood_cli::{cmd_bench, cmd_eval, cmd_inspect, cmd_matrix, cmd_train, CliError, Overrides, Run};

#[derive(Parser)]
#[command(name = "tsood", version, about = "Time-series OOD detection benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for `matrix`. `bench` always uses one.
    #[arg(long)]
    jobs: Option<usize>,
    /// Checkpoint directory; defaults to `<out>/checkpoint`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a backbone on the ID classes.
    Train(RunArgs),
    /// Fit scorers, score the evaluation mixture and report metrics.
    Eval(RunArgs),
    /// Per-sample scorer overhead, single-threaded.
    Bench(RunArgs),
    /// Train and evaluate every cell of the config's matrix section.
    Matrix(RunArgs),
    /// Print a summary of a checkpoint directory.
    Inspect { checkpoint: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let prepare = |a: &RunArgs| {
        let overrides = Overrides {
            out: a.out.clone(),
            seed: a.seed,
            jobs: a.jobs,
            checkpoint: a.checkpoint.clone(),
        };
        Run::from_path(&a.config, &overrides)
    };
    match cli.command {
        Command::Train(a) => {
            let dir = cmd_train(&prepare(&a)?)?;
            println!("checkpoint written to {}", dir.display());
        }
        Command::Eval(a) => {
            let report = cmd_eval(&prepare(&a)?, a.checkpoint.as_deref())?;
            println!("{:<10} {:>8} {:>8}", "method", "AUROC", "AUPR");
            for (m, r) in &report.methods {
                println!("{m:<10} {:>8.4} {:>8.4}", r.auroc, r.aupr);
            }
            println!("ID accuracy {:.4}", report.id_accuracy);
        }
        Command::Bench(a) => {
            if a.jobs.is_some_and(|j| j > 1) {
                eprintln!("note: bench ignores --jobs and runs on one thread");
            }
            for r in cmd_bench(&prepare(&a)?, a.checkpoint.as_deref())? {
                println!("{:<10} {:>10.4} ms", r.method, r.mean_ms);
            }
        }
        Command::Matrix(a) => {
            let outcome = cmd_matrix(&prepare(&a)?, a.jobs.unwrap_or(1))?;
            for c in &outcome.cells {
                match &c.error {
                    None => println!("{} ok", c.id),
                    Some(e) => println!("{} FAILED: {e}", c.id),
                }
            }
        }
        Command::Inspect { checkpoint } => {
            let v = cmd_inspect(&checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
