mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "todlab", version, about = "Session-level task-oriented dialog training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    E2e,
    Policy,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (train/valid/test JSON).
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train stage 1, stage 2 or both.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        stage: StageArg,
        /// Starting checkpoint (stage 2 start point, or stage 1 warm start).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Drop sessions touching this domain from training.
        #[arg(long)]
        exclude_domain: Option<String>,
        /// Keep this many training sessions of the excluded domain.
        #[arg(long, default_value_t = 0)]
        k_shot: usize,
        #[arg(long)]
        force: bool,
        #[arg(long, short)]
        verbose: bool,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "e2e")]
        mode: ModeArg,
        /// Report sessions touching this domain separately.
        #[arg(long)]
        exclude_domain: Option<String>,
        /// Few-shot count the checkpoint was trained with (recorded only).
        #[arg(long)]
        k_shot: Option<usize>,
        /// Output directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run a hyperparameter sweep of stage-2 training plus evaluation.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Compare run directories in a markdown table.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, force } => commands::gen_data(&config, &out, force),
        Command::Train {
            config,
            data,
            out,
            stage,
            init,
            exclude_domain,
            k_shot,
            force,
            verbose,
        } => commands::train(commands::TrainArgs {
            config,
            data,
            out,
            stage,
            init,
            exclude_domain,
            k_shot,
            force,
            verbose,
        }),
        Command::Eval {
            checkpoint,
            data,
            mode,
            exclude_domain,
            k_shot,
            out,
            force,
        } => commands::eval(commands::EvalArgs {
            checkpoint,
            data,
            mode,
            exclude_domain,
            k_shot,
            out,
            force,
        }),
        Command::Sweep { spec, out, force } => commands::sweep(&spec, &out, force),
        Command::Report { runs, out } => commands::report(&runs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
