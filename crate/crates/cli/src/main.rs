mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Fairness-aware architecture search driven by a language model.
#[derive(Debug, Parser)]
#[command(name = "fairnas", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmKind {
    /// Replay canned replies from --mock-replies.
    Mock,
    /// OpenAI-compatible chat completions endpoint from the config.
    Http,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the design/evaluate loop described by a search config.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of iterations.
        #[arg(long)]
        iters: Option<u32>,
        /// Defaults to `mock` when --mock-replies is given, `http` otherwise.
        #[arg(long, value_enum)]
        llm: Option<LlmKind>,
        /// One JSON string per line, replayed in order.
        #[arg(long)]
        mock_replies: Option<PathBuf>,
        /// Override the run log path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from an existing run log instead of starting over.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        json: bool,
    },
    /// Static cost of one architecture on a device profile.
    Analyze {
        arch: PathBuf,
        #[arg(long)]
        device: PathBuf,
        #[arg(long, default_value_t = 1)]
        batch: u32,
        #[arg(long)]
        json: bool,
    },
    /// Accuracy and fairness scores from a predictions CSV.
    Fairness {
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check an architecture against a search space.
    Validate {
        arch: PathBuf,
        #[arg(long)]
        choices: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Summarize a run log.
    Inspect {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            iters,
            llm,
            mock_replies,
            out,
            resume,
            json,
        } => commands::search(commands::SearchArgs {
            config,
            iters,
            llm,
            mock_replies,
            out,
            resume,
            json,
        }),
        Command::Analyze {
            arch,
            device,
            batch,
            json,
        } => commands::analyze(&arch, &device, batch, json),
        Command::Fairness { csv, schema, json } => commands::fairness(&csv, &schema, json),
        Command::Validate {
            arch,
            choices,
            json,
        } => commands::validate(&arch, &choices, json),
        Command::Inspect { log, json } => commands::inspect(&log, json),
    };
    match result {
        Ok(status) => status.into(),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.status.into()
        }
    }
}
