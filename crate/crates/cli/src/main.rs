mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, Overrides};

#[derive(Debug, Parser)]
#[command(name = "latentqa", version, about = "Latent-rationale multi-hop QA: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Every command writes only below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Score documents one at a time instead of as sets.
    #[arg(long, global = true)]
    independent_docs: bool,
    #[arg(long, global = true)]
    k_doc: Option<usize>,
    #[arg(long, global = true)]
    k_sent: Option<usize>,
    /// Most rationale sentences per selected document.
    #[arg(long, global = true)]
    max_rationale: Option<usize>,
    /// Only contiguous sentence runs as rationales.
    #[arg(long, global = true)]
    contiguous: bool,
    /// HTTP endpoint of an answer generation service (predict only).
    #[arg(long, global = true)]
    external_endpoint: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Checkpoint to read (eval, predict, shortcuts).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Dataset to read (eval, predict, shortcuts).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a synthetic train/dev corpus.
    Synth,
    /// Train from scratch and write checkpoints plus history.
    Train,
    /// Write a metrics report for a checkpoint on a dataset.
    Eval,
    /// Dump per-example predictions.
    Predict,
    /// Finite-difference check of the analytic gradients.
    Gradcheck,
    /// List examples answered right from a single gold document.
    Shortcuts,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            independent_docs: self.independent_docs,
            k_doc: self.k_doc,
            k_sent: self.k_sent,
            max_rationale: self.max_rationale,
            contiguous: self.contiguous,
            external_endpoint: self.external_endpoint.clone(),
            learning_rate: self.learning_rate,
            checkpoint: self.checkpoint.clone(),
            data: self.data.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = parse_config(cli.config.as_deref(), &cli.overrides()).and_then(|cfg| match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
        Command::Shortcuts => commands::shortcuts(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
