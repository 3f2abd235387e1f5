use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsvad::pipeline::{self, extract_overrides, PipelineConfig};
use tsvad::Result;

/// Two-stream video anomaly detection.
///
/// Any config value can be overridden with `--section.key=value`, e.g.
/// `--train.epochs=20` or `--paths.kb=out/k.kb`.
#[derive(Parser)]
#[command(name = "tsvad", version)]
struct Cli {
    /// JSON configuration file; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the hash encoder on training snippet features.
    TrainHash,
    /// Build the knowledge base from training features.
    BuildKb,
    /// Score test snippets against the knowledge base.
    ScoreKr,
    /// Score test frames by maximum local prediction error.
    ScoreCr,
    /// Choose the MLE window size on simulated pseudo-anomalies.
    SelectWindow,
    /// Normalize, smooth and fuse both streams, then report AUC.
    FuseEval,
    /// Propagate tensor shapes through a network description.
    CheckShapes {
        /// Write the bundled network description to this file and exit.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Write pseudo-anomalous copies of the training videos.
    Simulate,
    /// Generate a small synthetic dataset and a matching config.
    Synth,
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<String> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::TrainHash => pipeline::train_hash(&cfg),
        Command::BuildKb => pipeline::build_kb(&cfg),
        Command::ScoreKr => pipeline::score_kr(&cfg),
        Command::ScoreCr => pipeline::score_cr(&cfg),
        Command::SelectWindow => pipeline::select_window_cmd(&cfg),
        Command::FuseEval => pipeline::fuse_eval(&cfg),
        Command::CheckShapes { emit: Some(path) } => {
            pipeline::emit_arch(&path)?;
            Ok(format!("network description written to {}", path.display()))
        }
        Command::CheckShapes { emit: None } => pipeline::check_shapes(&cfg),
        Command::Simulate => pipeline::simulate(&cfg),
        Command::Synth => pipeline::synth(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = extract_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
