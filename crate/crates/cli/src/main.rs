//! `asc`: batch front end for feature extraction, augmentation, training,
//! evaluation, fusion, ensembling and quantization.

mod cmd;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "asc", version, about = "Acoustic scene classification toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-file work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-mel features for every manifest row, scaled to [0, 1].
    Extract(cmd::extract::ExtractArgs),
    /// Generate an augmented waveform corpus with a provenance manifest.
    Augment(cmd::augment::AugmentArgs),
    /// Train a model on extracted features.
    Train(cmd::train::TrainArgs),
    /// Score one or more checkpoints on a manifest split.
    Evaluate(cmd::evaluate::EvaluateArgs),
    /// Two-stage fusion of 3-class and 10-class predictions.
    Fuse(cmd::fuse::FuseArgs),
    /// Combine prediction files from several models.
    Ensemble(cmd::ensemble::EnsembleArgs),
    /// Post-training int8 quantization of a checkpoint.
    Quantize(cmd::quantize::QuantizeArgs),
    /// Accuracy report and prediction overlap from prediction files.
    Report(cmd::report::ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Augment(_) => "augment",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Fuse(_) => "fuse",
            Command::Ensemble(_) => "ensemble",
            Command::Quantize(_) => "quantize",
            Command::Report(_) => "report",
        }
    }
}

fn load_config(g: &GlobalArgs) -> CliResult<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli.global)?;
    let name = cli.command.name();
    match cli.command {
        Command::Extract(a) => cmd::extract::run(&mut cfg, &cli.global, a)?,
        Command::Augment(a) => cmd::augment::run(&mut cfg, &cli.global, a)?,
        Command::Train(a) => cmd::train::run(&mut cfg, a)?,
        Command::Evaluate(a) => cmd::evaluate::run(&mut cfg, a)?,
        Command::Fuse(a) => cmd::fuse::run(&mut cfg, a)?,
        Command::Ensemble(a) => cmd::ensemble::run(&mut cfg, a)?,
        Command::Quantize(a) => cmd::quantize::run(&mut cfg, a)?,
        Command::Report(a) => cmd::report::run(&mut cfg, a)?,
    }
    print!("{}", cfg.reproducibility_block(name));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                src = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
