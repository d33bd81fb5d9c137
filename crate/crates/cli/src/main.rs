//! `biasprobe`: expand templates, score them with a masked language model,
//! and report bias metrics.
//!
//! Exit codes: 0 ok, 1 unexpected, 2 validation, 3 I/O, 4 backend.

mod commands;
mod config;
mod error;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "biasprobe", version, about = "Probe masked language models for social bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check lexicons and template sets.
    Validate(ValidateArgs),
    /// Print every filled sentence of a template set.
    Expand(ExpandArgs),
    /// Score all template sets and write tensor files.
    Score(RunArgs),
    /// Build report JSON, CSV and SVG charts from scored tensors.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lexicon: Vec<PathBuf>,
    #[arg(long = "template-set")]
    template_set: Vec<PathBuf>,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long = "template-set")]
    template_set: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Backend for a single-model config. Falls back to
    /// BIASPROBE_BACKEND_URL when the config names no backend.
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Timestamp recorded in the report metadata. Defaults to the config
    /// value, then SOURCE_DATE_EPOCH; otherwise none is recorded.
    #[arg(long)]
    timestamp: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            backend_url: self.backend_url.clone(),
            max_concurrency: self.max_concurrency,
            output_dir: self.out.clone(),
            timestamp: None,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(args) => {
            if args.config.is_none() && args.lexicon.is_empty() {
                return Err(CliError::Validation(
                    "nothing to validate: pass --config or --lexicon".into(),
                ));
            }
            let config = args
                .config
                .as_deref()
                .map(|p| RunConfig::load(p, &Overrides::default(), false))
                .transpose()?;
            commands::validate(config.as_ref(), &args.lexicon, &args.template_set)?;
        }
        Command::Expand(args) => {
            let stdout = io::stdout();
            commands::expand_to(&args.lexicon, &args.template_set, &mut stdout.lock())?;
        }
        Command::Score(args) => {
            let config = RunConfig::load(&args.config, &args.overrides(), true)?;
            commands::score(&config)?;
        }
        Command::Report(args) => {
            let mut overrides = args.run.overrides();
            overrides.timestamp = args.timestamp;
            let mut config = RunConfig::load(&args.run.config, &overrides, false)?;
            if config.timestamp.is_none() {
                config.timestamp = std::env::var("SOURCE_DATE_EPOCH").ok();
            }
            commands::report(&config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
