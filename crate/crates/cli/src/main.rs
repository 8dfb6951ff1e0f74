mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::{load_config, Overrides};
use crate::stages::Ctx;

/// Survey-grounded value benchmark pipeline.
#[derive(Parser)]
#[command(name = "dvmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Skip the stage when its manifest matches the current inputs and config.
    #[arg(long)]
    resume: bool,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic survey CSV.
    Generate(Common),
    Ingest(Common),
    Archetype(Common),
    Split(Common),
    Prompts(Common),
    Eval(Common),
    FlipRate(Common),
    Importance(Common),
    TrainToy(Common),
    Semdist(Common),
    Report(Common),
    /// Runs generate (when no survey is given) through eval, then report.
    All(Common),
}

fn init_logging() {
    let filter = EnvFilter::try_from_env("DVMAP_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, name) = match &cli.command {
        Command::Generate(c) => (c, "generate"),
        Command::Ingest(c) => (c, "ingest"),
        Command::Archetype(c) => (c, "archetype"),
        Command::Split(c) => (c, "split"),
        Command::Prompts(c) => (c, "prompts"),
        Command::Eval(c) => (c, "eval"),
        Command::FlipRate(c) => (c, "flip-rate"),
        Command::Importance(c) => (c, "importance"),
        Command::TrainToy(c) => (c, "train-toy"),
        Command::Semdist(c) => (c, "semdist"),
        Command::Report(c) => (c, "report"),
        Command::All(c) => (c, "all"),
    };
    let overrides = Overrides {
        seed: common.seed,
        out_dir: common.out.clone(),
    };
    let cfg = load_config(&common.config, &overrides)?;
    std::fs::create_dir_all(&cfg.paths.out_dir)?;
    let has_survey = cfg.paths.survey.is_some();
    let ctx = Ctx::new(cfg, common.resume)?;
    ctx.write_resolved_config()?;
    tracing::info!(command = name, "starting");
    match cli.command {
        Command::Generate(_) => ctx.generate(),
        Command::Ingest(_) => ctx.ingest(),
        Command::Archetype(_) => ctx.archetype(),
        Command::Split(_) => ctx.split(),
        Command::Prompts(_) => ctx.prompts(),
        Command::Eval(_) => ctx.eval(),
        Command::FlipRate(_) => ctx.flip_rate(),
        Command::Importance(_) => ctx.importance(),
        Command::TrainToy(_) => ctx.train_toy(),
        Command::Semdist(_) => ctx.semdist(),
        Command::Report(_) => ctx.report(),
        Command::All(_) => {
            if !has_survey {
                ctx.generate()?;
            }
            ctx.ingest()?;
            ctx.archetype()?;
            ctx.split()?;
            ctx.prompts()?;
            ctx.eval()?;
            ctx.report()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = format!("{e:#}"), "command failed");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
