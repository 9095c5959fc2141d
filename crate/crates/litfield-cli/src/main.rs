use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use litfield_cli::commands;
use litfield_cli::config::PipelineConfig;

/// Semantic-neighborhood metrics and citation-rate models over publication
/// corpora, as a deterministic artifact pipeline.
#[derive(Parser)]
#[command(name = "litfield", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch, validate, and persist the corpus per field.
    Ingest(Common),
    /// Build bag-of-words matrices, import external ones, and normalize.
    Embed(Common),
    /// Grow each field's collection from its center and find converged ids.
    Expand(Common),
    /// Compute density, asymmetry, citation rate, and age per publication.
    Metrics(Common),
    /// Split, standardize, and fit the configured model variants by MCMC.
    Fit(Common),
    /// Score fitted models on the held-out rows and rank them.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Also emit the benchmark comparison table.
        #[arg(long)]
        table1: bool,
    },
    /// Field classification accuracy from pooled embeddings.
    Classify(Common),
    /// Export figure data: effect sizes, model scores, projections.
    Report(Common),
}

type CommandFn = Box<dyn FnOnce(&PipelineConfig) -> Result<(), litfield_cli::CliError>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, CommandFn) =
        match &cli.command {
            Command::Ingest(c) => (c, Box::new(commands::cmd_ingest)),
            Command::Embed(c) => (c, Box::new(commands::cmd_embed)),
            Command::Expand(c) => (c, Box::new(commands::cmd_expand)),
            Command::Metrics(c) => (c, Box::new(commands::cmd_metrics)),
            Command::Fit(c) => (c, Box::new(commands::cmd_fit)),
            Command::Evaluate { common, table1 } => {
                let table1 = *table1;
                (common, Box::new(move |config| commands::cmd_evaluate(config, table1)))
            }
            Command::Classify(c) => (c, Box::new(commands::cmd_classify)),
            Command::Report(c) => (c, Box::new(commands::cmd_report)),
        };

    let config = match PipelineConfig::load(&common.config, common.seed, common.out.clone()) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
