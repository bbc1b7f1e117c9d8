//! `topicforge`: stock-comment topics and sentiment as forecasting features.

mod config;
mod manifest;
mod stages;

use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use topicforge::eval::Variant;
use topicforge::synth::{generate, SyntheticConfig};

use config::{validate_config, Overrides, RunConfig};
use manifest::DirLock;
use stages::{Runner, Stage};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "topicforge",
    version,
    about = "Topic-aware sentiment features for stock forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and align comments and price bars.
    Ingest(RunArgs),
    /// Compute the technical indicator table.
    Features(RunArgs),
    /// Score comments and build the daily sentiment column.
    Sentiment(RunArgs),
    /// Embed, reduce, cluster and describe topics.
    Topics(RunArgs),
    /// Train every model, variant and seed.
    Train(RunArgs),
    /// Aggregate per-seed metrics into report.csv.
    Evaluate(RunArgs),
    /// Write report.md and the plots.
    Report(RunArgs),
    /// Run all seven stages in order.
    Run(RunArgs),
    /// Check a config file without running anything.
    Validate(RunArgs),
    /// Write a synthetic corpus, price series and matching config.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replace the forecast seed list and the topic seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ticker: Option<String>,
    /// baseline, sentiment or topic.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 250)]
    days: usize,
    #[arg(long, default_value_t = 2022)]
    seed: u64,
    #[arg(long, default_value = "SYN")]
    ticker: String,
}

enum Failure {
    Validation(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut errors = Vec::new();
    let variant = match args.variant.as_deref().map(str::parse::<Variant>) {
        None => None,
        Some(Ok(v)) => Some(v),
        Some(Err(e)) => {
            errors.push(format!("--variant: {e}"));
            None
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        ticker: args.ticker.clone(),
        variant,
    };
    match validate_config(&args.config, &overrides) {
        Ok((cfg, warnings)) => {
            for w in warnings {
                log::warn!("{w}");
            }
            if errors.is_empty() {
                Ok(cfg)
            } else {
                Err(Failure::Validation(errors))
            }
        }
        Err(v) => {
            for w in v.warnings {
                log::warn!("{w}");
            }
            errors.extend(v.errors);
            Err(Failure::Validation(errors))
        }
    }
}

fn run_stages(args: &RunArgs, stages: &[Stage]) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let _lock = DirLock::acquire(&cfg.paths.output)?;
    let mut runner = Runner::new(&cfg)?;
    for &stage in stages {
        runner.run(stage)?;
    }
    Ok(())
}

const GENERATED_CONFIG: &str = r#"ticker = "{ticker}"

[paths]
comments = "comments.csv"
bars = "bars.csv"
output = "out"

[topics]
seed = 42

[forecast]
lookback = 5
epochs = 200
seeds = [0, 1, 2]
models = ["lstm", "cnn", "cnn_lstm", "gan"]
variants = ["baseline", "sentiment", "topic_sentiment"]
"#;

fn generate_corpus(args: &GenerateArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let corpus = generate(&SyntheticConfig {
        ticker: args.ticker.clone(),
        days: args.days,
        seed: args.seed,
        ..SyntheticConfig::default()
    });
    let comments = File::create(args.out.join("comments.csv"))?;
    let bars = File::create(args.out.join("bars.csv"))?;
    corpus.write(comments, bars)?;
    fs::write(
        args.out.join("run.toml"),
        GENERATED_CONFIG.replace("{ticker}", &args.ticker),
    )?;
    println!(
        "generate: {} comments over {} trading days in {}",
        corpus.comments.len(),
        corpus.bars.len(),
        args.out.display()
    );
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("TOPICFORGE_THREADS") else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into())),
        _ => Err(Failure::Validation(vec![format!(
            "TOPICFORGE_THREADS must be a positive integer, got `{raw}`"
        )])),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    configure_threads()?;
    let single = |args: &RunArgs, stage: Stage| run_stages(args, &[stage]);
    match command {
        Command::Ingest(a) => single(&a, Stage::Ingest),
        Command::Features(a) => single(&a, Stage::Features),
        Command::Sentiment(a) => single(&a, Stage::Sentiment),
        Command::Topics(a) => single(&a, Stage::Topics),
        Command::Train(a) => single(&a, Stage::Train),
        Command::Evaluate(a) => single(&a, Stage::Evaluate),
        Command::Report(a) => single(&a, Stage::Report),
        Command::Run(a) => run_stages(&a, &Stage::ALL),
        Command::Validate(a) => {
            load_config(&a)?;
            println!("{}: ok", a.config.display());
            Ok(())
        }
        Command::Generate(a) => Ok(generate_corpus(&a)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(errors)) => {
            eprintln!("invalid configuration:");
            for e in errors {
                eprintln!("  {e}");
            }
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
