mod config;
mod manifest;
mod providers;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::NaiveDate;
use clap::{ArgGroup, Args, Parser, Subcommand};
use contrasim::projnet::LossKind;
use log::info;

use crate::config::{PipelineConfig, ProviderKind};
use crate::stages::{usage, Query, Run, UsageError};

#[derive(Parser)]
#[command(
    name = "contrasim",
    version,
    about = "Weighted contrastive similarity spaces for daily news sets"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Embedding provider; overrides `providers.kind`.
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,
    /// Projection loss; overrides `projection.loss`.
    #[arg(long, global = true, value_parser = parse_loss)]
    loss: Option<LossKind>,
    /// Neighbor count for audits and result count for queries.
    #[arg(long, global = true)]
    k: Option<usize>,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s {
        "wscl" => Ok(LossKind::Wscl),
        "cwcl" => Ok(LossKind::Cwcl),
        _ => Err(format!("unknown loss {s:?}; expected wscl or cwcl")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read, filter, label and split the dataset.
    Ingest,
    /// Write augmented sets for every training day.
    Augment,
    /// Embed every day and augmented set into the run's store.
    Embed,
    /// Train the projection network.
    TrainProj,
    /// Information-density metrics of the projection and encoder spaces.
    AuditSpace,
    /// Train the projection, encoder and combined classifier heads.
    TrainHeads,
    /// Evaluate the classifier heads on the test split.
    EvalHeads,
    /// Most similar indexed days for a date or raw headlines.
    QuerySimilar(QueryArgs),
    /// Uniform-random classifier baseline on the test split.
    Baseline,
    /// Mean embedding shift per augmentation action.
    ShiftAnalysis,
    /// Validate the configuration and print it with defaults filled in.
    CheckConfig,
}

#[derive(Args)]
#[command(group(ArgGroup::new("query").required(true).args(["date", "text"])))]
struct QueryArgs {
    /// Query with an ingested day; that day is excluded from the results.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Query headline; repeat for several headlines.
    #[arg(long)]
    text: Vec<String>,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let validated = match &g.config {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("config {} not found", path.display())));
            }
            config::validate_file(path)
        }
        None => config::validate_str(""),
    }
    .map_err(|errs| usage(format!("invalid configuration:\n  {}", errs.join("\n  "))))?;
    for note in &validated.notes {
        info!("{note}");
    }
    let mut c = validated.config;
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(o) = &g.out {
        c.output_dir = o.clone();
    }
    if let Some(p) = g.provider {
        c.providers.kind = p;
    }
    if let Some(l) = g.loss {
        c.projection.loss = l;
    }
    if let Some(k) = g.k {
        c.metrics.k = k;
        c.retrieval.k = k;
    }
    config::revalidate(c).map_err(|errs| usage(format!("invalid configuration:\n  {}", errs.join("\n  "))))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.global)?;
    if let Command::CheckConfig = cli.command {
        print!("{}", toml::to_string(&config)?);
        return Ok(());
    }
    let run = Run {
        out: config.output_dir.clone(),
        config,
    };
    match cli.command {
        Command::Ingest => stages::ingest(&run),
        Command::Augment => stages::augment(&run),
        Command::Embed => stages::embed(&run),
        Command::TrainProj => stages::train_proj(&run),
        Command::AuditSpace => stages::audit_space_cmd(&run),
        Command::TrainHeads => stages::train_heads(&run),
        Command::EvalHeads => stages::eval_heads(&run),
        Command::QuerySimilar(q) => {
            let query = match q.date {
                Some(d) => Query::Date(d),
                None => Query::Text(q.text),
            };
            stages::query_similar(&run, &query)
        }
        Command::Baseline => stages::baseline(&run),
        Command::ShiftAnalysis => stages::shift_analysis(&run),
        Command::CheckConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
