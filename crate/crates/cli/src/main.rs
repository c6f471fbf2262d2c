mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use config::{EmbedArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "tabemb", version, about = "Table annotation with graph-refined column embeddings")]
struct Cli {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log filter (e.g. `debug`); defaults to `info`.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated dataset.
    Synth(commands::SynthArgs),
    /// Embed every split of a dataset and persist the graph pools.
    Embed {
        #[arg(long)]
        data: PathBuf,
        /// Directory for pool files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Train one task head on persisted pools.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pools: PathBuf,
        #[arg(long)]
        task: String,
        /// Directory for the checkpoint and training log.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Annotate tables with a trained checkpoint, writing JSONL.
    Predict(commands::PredictArgs),
    /// Score predictions against a labeled split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        task: String,
        #[arg(long)]
        predictions: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score a one-factor-at-a-time grid of configurations.
    Sweep(commands::SweepArgs),
    /// Class-to-class attention matrix of a trained GAT model.
    Heatmap(commands::ModelReportArgs),
    /// Write initial and refined column embeddings as TSV.
    ExportEmbeddings(commands::ModelReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = cli
        .log
        .as_deref()
        .map(EnvFilter::new)
        .unwrap_or_else(|| EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::Embed { data, out, embed } => commands::embed(&data, &out, &embed, &file),
        Command::Train {
            data,
            pools,
            task,
            out,
            embed,
            train,
        } => commands::train(&data, &pools, &task, &out, &embed, &train, &file),
        Command::Predict(args) => commands::predict(&args, &file),
        Command::Eval {
            data,
            split,
            task,
            predictions,
            out,
        } => commands::eval(&data, &split, &task, &predictions, &out),
        Command::Sweep(args) => commands::sweep(&args, &file),
        Command::Heatmap(args) => commands::heatmap(&args, &file),
        Command::ExportEmbeddings(args) => commands::export_embeddings(&args, &file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
