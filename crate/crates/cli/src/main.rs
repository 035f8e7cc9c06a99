//! `biae`: corpus tools, weak labels, training and evaluation run locally;
//! `serve` hosts the HTTP service and `chat` and `predict --server` talk to it.

mod offline;
mod online;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use biae_core::config::{AppConfig, CONFIG_ENV};
use biae_core::corpus::{load_dataset, DialogueInstance, Split};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "biae", version, about = "Conversational machine reading with bipartite alignment and entailment")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration.
    Config,
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Segment a document (and optional scenario) or a whole corpus file.
    Segment(SegmentArgs),
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Train the decision model; writes the checkpoint and a loss curve CSV.
    Train(TrainArgs),
    /// Metrics report (JSON) and per-instance predictions (CSV).
    Eval(EvalArgs),
    /// α/β over success and fail partitions plus an α histogram (SVG).
    AnalyzeEntailment(AnalyzeArgs),
    /// Question-generation training file (JSON lines).
    QgenData(QgenArgs),
    /// One decision for a request file, locally or against a service.
    Predict(PredictArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Interactive session against a running service.
    Chat(ChatArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Check files against the record schema and list every violation.
    Validate { files: Vec<PathBuf> },
    /// Size and subset counts.
    Stats(DataArgs),
    /// Write the built-in synthetic corpus in the public record layout.
    Synthetic {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LabelsCommand {
    /// Weak alignment and entailment labels, merged into the label file.
    Build(LabelBuildArgs),
    /// Agreement with hand alignments (JSON lines of `{utterance_id, gold}`).
    Audit {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<String>,
    },
}

/// Which instances to read: a split from the data directory, or a file.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value = "dev")]
    split: Split,
    /// Read this file instead of the split in the data directory.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long, conflicts_with = "file")]
    document: Option<String>,
    #[arg(long, default_value = "")]
    scenario: String,
    /// Segment every instance of a corpus file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct LabelBuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss curve CSV; defaults to `loss_curve.csv` next to the checkpoint.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    encoder: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Report path; the predictions CSV goes next to it.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Question generator: `template` or `retrieval`.
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory for `entailment_analysis.json`, the histogram table
    /// and the SVG.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args)]
struct QgenArgs {
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Add the single-condition augmentation samples.
    #[arg(long)]
    augment: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Request file: `{document, question, scenario?, history?}`.
    #[arg(long)]
    json: PathBuf,
    /// Base URL of a running service; predicts locally when absent.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, conflicts_with = "server")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<String>,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    turn_cap: Option<usize>,
    #[arg(long)]
    session_dir: Option<PathBuf>,
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args)]
struct ChatArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    server: String,
    /// File holding the rule document; prompted for when absent.
    #[arg(long)]
    document: Option<PathBuf>,
    #[arg(long)]
    question: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
}

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn load_instances(config: &AppConfig, split: Split, file: Option<&Path>) -> Result<Vec<DialogueInstance>> {
    let path = file.map(Path::to_path_buf).unwrap_or_else(|| config.split_path(split));
    load_dataset(&path, split).with_context(|| format!("reading the {split} split from {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_tracing(cli.verbose);
    let mut config = AppConfig::load(cli.config.as_deref()).context("loading configuration")?;
    match cli.command {
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::Corpus(c) => offline::corpus(&config, c),
        Command::Segment(a) => offline::segment(a),
        Command::Labels(c) => offline::labels(&config, c),
        Command::Train(a) => offline::train(&mut config, a),
        Command::Eval(a) => offline::eval(&mut config, a),
        Command::AnalyzeEntailment(a) => offline::analyze(&config, a),
        Command::QgenData(a) => offline::qgen_data(&config, a),
        Command::Predict(a) => online::predict(&config, a),
        Command::Serve(a) => online::serve(&mut config, a),
        Command::Chat(a) => online::chat(a),
    }
}
