//! `ronc`: the noun-compound pipeline from treebank to evaluation report.
//!
//! Stages talk only through files. Any path flag left out falls back to a
//! standard file name under `--data-dir` (or `RONC_DATA_DIR`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ronc", version, about = "Romanian noun-compound workbench")]
pub struct Cli {
    /// Directory holding default pipeline files.
    #[arg(long, env = "RONC_DATA_DIR", global = true)]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write every NN_GEN and NPN candidate in a treebank.
    Extract {
        #[arg(long)]
        treebank: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-lemma compound participation counts.
        #[arg(long)]
        word_stats: Option<PathBuf>,
    },
    /// Print token, noun and pattern counts as JSON.
    Stats {
        #[arg(long)]
        treebank: Option<PathBuf>,
        /// Count PROPN tokens as nouns.
        #[arg(long)]
        include_propn: bool,
    },
    /// Keep one candidate per frequent head, then drop excluded pairs.
    Select {
        #[arg(long)]
        treebank: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1100)]
        n: usize,
        #[arg(long)]
        exclusions: Option<PathBuf>,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Append-only store; created if absent.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// File with one accepted annotator id per line.
        #[arg(long)]
        roster: Option<PathBuf>,
    },
    /// Join candidates with their two annotations.
    Dataset {
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop annotators with fewer judgments than this.
        #[arg(long, default_value_t = 20)]
        min_labels: usize,
    },
    /// Train the classifier on the training split.
    Train {
        #[command(flatten)]
        data: ModelData,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        hidden: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write mean loss per epoch here.
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        data: ModelData,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Split seed; defaults to the one stored in the checkpoint.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write annotation analytics, plus model results when a checkpoint is given.
    Report {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Treebank the candidates were extracted from.
        #[arg(long)]
        treebank: Option<PathBuf>,
        #[arg(long)]
        report_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 750)]
        train_size: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = ConfusionMode::DistinctTop2)]
        confusion_mode: ConfusionMode,
        #[arg(long)]
        zero_missing: bool,
    },
}

#[derive(Debug, Args)]
pub struct ModelData {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 750)]
    pub train_size: usize,
    /// Use zero vectors for words without embeddings instead of failing.
    #[arg(long)]
    pub zero_missing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConfusionMode {
    DistinctTop2,
    AgreementDiagonal,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit 2, help and version exit 0.
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
