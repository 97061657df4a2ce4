use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mlmscreen", version, about = "Recall-calibrated screening of literature for suspected adverse events")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate a labeled corpus (JSONL or CSV) and write it as canonical JSONL.
    Ingest,
    /// Generate a labeled synthetic corpus.
    Synth,
    /// Train a model bundle on the training split of a labeled corpus.
    Train,
    /// Run the repeated experiment and store calibrated thresholds in the bundle.
    Calibrate,
    /// Screen unlabeled articles with a bundle.
    Predict,
    /// Run the repeated experiment without touching the bundle.
    Evaluate,
    /// Explain predictions at sentence level.
    Explain,
    /// Render the factsheet from a bundle and an experiment report.
    Factsheet,
    /// Serve the triage HTTP API.
    Serve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Calibrate => "calibrate",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Explain => "explain",
            Command::Factsheet => "factsheet",
            Command::Serve => "serve",
        }
    }
}

/// Flags shared by all subcommands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus or article file (JSONL or CSV).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Model bundle directory.
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Target recall; repeat for several.
    #[arg(long = "target-recall", global = true)]
    pub target_recall: Vec<f64>,
    /// Resampling runs for calibrate and evaluate.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Explanation mode: sampled_lime or exhaustive_ablation.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Use this RFC 3339 instant for every timestamp.
    #[arg(long, global = true)]
    pub frozen_time: Option<String>,
    /// Synthetic corpus size.
    #[arg(long, global = true)]
    pub size: Option<usize>,
    /// Synthetic corpus positive rate.
    #[arg(long, global = true)]
    pub positive_rate: Option<f64>,
    /// Experiment report (report.json) for factsheet.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Listen address for serve.
    #[arg(long, global = true)]
    pub addr: Option<String>,
    /// Factsheet JSON served by serve.
    #[arg(long, global = true)]
    pub factsheet: Option<PathBuf>,
}
