use std::path::PathBuf;

use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "csocnn", version, about = "Cat swarm tuned CNN for flow-feature intrusion classification")]
pub struct Cli {
    /// -v for progress, -vv for debug output.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the baseline network and evaluate it on the held-out split.
    Train(TrainArgs),
    /// Search learning rate, batch size and epochs with the cat swarm, then
    /// retrain and evaluate the best candidate.
    Optimize(OptimizeArgs),
    /// Evaluate a saved model on labelled data.
    Evaluate(EvaluateArgs),
    /// Stream anomaly verdicts for flow records.
    Detect(DetectArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
pub struct DataArgs {
    /// Labelled flow CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Generate Gaussian blobs instead of reading a file.
    #[arg(long)]
    pub synthetic: bool,

    /// Synthetic record count.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    /// Synthetic class-centre scale.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,

    /// Synthetic class count.
    #[arg(long, default_value_t = 5)]
    pub classes: usize,

    #[arg(long, default_value = "Label")]
    pub label_column: String,

    /// Accept any number of feature columns instead of exactly 75.
    #[arg(long)]
    pub any_width: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "CSOCNN_OUT", default_value = "csocnn-out")]
    pub out: PathBuf,

    /// Global seed; a random one is drawn and recorded when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub out: OutArgs,

    #[arg(long, default_value_t = 5)]
    pub epochs: usize,

    #[arg(long, default_value_t = 640)]
    pub batch: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub out: OutArgs,

    /// Swarm size.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub cats: u64,

    /// Iterations, counting the evaluation of the initial swarm.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,

    /// Fraction of cats in tracing mode.
    #[arg(long, default_value_t = 0.3)]
    pub mr: f64,

    /// Seeking memory pool size.
    #[arg(long, default_value_t = 5)]
    pub smp: usize,

    /// Seeking range as a fraction of each dimension's span.
    #[arg(long, default_value_t = 0.2)]
    pub srd: f64,

    /// Fraction of dimensions mutated while seeking.
    #[arg(long, default_value_t = 0.8)]
    pub cdc: f64,

    /// Tracing constant.
    #[arg(long, default_value_t = 2.0)]
    pub c1: f64,

    /// Learning-rate search range LO,HI (log scale).
    #[arg(long, value_delimiter = ',', value_name = "LO,HI", default_values_t = [1e-4, 1e-2])]
    pub lr_range: Vec<f64>,

    /// Batch-size search range LO,HI.
    #[arg(long, value_delimiter = ',', value_name = "LO,HI", default_values_t = [32, 1024])]
    pub batch_range: Vec<usize>,

    /// Epoch search range LO,HI.
    #[arg(long, value_delimiter = ',', value_name = "LO,HI", default_values_t = [1, 5])]
    pub epoch_range: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Scaler statistics; defaults to scaler.json next to the model.
    #[arg(long)]
    pub scaler: Option<PathBuf>,

    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub out: OutArgs,

    /// Evaluate every record instead of re-creating the training split.
    #[arg(long)]
    pub whole: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Scaler statistics; defaults to scaler.json next to the model.
    #[arg(long)]
    pub scaler: Option<PathBuf>,

    /// Flow CSV to score; standard input when absent. A label column is
    /// ignored if present.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long, default_value = "Label")]
    pub label_column: String,

    /// Records scoring above this are anomalous.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    /// Pick the threshold from labelled data: max_f1 or fpr_at:<x>.
    #[arg(long)]
    pub calibrate: Option<String>,

    /// Labelled data for --calibrate; defaults to val_split.csv next to the model.
    #[arg(long)]
    pub calibration_data: Option<PathBuf>,

    /// non_benign_mass or one_minus_max_prob.
    #[arg(long, default_value = "non_benign_mass")]
    pub score_kind: String,

    /// Directory for the run manifest.
    #[arg(long, env = "CSOCNN_OUT", default_value = "csocnn-out")]
    pub out: PathBuf,
}
