//! `mbls`: data generation, training, evaluation, temperature calibration,
//! margin sweeps and the property verification suite.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data or file
//! error, 4 verification failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbls::LossKind;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mbls::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use mbls::Error as E;
        match self {
            CliError::Core(E::Config(_) | E::Usage(_) | E::Domain(_)) => EXIT_CONFIG,
            CliError::Core(E::Parse { .. } | E::Io { .. } | E::Contract(_)) => EXIT_DATA,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "mbls",
    version,
    about = "Calibration losses, metrics and temperature scaling on synthetic blobs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a blob dataset and write train/val/test CSVs plus a manifest.
    GenData(GenDataArgs),
    /// Train a model and write checkpoint, history and prediction CSVs.
    Train(TrainArgs),
    /// Report accuracy, ECE, AECE and NLL of a prediction CSV and write its reliability table.
    Eval(EvalArgs),
    /// Fit a temperature on validation predictions and apply it to test predictions.
    Calibrate(CalibrateArgs),
    /// Run the randomized bound, identity and gradient-check suite.
    Verify(VerifyArgs),
    /// Train one model per margin, plus label smoothing vs margin-free penalty at matched weights.
    SweepMargin(SweepArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Run config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `data.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Blob generator seed; overrides `data.blobs.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Split permutation seed; overrides `data.split_seed`.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Within-class noise; overrides `data.blobs.noise_sigma`.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Samples per class; overrides `data.blobs.n_per_class`.
    #[arg(long)]
    n_per_class: Option<usize>,
}

/// Flags shared by commands that train models.
#[derive(Args, Debug)]
struct TrainingFlags {
    /// Run config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory written by `gen-data`; overrides `data.dir`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of epochs; overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size; overrides `train.batch_size`.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated hidden widths (empty for a linear model); overrides `train.hidden_dims`.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    hidden: Option<Vec<usize>>,
    /// Initialization and shuffle seed; overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainingFlags,
    /// Loss: ce, ls, fl, flsd, ecp or mbls; overrides `train.loss.kind`.
    #[arg(long)]
    loss: Option<LossKind>,
    /// Label smoothing factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// Focal loss gamma.
    #[arg(long)]
    gamma: Option<f64>,
    /// Confidence penalty weight.
    #[arg(long)]
    ecp_weight: Option<f64>,
    /// Logit-distance margin.
    #[arg(long)]
    margin: Option<f64>,
    /// Margin penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction CSV (`l0,...,l{K-1},label`).
    #[arg(long)]
    predictions: PathBuf,
    /// Bins for ECE and AECE.
    #[arg(long, default_value_t = mbls::metrics::DEFAULT_ECE_BINS)]
    bins: usize,
    /// Bins for the reliability table.
    #[arg(long, default_value_t = mbls::metrics::DEFAULT_DIAGRAM_BINS)]
    diagram_bins: usize,
    /// Reliability table path [default: <predictions stem>.reliability.csv].
    #[arg(long)]
    reliability_out: Option<PathBuf>,
    /// Also write the metrics as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Validation prediction CSV used to fit the temperature.
    #[arg(long)]
    val: PathBuf,
    /// Test prediction CSV the fitted temperature is applied to.
    #[arg(long)]
    test: PathBuf,
    /// Smallest grid temperature.
    #[arg(long, default_value_t = 0.1)]
    t_min: f64,
    /// Largest grid temperature.
    #[arg(long, default_value_t = 5.0)]
    t_max: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Bins for ECE.
    #[arg(long, default_value_t = mbls::metrics::DEFAULT_ECE_BINS)]
    bins: usize,
    /// Fit report path [default: calibration.json next to the test file].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the temperature-scaled test predictions.
    #[arg(long)]
    calibrated_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Seed for every sampled point.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the per-property results as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Offset added to analytic gradients, for exercising the failure path.
    #[arg(long, hide = true, default_value_t = 0.0)]
    inject_gradient_fault: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: TrainingFlags,
    /// Margins to train with.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])]
    margins: Vec<f64>,
    /// Margin penalty weight for the margin sweep.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Matched weights for label smoothing vs the margin-free penalty.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3])]
    weights: Vec<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Verify(a) => commands::verify(a),
        Command::SweepMargin(a) => commands::sweep_margin(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
