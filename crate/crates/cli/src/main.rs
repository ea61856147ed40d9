use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

use spamsim_core::{EncodingName, FitMethod, SpamError};

#[derive(Debug, Parser)]
#[command(name = "spamsim", version, about = "Heralded SPAM simulator for metastable-state ion qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    /// Error-model JSON file.
    config: Option<PathBuf>,
    /// Use the built-in measured parameter set instead of a file.
    #[arg(long, conflicts_with = "config")]
    paper_defaults: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch of shots for one encoding and write summary, histograms and manifest.
    RunSpam(RunSpamArgs),
    /// Fit bright/dark count histograms and report the discrimination threshold.
    CalibrateThreshold(CalibrateArgs),
    /// First-order and exact rejected fractions for every encoding and state.
    PredictRejection(PredictArgs),
    /// Post-selection bias against readout pulse duration, simulated and closed-form.
    BiasScan(BiasScanArgs),
    /// Fit the metastable lifetime to decay-vs-delay data.
    LifetimeFit(LifetimeArgs),
    /// Print the built-in parameter set as an error-model JSON document.
    ShowDefaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncodingArg {
    #[value(alias = "o", alias = "optical")]
    O,
    #[value(alias = "m", alias = "metastable")]
    M,
    #[value(alias = "g", alias = "ground")]
    G,
}

impl From<EncodingArg> for EncodingName {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::O => EncodingName::Optical,
            EncodingArg::M => EncodingName::Metastable,
            EncodingArg::G => EncodingName::Ground,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    PostSelect,
    Rus,
}

#[derive(Debug, Args)]
struct RunSpamArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Shots per prepared state.
    #[arg(long, default_value_t = 1_000_000)]
    shots: u64,
    /// Master seed; falls back to SPAMSIM_SEED, then to a time-derived seed.
    #[arg(long, env = "SPAMSIM_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "m")]
    encoding: EncodingArg,
    #[arg(long, value_enum, default_value = "post-select")]
    mode: ModeArg,
    /// Attempt budget for repeat-until-success.
    #[arg(long, default_value_t = 10)]
    max_attempts: u32,
    /// Also flag bright R3 followed by dark R4.
    #[arg(long)]
    strict: bool,
    /// Prepare all |0⟩ shots first, then all |1⟩ shots.
    #[arg(long)]
    no_interleave: bool,
    #[arg(long, default_value = "spamsim-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the per-shot CSV.
    #[arg(long)]
    records: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    bright: PathBuf,
    dark: PathBuf,
    #[arg(long, value_enum, default_value = "moments")]
    method: MethodArg,
    /// Directory for calibration.json and the manifest; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Moments,
    LeastSquares,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Moments => FitMethod::Moments,
            MethodArg::LeastSquares => FitMethod::LeastSquares,
        }
    }
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Count decay in the metastable manifold as an extra failure channel.
    #[arg(long)]
    include_decay: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BiasScanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated pulse durations in units of t_π.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.7,0.8,0.9,1.0")]
    t_grid: Vec<f64>,
    /// Shots per grid point.
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long, env = "SPAMSIM_SEED")]
    seed: Option<u64>,
    /// Restrict to one curve (optical-zero, optical-one, metastable-zero, ground-zero).
    #[arg(long)]
    curve: Option<String>,
    /// Keep pumping and pulse error rates; by default only the detuned
    /// pulse, decay and detection act, matching the closed form.
    #[arg(long)]
    keep_static_errors: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LifetimeArgs {
    /// CSV with `delay,decayed` samples or `delay,fraction` points.
    samples: PathBuf,
    /// Width of the reported interval in standard deviations.
    #[arg(long, default_value_t = 1.0)]
    z: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit statuses: 0 success, 2 invalid input, 3 I/O failure, 4 inseparable.
pub(crate) fn exit_code(err: &SpamError) -> u8 {
    match err {
        SpamError::Io(_) => 3,
        SpamError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
        SpamError::Inseparable { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::RunSpam(a) => commands::run_spam(a, &argv),
        Command::CalibrateThreshold(a) => commands::calibrate(a, &argv),
        Command::PredictRejection(a) => commands::predict(a, &argv),
        Command::BiasScan(a) => commands::bias_scan(a, &argv),
        Command::LifetimeFit(a) => commands::lifetime(a, &argv),
        Command::ShowDefaults => commands::show_defaults(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spamsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
