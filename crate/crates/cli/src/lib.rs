//! Command-line front end for the shrubmap pipeline.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shrubmap::augment::AugmentError;
use shrubmap::classifier::ClassifierError;
use shrubmap::detect::{DetectError, ScaleFusion};
use shrubmap::eval::report::ReportFormat;
use shrubmap::eval::EvalError;
use shrubmap::obia::ObiaError;
use shrubmap::preprocess::PreprocessError;
use shrubmap::raster::RasterError;
use shrubmap::synth::SynthError;

pub use config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad arguments or configuration.
    Usage = 1,
    /// Missing or malformed inputs.
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: m.into(),
        }
    }

    pub fn internal(m: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Internal,
            message: m.into(),
        }
    }

    /// Prefixes the stage name.
    pub fn at(mut self, stage: &str) -> Self {
        self.message = format!("{stage}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::InvalidConfig(_) => CliError::config(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::InvalidConfig(_) => CliError::config(e.to_string()),
            AugmentError::EmptyDataset
            | AugmentError::Manifest { .. }
            | AugmentError::Raster(_) => CliError::data(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidConfig(_) => CliError::config(e.to_string()),
            ClassifierError::SingleClass
            | ClassifierError::ModelFile { .. }
            | ClassifierError::Raster(_)
            | ClassifierError::External(_)
            | ClassifierError::Protocol(_)
            | ClassifierError::BadProbability { .. } => CliError::data(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::InvalidConfig(_) => CliError::config(e.to_string()),
            DetectError::WindowTooLarge { .. } => CliError::data(e.to_string()),
            DetectError::Classifier { source, offset } => {
                let inner = CliError::from(source);
                Self {
                    kind: inner.kind,
                    message: format!("window at ({}, {}): {}", offset.0, offset.1, inner.message),
                }
            }
            DetectError::Preprocess(p) => p.into(),
            DetectError::EmptyScans => CliError::internal(e.to_string()),
        }
    }
}

impl From<ObiaError> for CliError {
    fn from(e: ObiaError) -> Self {
        match e {
            ObiaError::InvalidParams(_)
            | ObiaError::UnknownFeature(_)
            | ObiaError::InvalidRule(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::config(e.to_string()),
            SynthError::Unsatisfiable { .. } => CliError::data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "shrubmap",
    version,
    about = "Shrub detection in RGB orthoimagery"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `paths.output_dir`.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sliding,
    Candidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Mean,
    Max,
}

impl From<FusionArg> for ScaleFusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Mean => ScaleFusion::Mean,
            FusionArg::Max => ScaleFusion::Max,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene, ground truth and patch dataset.
    Synth,
    /// Train the built-in classifier on the patch dataset.
    Train {
        /// Train on the raw split without augmentation.
        #[arg(long)]
        no_augment: bool,
    },
    /// Detect shrubs with the sliding-window or candidate path.
    Detect {
        #[arg(long, value_enum, default_value = "candidates")]
        mode: Mode,
        #[arg(long)]
        stride_fraction: Option<f64>,
        /// Comma-separated window sizes.
        #[arg(long, value_delimiter = ',')]
        window_sizes: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        fusion: Option<FusionArg>,
    },
    /// Object-based baseline.
    Obia {
        #[command(subcommand)]
        sub: ObiaCommand,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Row label in the report.
        #[arg(long, default_value = "eval")]
        label: String,
    },
    /// Merge report files into one table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum ObiaCommand {
    /// Segment the scene; writes the label raster and feature table.
    Segment,
    /// Search segmentation parameters against training polygons.
    Gridsearch,
    /// Segment, classify segments and evaluate.
    Classify,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitKind::Usage as i32
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind as i32
        }
    }
}
