//! Command-line front end: scenario synthesis, pipeline runs, grid export and
//! evaluation. Every command writes plain files so runs can be diffed and
//! replayed.

pub mod commands;
pub mod manifest;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radar_dogm::config::{Mode, PipelineConfig};
use radar_dogm::io::GridFormat;
use radar_dogm::scenario::ScenarioKind;

/// Environment variable naming the configuration file used when `--config`
/// is absent.
pub const CONFIG_ENV: &str = "RADAR_DOGM_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] radar_dogm::Error),

    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },

    #[error("scan {index} (t = {t}): {source}")]
    Scan {
        index: usize,
        t: f64,
        source: radar_dogm::Error,
    },

    #[error("no detection frame for ground-truth timestamps {}", fmt_times(.0))]
    MissingFrames(Vec<f64>),
}

fn fmt_times(ts: &[f64]) -> String {
    const SHOWN: usize = 20;
    let mut s: Vec<String> = ts.iter().take(SHOWN).map(|t| t.to_string()).collect();
    if ts.len() > SHOWN {
        s.push(format!("... ({} in total)", ts.len()));
    }
    s.join(", ")
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn input(path: &Path, reason: impl ToString) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "radar-dogm", version, about = "Radar-centric dynamic occupancy grid mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scan stream and its ground truth.
    Synth(SynthArgs),
    /// Run the pipeline over a scan stream.
    Run(RunArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Run up to one scan and export the grid.
    ExportFrame(ExportFrameArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// crossing-vehicle, crossing-pedestrian, static-world or custom.
    #[arg(long, value_parser = |s: &str| s.parse::<ScenarioKind>())]
    pub scenario: Option<ScenarioKind>,
    /// TOML file with scenario parameters; flags override its values.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Hz.
    #[arg(long)]
    pub frame_rate: Option<f64>,
    /// m/s.
    #[arg(long)]
    pub object_speed: Option<f64>,
    /// m/s.
    #[arg(long)]
    pub ego_speed: Option<f64>,
    /// Meters ahead of the ego.
    #[arg(long)]
    pub crossing_distance: Option<f64>,
    /// Mean clutter detections per frame and sensor.
    #[arg(long)]
    pub clutter_rate: Option<f64>,
    /// Wall detections per frame and sensor.
    #[arg(long)]
    pub static_detections: Option<usize>,
    /// Comma-separated sensor ids; all configured sensors when absent.
    #[arg(long, value_delimiter = ',')]
    pub sensors: Vec<String>,
    /// Pipeline configuration supplying the sensor suite.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scans: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// radar-centric or hsbof-rs; overrides the configuration.
    #[arg(long, value_parser = |s: &str| s.parse::<Mode>())]
    pub mode: Option<Mode>,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Export the grid after every N-th scan; 0 disables export.
    #[arg(long, default_value_t = 0)]
    pub export_every: usize,
    /// csv or raw.
    #[arg(long, default_value = "csv", value_parser = |s: &str| s.parse::<GridFormat>())]
    pub export_format: GridFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Configuration supplying the evaluation parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportFrameArgs {
    #[arg(long)]
    pub scans: PathBuf,
    /// Zero-based scan index.
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Mode>())]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "csv", value_parser = |s: &str| s.parse::<GridFormat>())]
    pub format: GridFormat,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Reads a configuration from `flag`, else from the file named by
/// [`CONFIG_ENV`], else the defaults. Returns the file used.
pub fn resolve_config(flag: Option<&Path>) -> Result<(PipelineConfig, Option<PathBuf>), CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let Some(path) = path else {
        return Ok((PipelineConfig::default(), None));
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
    let config = parse_config(&text).map_err(|e| CliError::input(&path, e))?;
    Ok((config, Some(path)))
}

/// Parses and validates a TOML configuration. Absent keys take defaults;
/// unknown keys are rejected by name.
pub fn parse_config(text: &str) -> Result<PipelineConfig, String> {
    let config: PipelineConfig = toml::from_str(text).map_err(|e| e.message().to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

pub fn execute(cli: &Cli, argv: &[String]) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a, argv),
        Command::Run(a) => commands::run(a, argv),
        Command::Eval(a) => commands::eval(a),
        Command::ExportFrame(a) => commands::export_frame(a),
    }
}

/// Parses `argv` (program name first) and executes it.
pub fn run_args(argv: &[String]) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli, &argv[1..])
}

/// Parses `args` (program name first), executes, and maps the outcome to
/// the exit code: 0 success, 1 usage error, 2 data or validation error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &recorded) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
