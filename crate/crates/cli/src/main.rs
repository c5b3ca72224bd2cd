//! `chronolens` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 backend failure, 4 partial experiment failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chronolens::experiments::ReportFormat;
use chronolens::{ScenarioKind, Stage};

mod commands;
mod error;

#[derive(Debug, Parser)]
#[command(name = "chronolens", version, about = "Reconstruct past scene states from residual heat traces")]
struct Cli {
    /// Tool configuration file (JSON). Must precede the subcommand; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Response cache directory
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Maximum number of experiment cells in flight
    #[arg(long, global = true, value_name = "N")]
    concurrency: Option<usize>,
    /// Seed for simulation noise
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenarios (manifest and frames) from presets or a simulator config
    Simulate(SimulateArgs),
    /// Load and validate scenario manifests
    Ingest(IngestArgs),
    /// Detect and grade residual-heat traces
    Traces(TracesArgs),
    /// Ask a backend for a one-sentence action description
    Describe(DescribeArgs),
    /// Reconstruct the delay-0 scene from one observation
    Reconstruct(ReconstructArgs),
    /// Score a candidate image against a scenario's ground truth
    Evaluate(EvaluateArgs),
    /// Modality ablation table (RGB / +thermal / +descriptor)
    Ablate(AblateArgs),
    /// Metrics as a function of delay
    Sweep(SweepArgs),
    /// Same inputs through several image editors
    CompareGenerators(CompareArgs),
    /// Prompt levels 1 to 4 for one stage
    PromptLadder(LadderArgs),
    /// Render a saved experiment result
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulator config (JSON); without it the built-in presets are generated
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Presets to generate (default: all)
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    kind: Vec<ScenarioKind>,
    /// Output directory; each scenario goes into its own subdirectory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, required = true, value_name = "FILE")]
    manifest: Vec<PathBuf>,
    /// Print JSON instead of a text summary
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TracesArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Only this delay (default: every observation)
    #[arg(long)]
    delay: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DescribeArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    #[arg(long)]
    backend: String,
    #[arg(long)]
    delay: f64,
    /// Descriptor template id
    #[arg(long, default_value = "desc-main")]
    template: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Image-editing backend
    #[arg(long)]
    backend: String,
    /// Describing backend (default: same as --backend)
    #[arg(long)]
    describer: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    delay: f64,
    /// Editor template id (default picked from the enabled inputs)
    #[arg(long)]
    template: Option<String>,
    #[arg(long, default_value = "desc-main")]
    descriptor_template: String,
    /// Leave the thermal image out
    #[arg(long)]
    no_thermal: bool,
    /// Leave the action description out
    #[arg(long)]
    no_descriptor: bool,
    /// Where to write the reconstructed PNG
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Candidate reconstruction (PNG)
    #[arg(long, value_name = "FILE")]
    candidate: PathBuf,
    /// Pose adapter output for the candidate
    #[arg(long, value_name = "FILE")]
    keypoints: Option<PathBuf>,
    /// Segmentation adapter output for the candidate (label PNG with JSON sidecar)
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Inputs and outputs shared by the experiment subcommands.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Scenario manifest (repeatable)
    #[arg(long, value_name = "FILE")]
    manifest: Vec<PathBuf>,
    /// Experiment plan (JSON); flags override it
    #[arg(long, value_name = "FILE")]
    plan: Option<PathBuf>,
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: ReportFormat,
    /// Report destination (a directory when several reports are produced)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also write the raw result as JSON, for `report`
    #[arg(long, value_name = "PATH")]
    save: Option<PathBuf>,
    /// Per-cell timing CSV
    #[arg(long, value_name = "FILE")]
    timings: Option<PathBuf>,
    /// External pose/segmentation adapter program (default: ground-truth fixture lookup)
    #[arg(long, value_name = "PROGRAM")]
    annotator: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Image-editing backend
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    describer: Option<String>,
    #[arg(long)]
    delay: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    describer: Option<String>,
    /// Comma-separated delays in seconds (default 5,15,30,120)
    #[arg(long, value_delimiter = ',')]
    delays: Vec<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated image-editing backends
    #[arg(long, value_delimiter = ',')]
    backends: Vec<String>,
    #[arg(long)]
    describer: Option<String>,
    #[arg(long)]
    delay: Option<f64>,
}

#[derive(Debug, Args)]
struct LadderArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Backend used for both describing and editing unless --describer is given
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    describer: Option<String>,
    /// descriptor or editor (repeatable; default both)
    #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
    stage: Vec<Stage>,
    #[arg(long)]
    delay: Option<f64>,
    /// Action sentence fed to every editor level
    #[arg(long)]
    description: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Result JSON written by --save
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: ReportFormat,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: chronolens::scene_data::SceneDataError| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
