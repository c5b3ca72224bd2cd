use chronolens::config::ConfigError;
use chronolens::experiments::{ExperimentError, ReportError};
use chronolens::metrics::MetricsError;
use chronolens::scene_data::SceneDataError;
use chronolens::thermal_sim::SimError;
use chronolens::vlm_pipeline::PipelineError;

/// Everything a subcommand can fail with, keyed to the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
    #[error("{failed} of {total} experiment cells failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Partial { .. } => 4,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_errors!(ConfigError, SceneDataError, SimError, MetricsError, ReportError, std::io::Error, serde_json::Error);

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_backend_failure() {
            CliError::Backend(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Pipeline(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
