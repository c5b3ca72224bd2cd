//! Tool-wide settings and the backend registry.
//!
//! Secrets never live here: HTTP backends read their URL and token from
//! `CHRONOLENS_BACKEND_<ID>_URL` / `_TOKEN`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::DEFAULT_MIN_CONF;
use crate::scene_data::ScenarioManifest;
use crate::vlm_pipeline::{
    Backend, BackendDescriptor, Capability, HttpBackend, MockBackend, PipelineOptions, ResponseCache, RetryPolicy,
};

pub const MOCK_GROUND_TRUTH: &str = "mock-gt";
pub const MOCK_IDENTITY: &str = "mock-identity";
pub const MOCK_FAIL: &str = "mock-fail";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("backend {id}: {message}")]
    Backend { id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    MockGroundTruth,
    MockIdentity,
    MockFail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default = "both_capabilities")]
    pub capabilities: Vec<Capability>,
}

fn both_capabilities() -> Vec<Capability> {
    vec![Capability::Describe, Capability::Edit]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub cache_dir: Option<PathBuf>,
    pub backends: Vec<BackendConfig>,
    pub concurrency: usize,
    pub min_conf: f64,
    pub pipeline: PipelineOptions,
    /// First retry delay in seconds; later retries double it.
    pub retry_base_delay_s: f64,
    pub request_timeout_s: f64,
    pub seed: u64,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            cache_dir: None,
            backends: Vec::new(),
            concurrency: 4,
            min_conf: DEFAULT_MIN_CONF,
            pipeline: PipelineOptions::default(),
            retry_base_delay_s: 1.0,
            request_timeout_s: 120.0,
            seed: 0,
        }
    }
}

impl GlobalConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let cfg: GlobalConfig = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_conf) {
            return Err(ConfigError::Invalid(format!("min_conf {} outside [0, 1]", self.min_conf)));
        }
        if !(self.pipeline.trace.threshold_dt_c > 0.0) {
            return Err(ConfigError::Invalid("trace threshold must be positive".into()));
        }
        if !(self.retry_base_delay_s >= 0.0) || !(self.request_timeout_s > 0.0) {
            return Err(ConfigError::Invalid("retry delay and timeout must be non-negative".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.backends {
            BackendDescriptor::new(&b.backend_id, b.capabilities.iter().copied(), "")
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !seen.insert(&b.backend_id) {
                return Err(ConfigError::Invalid(format!("backend {} listed twice", b.backend_id)));
            }
        }
        Ok(())
    }

    /// Opens the response cache, checking that its directory is writable.
    pub fn open_cache(&self) -> Result<ResponseCache, ConfigError> {
        match &self.cache_dir {
            None => Ok(ResponseCache::in_memory()),
            Some(dir) => {
                let cache = ResponseCache::on_disk(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let probe = dir.join(".write-probe");
                std::fs::write(&probe, b"")
                    .and_then(|_| std::fs::remove_file(&probe))
                    .map_err(|e| ConfigError::Invalid(format!("cache_dir {} is not writable: {e}", dir.display())))?;
                Ok(cache)
            }
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            base_delay: Duration::from_secs_f64(self.retry_base_delay_s),
            ..RetryPolicy::default()
        }
    }
}

/// Resolves backend ids to live instances.
///
/// `mock-gt`, `mock-identity` and `mock-fail` are always available; the
/// ground-truth mock knows the frames of the manifests passed to [`build`].
///
/// [`build`]: BackendRegistry::build
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    configs: BTreeMap<String, BackendConfig>,
    timeout: Duration,
}

impl BackendRegistry {
    pub fn build(config: &GlobalConfig, manifests: &[ScenarioManifest]) -> Self {
        let mut backends: BTreeMap<String, Arc<dyn Backend>> = BTreeMap::new();
        backends.insert(MOCK_GROUND_TRUTH.into(), Arc::new(MockBackend::ground_truth(MOCK_GROUND_TRUTH, manifests)));
        backends.insert(MOCK_IDENTITY.into(), Arc::new(MockBackend::identity(MOCK_IDENTITY)));
        backends.insert(MOCK_FAIL.into(), Arc::new(MockBackend::failing(MOCK_FAIL)));
        for b in &config.backends {
            let mock: Option<Arc<dyn Backend>> = match b.kind {
                BackendKind::Http => None,
                BackendKind::MockGroundTruth => Some(Arc::new(MockBackend::ground_truth(&b.backend_id, manifests))),
                BackendKind::MockIdentity => Some(Arc::new(MockBackend::identity(&b.backend_id))),
                BackendKind::MockFail => Some(Arc::new(MockBackend::failing(&b.backend_id))),
            };
            if let Some(m) = mock {
                backends.insert(b.backend_id.clone(), m);
            }
        }
        BackendRegistry {
            backends,
            configs: config.backends.iter().map(|b| (b.backend_id.clone(), b.clone())).collect(),
            timeout: Duration::from_secs_f64(config.request_timeout_s),
        }
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.backends.keys().chain(self.configs.keys()).cloned().collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Looks up a backend; HTTP backends are connected on first use.
    pub fn get(&self, id: &str) -> Result<Arc<dyn Backend>, ConfigError> {
        if let Some(b) = self.backends.get(id) {
            return Ok(Arc::clone(b));
        }
        let cfg = self
            .configs
            .get(id)
            .ok_or_else(|| ConfigError::UnknownBackend(id.to_string()))?;
        let descriptor = BackendDescriptor::new(
            &cfg.backend_id,
            cfg.capabilities.iter().copied(),
            crate::vlm_pipeline::http::env_key(&cfg.backend_id, "URL"),
        )
        .map_err(|e| ConfigError::Backend {
            id: id.into(),
            message: e.to_string(),
        })?;
        let http = HttpBackend::from_env(descriptor, self.timeout).map_err(|e| ConfigError::Backend {
            id: id.into(),
            message: e.to_string(),
        })?;
        Ok(Arc::new(http))
    }
}
