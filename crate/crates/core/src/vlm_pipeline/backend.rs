use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scene_data::{RgbFrame, ScenarioManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Describe,
    Edit,
}

/// Identity and capabilities of one backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub capabilities: BTreeSet<Capability>,
    /// Where the endpoint is configured (environment variable or mock name).
    #[serde(default)]
    pub endpoint: String,
}

impl BackendDescriptor {
    pub fn new(backend_id: impl Into<String>, capabilities: impl IntoIterator<Item = Capability>, endpoint: impl Into<String>) -> Result<Self, BackendError> {
        let d = BackendDescriptor {
            backend_id: backend_id.into(),
            capabilities: capabilities.into_iter().collect(),
            endpoint: endpoint.into(),
        };
        if d.backend_id.is_empty() {
            return Err(BackendError::Config("backend_id is empty".into()));
        }
        if d.capabilities.is_empty() {
            return Err(BackendError::Config(format!("backend {} declares no capabilities", d.backend_id)));
        }
        Ok(d)
    }

    pub fn supports(&self, c: Capability) -> bool {
        self.capabilities.contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Network or server failure; retried.
    #[error("transport: {0}")]
    Transport(String),
    /// The response could not be decoded; retried.
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} is not supported by this backend")]
    Unsupported(&'static str),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::BadResponse(_))
    }
}

/// The two logical endpoints every generative backend exposes.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn id(&self) -> &str {
        &self.descriptor().backend_id
    }

    /// Returns free text for a prompt over the given images.
    fn describe(&self, images: &[RgbFrame], prompt: &str) -> Result<String, BackendError>;

    /// Returns an edited version of `image`.
    fn edit(&self, image: &RgbFrame, aux: &[RgbFrame], prompt: &str) -> Result<RgbFrame, BackendError>;
}

/// SHA-256 over dimensions and raw pixels; capture time is ignored.
pub fn frame_hash(frame: &RgbFrame) -> String {
    let mut h = Sha256::new();
    h.update((frame.width() as u64).to_le_bytes());
    h.update((frame.height() as u64).to_le_bytes());
    h.update(frame.pixels());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub enum MockEdit {
    /// Looks up the input frame and returns its scenario's delay-0 image.
    GroundTruth(HashMap<String, RgbFrame>),
    Identity,
    /// Always returns an image of this size (for contract tests).
    FixedSize(usize, usize),
    Fail,
}

#[derive(Debug, Clone)]
pub enum MockDescribe {
    /// Same text for every prompt.
    Echo(String),
    Fail,
}

pub const MOCK_SENTENCE: &str = "The person was sitting on the chair and holding the book.";

/// Deterministic in-process backend used by tests and offline runs.
#[derive(Debug)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    edit: MockEdit,
    describe: MockDescribe,
    describe_calls: AtomicUsize,
    edit_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(backend_id: &str, edit: MockEdit, describe: MockDescribe) -> Self {
        MockBackend {
            descriptor: BackendDescriptor {
                backend_id: backend_id.to_string(),
                capabilities: [Capability::Describe, Capability::Edit].into(),
                endpoint: "mock".into(),
            },
            edit,
            describe,
            describe_calls: AtomicUsize::new(0),
            edit_calls: AtomicUsize::new(0),
        }
    }

    /// Maps every frame of every manifest to that manifest's ground truth.
    pub fn ground_truth(backend_id: &str, manifests: &[ScenarioManifest]) -> Self {
        let mut table = HashMap::new();
        for m in manifests {
            let gt = m.ground_truth().rgb();
            for obs in m.observations() {
                table.insert(frame_hash(obs.rgb()), gt.clone());
            }
            table.insert(frame_hash(gt), gt.clone());
        }
        Self::new(backend_id, MockEdit::GroundTruth(table), MockDescribe::Echo(MOCK_SENTENCE.into()))
    }

    pub fn identity(backend_id: &str) -> Self {
        Self::new(backend_id, MockEdit::Identity, MockDescribe::Echo(MOCK_SENTENCE.into()))
    }

    pub fn failing(backend_id: &str) -> Self {
        Self::new(backend_id, MockEdit::Fail, MockDescribe::Fail)
    }

    pub fn with_describe(mut self, describe: MockDescribe) -> Self {
        self.describe = describe;
        self
    }

    pub fn describe_calls(&self) -> usize {
        self.describe_calls.load(Ordering::SeqCst)
    }

    pub fn edit_calls(&self) -> usize {
        self.edit_calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn describe(&self, _images: &[RgbFrame], _prompt: &str) -> Result<String, BackendError> {
        self.describe_calls.fetch_add(1, Ordering::SeqCst);
        match &self.describe {
            MockDescribe::Echo(s) => Ok(s.clone()),
            MockDescribe::Fail => Err(BackendError::Transport("mock backend configured to fail".into())),
        }
    }

    fn edit(&self, image: &RgbFrame, _aux: &[RgbFrame], _prompt: &str) -> Result<RgbFrame, BackendError> {
        self.edit_calls.fetch_add(1, Ordering::SeqCst);
        match &self.edit {
            MockEdit::GroundTruth(table) => table
                .get(&frame_hash(image))
                .cloned()
                .ok_or_else(|| BackendError::BadResponse("input frame is not part of any registered scenario".into())),
            MockEdit::Identity => Ok(image.clone()),
            MockEdit::FixedSize(w, h) => RgbFrame::filled(*w, *h, [0, 0, 0], 0.0).map_err(|e| BackendError::BadResponse(e.to_string())),
            MockEdit::Fail => Err(BackendError::Transport("mock backend configured to fail".into())),
        }
    }
}
