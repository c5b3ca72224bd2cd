//! Two-stage reconstruction over pluggable generative backends.
//!
//! A descriptor backend turns the RGB frame and a pseudocolor rendering of the
//! thermal frame into one past-tense sentence. An editor backend then edits the
//! RGB frame into the estimated past frame, guided by that sentence and/or the
//! thermal image. Every backend response is cached by content hash.

pub mod backend;
pub mod cache;
pub mod http;
pub mod templates;
pub mod validate;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{frame_hash, Backend, BackendDescriptor, BackendError, Capability, MockBackend, MockDescribe, MockEdit, MOCK_SENTENCE};
pub use cache::{CacheError, CacheKey, CachedValue, ResponseCache};
pub use http::HttpBackend;
pub use templates::{
    builtin_templates, ladder_template, render_descriptor_prompt, render_edit_prompt, template, PromptTemplate, Stage,
    TemplateError,
};
pub use validate::{validate_descriptor, DescriptorRejection};

use crate::scene_data::{
    normalize_thermal, register_thermal, thermal_to_pseudocolor, AlignmentParams, PairedCapture, RgbFrame, SceneDataError,
};
use crate::trace_analysis::{detect_traces, estimate_ambient, inventory_summary, TraceConfig, TraceError, TraceInventory};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend {backend_id} does not support {capability}")]
    Unsupported { backend_id: String, capability: &'static str },
    #[error("backend {backend_id} failed after {attempts} attempt(s): {message}")]
    Transport { backend_id: String, attempts: u32, message: String },
    #[error("backend {backend_id} returned a malformed descriptor ({reason}): {raw:?}")]
    MalformedDescriptor {
        backend_id: String,
        raw: String,
        reason: DescriptorRejection,
    },
    #[error("backend contract violation by {backend_id}: {message}")]
    BackendContractViolation { backend_id: String, message: String },
    #[error("backend {backend_id}: {source}")]
    Backend {
        backend_id: String,
        #[source]
        source: BackendError,
    },
    #[error("invalid edit request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Data(#[from] SceneDataError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl PipelineError {
    /// True for failures caused by a backend rather than by local inputs.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Transport { .. }
                | PipelineError::MalformedDescriptor { .. }
                | PipelineError::BackendContractViolation { .. }
                | PipelineError::Backend { .. }
                | PipelineError::Unsupported { .. }
        )
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// One initial call plus up to `max_attempts - 1` retries with doubling delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..Default::default()
        }
    }

    /// Delay before retry `n` (1-based): base, 2·base, 4·base, ...
    pub fn delay_before_retry(&self, n: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    #[serde(default)]
    pub alignment: AlignmentParams,
    /// Temperature span above ambient mapped onto the full pseudocolor ramp.
    #[serde(default = "default_span")]
    pub pseudocolor_span_c: f64,
    #[serde(default)]
    pub trace: TraceConfig,
    /// Append the detected trace inventory to descriptor prompts.
    #[serde(default = "default_true")]
    pub include_trace_summary: bool,
}

fn default_span() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            alignment: AlignmentParams::default(),
            pseudocolor_span_c: default_span(),
            trace: TraceConfig::default(),
            include_trace_summary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorOutput {
    pub sentence: String,
    pub raw_response: String,
    pub backend_id: String,
    pub template_id: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditRequest {
    pub rgb: RgbFrame,
    pub thermal_pseudocolor: Option<RgbFrame>,
    pub description: Option<DescriptorOutput>,
    pub template: PromptTemplate,
    pub target_delay_s: f64,
}

impl EditRequest {
    /// Guided request: at least one of thermal or description must be given.
    pub fn new(
        rgb: RgbFrame,
        thermal_pseudocolor: Option<RgbFrame>,
        description: Option<DescriptorOutput>,
        template: PromptTemplate,
        target_delay_s: f64,
    ) -> Result<Self> {
        if thermal_pseudocolor.is_none() && description.is_none() {
            return Err(PipelineError::InvalidRequest(
                "needs a thermal image or a description (use rgb_only for the unguided baseline)".into(),
            ));
        }
        Self::build(rgb, thermal_pseudocolor, description, template, target_delay_s)
    }

    /// Unguided baseline: the editor sees the RGB frame and the prompt only.
    pub fn rgb_only(rgb: RgbFrame, template: PromptTemplate, target_delay_s: f64) -> Result<Self> {
        Self::build(rgb, None, None, template, target_delay_s)
    }

    fn build(
        rgb: RgbFrame,
        thermal_pseudocolor: Option<RgbFrame>,
        description: Option<DescriptorOutput>,
        template: PromptTemplate,
        target_delay_s: f64,
    ) -> Result<Self> {
        if template.stage != Stage::Editor {
            return Err(TemplateError::WrongStage {
                id: template.id.clone(),
                expected: Stage::Editor,
                actual: template.stage,
            }
            .into());
        }
        if !(target_delay_s >= 0.0) || !target_delay_s.is_finite() {
            return Err(PipelineError::InvalidRequest(format!("target delay {target_delay_s}")));
        }
        Ok(EditRequest {
            rgb,
            thermal_pseudocolor,
            description,
            template,
            target_delay_s,
        })
    }

    pub fn prompt(&self) -> Result<String> {
        Ok(render_edit_prompt(&self.template, self.description.as_ref().map(|d| d.sentence.as_str()))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionRecord {
    pub image: RgbFrame,
    pub backend_id: String,
    pub descriptor_template_id: Option<String>,
    pub editor_template_id: String,
    pub inputs_hash: String,
    pub created_at_unix_s: u64,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// Incremental SHA-256 over tagged, length-prefixed parts.
#[derive(Default)]
pub struct InputsHasher(Sha256);

impl InputsHasher {
    pub fn frame(mut self, f: Option<&RgbFrame>) -> Self {
        match f {
            Some(f) => {
                self.0.update(b"img");
                self.0.update((f.width() as u64).to_le_bytes());
                self.0.update((f.height() as u64).to_le_bytes());
                self.0.update(f.pixels());
            }
            None => self.0.update(b"none"),
        }
        self
    }

    pub fn text(mut self, s: Option<&str>) -> Self {
        match s {
            Some(s) => {
                self.0.update(b"txt");
                self.0.update((s.len() as u64).to_le_bytes());
                self.0.update(s.as_bytes());
            }
            None => self.0.update(b"none"),
        }
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub struct Pipeline {
    cache: ResponseCache,
    retry: RetryPolicy,
    options: PipelineOptions,
}

impl Pipeline {
    pub fn new(cache: ResponseCache, retry: RetryPolicy, options: PipelineOptions) -> Self {
        Pipeline { cache, retry, options }
    }

    /// In-memory cache, no retry delay, default options.
    pub fn for_tests() -> Self {
        Self::new(ResponseCache::in_memory(), RetryPolicy::no_wait(), PipelineOptions::default())
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn options(&self) -> &PipelineOptions {
        &self.options
    }

    fn ambient_of(capture: &PairedCapture) -> f64 {
        capture
            .thermal()
            .ambient_hint_c()
            .unwrap_or_else(|| estimate_ambient(capture.thermal()))
    }

    /// Thermal frame registered onto the RGB grid and rendered as pseudocolor.
    pub fn thermal_pseudocolor(&self, capture: &PairedCapture) -> Result<RgbFrame> {
        let rgb = capture.rgb();
        let reg = register_thermal(capture.thermal(), rgb.width(), rgb.height(), self.options.alignment)?;
        let ambient = Self::ambient_of(capture);
        let norm = normalize_thermal(&reg, ambient, ambient + self.options.pseudocolor_span_c)?;
        Ok(thermal_to_pseudocolor(&norm)?.with_capture_time(rgb.capture_time_s()))
    }

    /// Trace inventory at native sensor resolution.
    pub fn traces(&self, capture: &PairedCapture) -> Result<TraceInventory> {
        Ok(detect_traces(capture.thermal(), Self::ambient_of(capture), &self.options.trace)?)
    }

    pub fn trace_summary(&self, capture: &PairedCapture) -> Result<String> {
        let inv = self.traces(capture)?;
        let labels = capture.annotations().and_then(|a| a.labels.as_ref());
        Ok(inventory_summary(&inv, labels).join("\n"))
    }

    pub fn describe_scene(&self, capture: &PairedCapture, template: &PromptTemplate, backend: &dyn Backend) -> Result<DescriptorOutput> {
        let backend_id = backend.id().to_string();
        if !backend.descriptor().supports(Capability::Describe) {
            return Err(PipelineError::Unsupported {
                backend_id,
                capability: "describe",
            });
        }
        let summary = if self.options.include_trace_summary {
            Some(self.trace_summary(capture)?)
        } else {
            None
        };
        let prompt = render_descriptor_prompt(template, capture.delay_s(), summary.as_deref())?;
        let images = [capture.rgb().clone(), self.thermal_pseudocolor(capture)?];
        let key = CacheKey {
            backend_id: backend_id.clone(),
            template_id: template.id.clone(),
            stage: Stage::Descriptor,
            inputs_hash: InputsHasher::default()
                .frame(Some(&images[0]))
                .frame(Some(&images[1]))
                .text(Some(&prompt))
                .finish(),
        };
        let started = Instant::now();
        let (value, hit) = self.cache.get_or_try_insert(&key, || {
            self.describe_with_retry(backend, &images, &prompt).map(CachedValue::Text)
        })?;
        let CachedValue::Text(raw) = value else {
            return Err(PipelineError::BackendContractViolation {
                backend_id,
                message: "cache holds an image for a descriptor request".into(),
            });
        };
        let sentence = validate_descriptor(&raw).map_err(|reason| PipelineError::MalformedDescriptor {
            backend_id: backend_id.clone(),
            raw: raw.clone(),
            reason,
        })?;
        Ok(DescriptorOutput {
            sentence,
            raw_response: raw,
            backend_id,
            template_id: template.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: hit,
        })
    }

    fn describe_with_retry(&self, backend: &dyn Backend, images: &[RgbFrame], prompt: &str) -> Result<String> {
        let backend_id = backend.id().to_string();
        let mut last: Option<PipelineError> = None;
        for attempt in 1..=self.retry.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before_retry(attempt - 1));
            }
            match backend.describe(images, prompt) {
                Ok(raw) => match validate_descriptor(&raw) {
                    Ok(_) => return Ok(raw),
                    Err(reason) => {
                        log::warn!("{backend_id}: malformed descriptor on attempt {attempt}: {reason}");
                        last = Some(PipelineError::MalformedDescriptor {
                            backend_id: backend_id.clone(),
                            raw,
                            reason,
                        });
                    }
                },
                Err(e) if e.is_retryable() => {
                    log::warn!("{backend_id}: attempt {attempt} failed: {e}");
                    last = Some(PipelineError::Transport {
                        backend_id: backend_id.clone(),
                        attempts: attempt,
                        message: e.to_string(),
                    });
                }
                Err(source) => return Err(PipelineError::Backend { backend_id, source }),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn reconstruct_past(&self, request: &EditRequest, backend: &dyn Backend) -> Result<ReconstructionRecord> {
        let backend_id = backend.id().to_string();
        if !backend.descriptor().supports(Capability::Edit) {
            return Err(PipelineError::Unsupported {
                backend_id,
                capability: "edit",
            });
        }
        let prompt = request.prompt()?;
        let inputs_hash = InputsHasher::default()
            .frame(Some(&request.rgb))
            .frame(request.thermal_pseudocolor.as_ref())
            .text(request.description.as_ref().map(|d| d.sentence.as_str()))
            .text(Some(&request.template.id))
            .text(Some(&prompt))
            .text(Some(&format!("{}", request.target_delay_s)))
            .finish();
        let key = CacheKey {
            backend_id: backend_id.clone(),
            template_id: request.template.id.clone(),
            stage: Stage::Editor,
            inputs_hash: inputs_hash.clone(),
        };
        let aux: Vec<RgbFrame> = request.thermal_pseudocolor.iter().cloned().collect();
        let started = Instant::now();
        let (value, hit) = self
            .cache
            .get_or_try_insert(&key, || self.edit_with_retry(backend, &request.rgb, &aux, &prompt).map(CachedValue::Image))?;
        let CachedValue::Image(image) = value else {
            return Err(PipelineError::BackendContractViolation {
                backend_id,
                message: "cache holds text for an edit request".into(),
            });
        };
        Ok(ReconstructionRecord {
            image,
            backend_id,
            descriptor_template_id: request.description.as_ref().map(|d| d.template_id.clone()),
            editor_template_id: request.template.id.clone(),
            inputs_hash,
            created_at_unix_s: cache::unix_now(),
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: hit,
        })
    }

    fn edit_with_retry(&self, backend: &dyn Backend, rgb: &RgbFrame, aux: &[RgbFrame], prompt: &str) -> Result<RgbFrame> {
        let backend_id = backend.id().to_string();
        let mut last_message = String::new();
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before_retry(attempt - 1));
            }
            match backend.edit(rgb, aux, prompt) {
                Ok(img) if img.same_dimensions(rgb) => return Ok(img.with_capture_time(rgb.capture_time_s())),
                Ok(img) => {
                    return Err(PipelineError::BackendContractViolation {
                        backend_id,
                        message: format!(
                            "returned {}x{} for a {}x{} input",
                            img.width(),
                            img.height(),
                            rgb.width(),
                            rgb.height()
                        ),
                    })
                }
                Err(e) if e.is_retryable() => {
                    log::warn!("{backend_id}: edit attempt {attempt} failed: {e}");
                    last_message = e.to_string();
                }
                Err(source) => return Err(PipelineError::Backend { backend_id, source }),
            }
        }
        Err(PipelineError::Transport {
            backend_id,
            attempts,
            message: last_message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_data::ThermalFrame;

    fn capture() -> PairedCapture {
        let rgb = RgbFrame::filled(32, 24, [100, 110, 120], 5.0).unwrap();
        let mut t = vec![22.0; 8 * 6];
        for i in [19, 20, 27, 28] {
            t[i] = 28.0;
        }
        let thermal = ThermalFrame::new(8, 6, t, 5.0).unwrap().with_ambient_hint(Some(22.0));
        PairedCapture::new(rgb, thermal, 5.0, "s").unwrap()
    }

    #[test]
    fn describe_uses_mock_and_cache() {
        let p = Pipeline::for_tests();
        let mock = MockBackend::identity("m");
        let t = template("desc-2").unwrap();
        let a = p.describe_scene(&capture(), t, &mock).unwrap();
        assert_eq!(a.sentence, MOCK_SENTENCE);
        assert!(!a.from_cache);
        let b = p.describe_scene(&capture(), t, &mock).unwrap();
        assert!(b.from_cache);
        assert_eq!(mock.describe_calls(), 1);
        p.describe_scene(&capture(), template("desc-3").unwrap(), &mock).unwrap();
        assert_eq!(mock.describe_calls(), 2);
    }

    #[test]
    fn three_sentences_are_malformed_after_retries() {
        let p = Pipeline::for_tests();
        let mock = MockBackend::identity("m").with_describe(MockDescribe::Echo("One. Two. Three.".into()));
        let e = p.describe_scene(&capture(), template("desc-1").unwrap(), &mock).unwrap_err();
        match e {
            PipelineError::MalformedDescriptor { raw, reason, .. } => {
                assert_eq!(raw, "One. Two. Three.");
                assert_eq!(reason, DescriptorRejection::MultiSentence);
            }
            other => panic!("{other}"),
        }
        assert_eq!(mock.describe_calls(), 4);
    }

    #[test]
    fn transport_failures_retry_then_fail() {
        let p = Pipeline::for_tests();
        let mock = MockBackend::failing("f");
        let req = EditRequest::new(capture().rgb().clone(), Some(capture().rgb().clone()), None, template("gen-thermal").unwrap().clone(), 5.0).unwrap();
        let e = p.reconstruct_past(&req, &mock).unwrap_err();
        assert!(matches!(e, PipelineError::Transport { attempts: 4, .. }), "{e}");
        assert_eq!(mock.edit_calls(), 4);
        assert!(e.is_backend_failure());
    }

    #[test]
    fn retry_delays_double() {
        let r = RetryPolicy::default();
        let d: Vec<u64> = (1..=3).map(|n| r.delay_before_retry(n).as_secs()).collect();
        assert_eq!(d, vec![1, 2, 4]);
    }

    #[test]
    fn wrong_size_is_contract_violation() {
        let p = Pipeline::for_tests();
        let mock = MockBackend::new("big", MockEdit::FixedSize(512, 512), MockDescribe::Fail);
        let rgb = RgbFrame::filled(1440, 1080, [1, 1, 1], 0.0).unwrap();
        let req = EditRequest::new(rgb.clone(), Some(rgb), None, template("gen-thermal").unwrap().clone(), 5.0).unwrap();
        let e = p.reconstruct_past(&req, &mock).unwrap_err();
        assert!(matches!(e, PipelineError::BackendContractViolation { .. }), "{e}");
        assert_eq!(mock.edit_calls(), 1);
    }

    #[test]
    fn identity_record_and_stable_hash() {
        let p = Pipeline::for_tests();
        let mock = MockBackend::identity("id");
        let c = capture();
        let pc = p.thermal_pseudocolor(&c).unwrap();
        assert!(pc.same_dimensions(c.rgb()));
        let req = EditRequest::new(c.rgb().clone(), Some(pc), None, template("gen-thermal").unwrap().clone(), 5.0).unwrap();
        let rec = p.reconstruct_past(&req, &mock).unwrap();
        assert_eq!(rec.image, *c.rgb());
        assert_eq!(rec.editor_template_id, "gen-thermal");
        let again = p.reconstruct_past(&req.clone(), &mock).unwrap();
        assert_eq!(again.inputs_hash, rec.inputs_hash);
        assert!(again.from_cache);
    }

    #[test]
    fn request_invariants() {
        let rgb = RgbFrame::filled(4, 4, [0, 0, 0], 0.0).unwrap();
        assert!(EditRequest::new(rgb.clone(), None, None, template("gen-thermal").unwrap().clone(), 5.0).is_err());
        assert!(EditRequest::rgb_only(rgb.clone(), template("desc-1").unwrap().clone(), 5.0).is_err());
        assert!(EditRequest::rgb_only(rgb, template("gen-rgb").unwrap().clone(), 5.0).is_ok());
    }

    #[test]
    fn unsupported_capability() {
        struct EditOnly(BackendDescriptor);
        impl Backend for EditOnly {
            fn descriptor(&self) -> &BackendDescriptor {
                &self.0
            }
            fn describe(&self, _: &[RgbFrame], _: &str) -> std::result::Result<String, BackendError> {
                unreachable!()
            }
            fn edit(&self, i: &RgbFrame, _: &[RgbFrame], _: &str) -> std::result::Result<RgbFrame, BackendError> {
                Ok(i.clone())
            }
        }
        let b = EditOnly(BackendDescriptor::new("e", [Capability::Edit], "").unwrap());
        let e = Pipeline::for_tests()
            .describe_scene(&capture(), template("desc-1").unwrap(), &b)
            .unwrap_err();
        assert!(matches!(e, PipelineError::Unsupported { .. }));
    }

    #[test]
    fn summary_in_prompt_lists_trace() {
        let p = Pipeline::for_tests();
        let s = p.trace_summary(&capture()).unwrap();
        assert!(s.contains("strong trace"), "{s}");
    }
}
