//! Thermal-assisted reconstruction of past scene states.
//!
//! The crate covers the whole offline pipeline: a synthetic residual-heat
//! simulator, paired RGB/thermal capture handling, trace detection, prompt
//! construction around pluggable vision-language backends, metric computation
//! and the experiment drivers that produce the result tables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod mask;
pub mod metrics;
pub mod scene_data;
pub mod thermal_sim;
pub mod trace_analysis;
pub mod vlm_pipeline;

pub use config::{BackendRegistry, GlobalConfig};
pub use experiments::{ExperimentOutput, ExperimentRunner, FixtureAnnotator};
pub use mask::{Mask, Rect};
pub use metrics::{KeypointSet, LabelMap, MetricReport, MetricValue};
pub use scene_data::{PairedCapture, RgbFrame, ScenarioKind, ScenarioManifest, ThermalFrame};
pub use thermal_sim::SimConfig;
pub use trace_analysis::{Grade, TraceInventory, TraceRegion};
pub use vlm_pipeline::{Backend, BackendDescriptor, Pipeline, PromptTemplate, Stage};
