//! Paired RGB/thermal captures and scenario manifests.
//!
//! Every other module consumes the types defined here. Frames are validated on
//! construction and immutable afterwards.

mod manifest;
mod register;

pub use manifest::{
    load_manifest, read_rgb_png, read_thermal_png, save_manifest, write_rgb_png, write_thermal_png,
};
pub use register::{
    normalize_thermal, register_thermal, thermal_to_pseudocolor, AlignmentParams,
    NormalizedThermal, PSEUDOCOLOR_RAMP,
};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::metrics::{KeypointSet, LabelMap};

/// Lowest temperature a consumer LWIR sensor plausibly reports, in °C.
pub const MIN_PLAUSIBLE_C: f64 = -40.0;
/// Highest plausible temperature, in °C.
pub const MAX_PLAUSIBLE_C: f64 = 150.0;
/// Maximum RGB/thermal timestamp disagreement inside one capture, in seconds.
pub const CAPTURE_TIME_TOLERANCE_S: f64 = 0.2;
/// Human body temperature, the default upper anchor for normalization.
pub const BODY_TEMP_C: f64 = 37.0;

#[derive(Debug, thiserror::Error)]
pub enum SceneDataError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),
}

impl SceneDataError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneDataError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = SceneDataError> = std::result::Result<T, E>;

/// An 8-bit, 3-channel image stored row-major.
#[derive(Clone, PartialEq)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    capture_time_s: f64,
}

impl fmt::Debug for RgbFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RgbFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("capture_time_s", &self.capture_time_s)
            .finish_non_exhaustive()
    }
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, capture_time_s: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SceneDataError::invalid("rgb", "width and height must be positive"));
        }
        if pixels.len() != width * height * 3 {
            return Err(SceneDataError::invalid(
                "rgb.pixels",
                format!(
                    "buffer length {} does not match {}x{}x3",
                    pixels.len(),
                    width,
                    height
                ),
            ));
        }
        if !capture_time_s.is_finite() {
            return Err(SceneDataError::invalid("rgb.capture_time_s", "must be finite"));
        }
        Ok(RgbFrame {
            width,
            height,
            pixels,
            capture_time_s,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, color: [u8; 3], capture_time_s: f64) -> Result<Self> {
        let pixels = color
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        RgbFrame::new(width, height, pixels, capture_time_s)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn capture_time_s(&self) -> f64 {
        self.capture_time_s
    }

    pub fn with_capture_time(mut self, capture_time_s: f64) -> Self {
        self.capture_time_s = capture_time_s;
        self
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn same_dimensions(&self, other: &RgbFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// A grid of temperatures in °C stored row-major.
#[derive(Clone, PartialEq)]
pub struct ThermalFrame {
    width: usize,
    height: usize,
    temps: Vec<f64>,
    capture_time_s: f64,
    ambient_hint_c: Option<f64>,
}

impl fmt::Debug for ThermalFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThermalFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("capture_time_s", &self.capture_time_s)
            .field("ambient_hint_c", &self.ambient_hint_c)
            .finish_non_exhaustive()
    }
}

impl ThermalFrame {
    pub fn new(width: usize, height: usize, temps: Vec<f64>, capture_time_s: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SceneDataError::invalid("thermal", "width and height must be positive"));
        }
        if temps.len() != width * height {
            return Err(SceneDataError::invalid(
                "thermal.temps",
                format!("buffer length {} does not match {}x{}", temps.len(), width, height),
            ));
        }
        if let Some((i, t)) = temps
            .iter()
            .enumerate()
            .find(|(_, t)| !t.is_finite() || **t < MIN_PLAUSIBLE_C || **t > MAX_PLAUSIBLE_C)
        {
            return Err(SceneDataError::invalid(
                format!("thermal.temps[{i}]"),
                format!("{t} is outside [{MIN_PLAUSIBLE_C}, {MAX_PLAUSIBLE_C}] °C"),
            ));
        }
        if !capture_time_s.is_finite() {
            return Err(SceneDataError::invalid("thermal.capture_time_s", "must be finite"));
        }
        Ok(ThermalFrame {
            width,
            height,
            temps,
            capture_time_s,
            ambient_hint_c: None,
        })
    }

    pub fn uniform(width: usize, height: usize, temp_c: f64, capture_time_s: f64) -> Result<Self> {
        ThermalFrame::new(width, height, vec![temp_c; width * height], capture_time_s)
    }

    pub fn with_ambient_hint(mut self, ambient_c: Option<f64>) -> Self {
        self.ambient_hint_c = ambient_c;
        self
    }

    pub fn with_capture_time(mut self, capture_time_s: f64) -> Self {
        self.capture_time_s = capture_time_s;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn temp(&self, x: usize, y: usize) -> f64 {
        self.temps[y * self.width + x]
    }

    pub fn capture_time_s(&self) -> f64 {
        self.capture_time_s
    }

    pub fn ambient_hint_c(&self) -> Option<f64> {
        self.ambient_hint_c
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.temps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
    }
}

/// Pose and label annotations attached to a single capture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAnnotations {
    pub keypoints: Option<KeypointSet>,
    pub labels: Option<LabelMap>,
}

/// A co-registered RGB frame and thermal grid taken `delay_s` seconds after contact ended.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCapture {
    rgb: RgbFrame,
    thermal: ThermalFrame,
    delay_s: f64,
    scenario_id: String,
    annotations: Option<FrameAnnotations>,
}

impl PairedCapture {
    pub fn new(
        rgb: RgbFrame,
        thermal: ThermalFrame,
        delay_s: f64,
        scenario_id: impl Into<String>,
    ) -> Result<Self> {
        if !delay_s.is_finite() || delay_s < 0.0 {
            return Err(SceneDataError::invalid("delay_s", format!("{delay_s} must be >= 0")));
        }
        let skew = (rgb.capture_time_s() - thermal.capture_time_s()).abs();
        if skew > CAPTURE_TIME_TOLERANCE_S {
            return Err(SceneDataError::invalid(
                "capture_time_s",
                format!("rgb and thermal timestamps differ by {skew:.3} s (> {CAPTURE_TIME_TOLERANCE_S} s)"),
            ));
        }
        Ok(PairedCapture {
            rgb,
            thermal,
            delay_s,
            scenario_id: scenario_id.into(),
            annotations: None,
        })
    }

    pub fn with_annotations(mut self, annotations: Option<FrameAnnotations>) -> Self {
        self.annotations = annotations;
        self
    }

    pub fn rgb(&self) -> &RgbFrame {
        &self.rgb
    }

    pub fn thermal(&self) -> &ThermalFrame {
        &self.thermal
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn annotations(&self) -> Option<&FrameAnnotations> {
        self.annotations.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SitChair,
    LeanWall,
    TouchObject,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::SitChair,
        ScenarioKind::LeanWall,
        ScenarioKind::TouchObject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SitChair => "sit_chair",
            ScenarioKind::LeanWall => "lean_wall",
            ScenarioKind::TouchObject => "touch_object",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = SceneDataError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                SceneDataError::invalid(
                    "kind",
                    format!("unknown scenario kind {s:?} (expected sit_chair, lean_wall or touch_object)"),
                )
            })
    }
}

/// One scenario: a delay-0 ground truth plus observations at increasing delays.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioManifest {
    scenario_id: String,
    kind: ScenarioKind,
    contact_duration_s: f64,
    ground_truth: PairedCapture,
    observations: Vec<PairedCapture>,
}

impl ScenarioManifest {
    /// Validates the invariants and sorts observations by delay.
    pub fn new(
        scenario_id: impl Into<String>,
        kind: ScenarioKind,
        contact_duration_s: f64,
        ground_truth: PairedCapture,
        mut observations: Vec<PairedCapture>,
    ) -> Result<Self> {
        if ground_truth.delay_s() != 0.0 {
            return Err(SceneDataError::invalid(
                "ground_truth.delay_s",
                "ground truth must be delay 0",
            ));
        }
        if !contact_duration_s.is_finite() || contact_duration_s < 0.0 {
            return Err(SceneDataError::invalid(
                "contact_duration_s",
                "must be a nonnegative number",
            ));
        }
        observations.sort_by(|a, b| a.delay_s().total_cmp(&b.delay_s()));
        for (i, obs) in observations.iter().enumerate() {
            if obs.delay_s() <= 0.0 {
                return Err(SceneDataError::invalid(
                    format!("entries[{i}].delay_s"),
                    "observation delays must be > 0",
                ));
            }
            if i > 0 && observations[i - 1].delay_s() == obs.delay_s() {
                return Err(SceneDataError::invalid(
                    format!("entries[{i}].delay_s"),
                    format!("duplicate delay {}", obs.delay_s()),
                ));
            }
        }
        Ok(ScenarioManifest {
            scenario_id: scenario_id.into(),
            kind,
            contact_duration_s,
            ground_truth,
            observations,
        })
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn contact_duration_s(&self) -> f64 {
        self.contact_duration_s
    }

    pub fn ground_truth(&self) -> &PairedCapture {
        &self.ground_truth
    }

    pub fn observations(&self) -> &[PairedCapture] {
        &self.observations
    }

    /// Ground-truth annotations, if any were supplied.
    pub fn annotations(&self) -> Option<&FrameAnnotations> {
        self.ground_truth.annotations()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.observations.iter().map(PairedCapture::delay_s).collect()
    }

    /// The observation taken at `delay_s` (matched within 1 ms).
    pub fn observation_at(&self, delay_s: f64) -> Option<&PairedCapture> {
        self.observations
            .iter()
            .find(|o| (o.delay_s() - delay_s).abs() < 1e-3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture(delay: f64) -> PairedCapture {
        PairedCapture::new(
            RgbFrame::filled(4, 3, [1, 2, 3], delay).unwrap(),
            ThermalFrame::uniform(2, 2, 22.0, delay).unwrap(),
            delay,
            "s",
        )
        .unwrap()
    }

    #[test]
    fn rgb_buffer_length_checked() {
        assert!(RgbFrame::new(2, 2, vec![0; 11], 0.0).is_err());
        assert!(RgbFrame::new(0, 2, vec![], 0.0).is_err());
        assert!(RgbFrame::new(2, 2, vec![0; 12], 0.0).is_ok());
    }

    #[test]
    fn thermal_plausibility_bound() {
        assert!(ThermalFrame::new(1, 2, vec![22.0, 151.0], 0.0).is_err());
        assert!(ThermalFrame::new(1, 2, vec![22.0, f64::NAN], 0.0).is_err());
        assert!(ThermalFrame::new(1, 2, vec![-40.0, 150.0], 0.0).is_ok());
    }

    #[test]
    fn capture_timestamp_tolerance() {
        let rgb = RgbFrame::filled(2, 2, [0, 0, 0], 5.0).unwrap();
        let ok = ThermalFrame::uniform(2, 2, 22.0, 5.15).unwrap();
        let bad = ThermalFrame::uniform(2, 2, 22.0, 5.25).unwrap();
        assert!(PairedCapture::new(rgb.clone(), ok, 5.0, "s").is_ok());
        assert!(PairedCapture::new(rgb, bad, 5.0, "s").is_err());
    }

    #[test]
    fn ground_truth_must_be_delay_zero() {
        let err = ScenarioManifest::new("s", ScenarioKind::SitChair, 30.0, capture(3.0), vec![])
            .unwrap_err();
        assert!(err.to_string().contains("ground truth must be delay 0"), "{err}");
    }

    #[test]
    fn observations_resorted() {
        let m = ScenarioManifest::new(
            "s",
            ScenarioKind::SitChair,
            30.0,
            capture(0.0),
            vec![capture(30.0), capture(5.0)],
        )
        .unwrap();
        assert_eq!(m.delays(), vec![5.0, 30.0]);
        assert!(m.observation_at(30.0).is_some());
        assert!(m.observation_at(15.0).is_none());
    }

    #[test]
    fn duplicate_delays_rejected() {
        let r = ScenarioManifest::new(
            "s",
            ScenarioKind::SitChair,
            30.0,
            capture(0.0),
            vec![capture(5.0), capture(5.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn kind_parses() {
        assert_eq!("lean_wall".parse::<ScenarioKind>().unwrap(), ScenarioKind::LeanWall);
        assert!("dance".parse::<ScenarioKind>().is_err());
    }
}
