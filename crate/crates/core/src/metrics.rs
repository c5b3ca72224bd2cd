//! Reconstruction quality metrics: PSNR, SSIM, MPJPE and overall accuracy,
//! plus mean ± std aggregation across scenes.
//!
//! Keypoint and label-map file schemas live here too; they are the contract
//! with external pose and segmentation exporters.
//!
//! Keypoints: `{"skeleton_id": "coco17", "joints": [{"name", "x", "y", "confidence"}], "no_detection": false}`.
//! Label maps: 8-bit grayscale PNG plus `<stem>.json` with `{"class_names": {"0": "background", ...}}`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scene_data::RgbFrame;

/// Keypoints below this confidence in either set are excluded from MPJPE.
pub const DEFAULT_MIN_CONF: f64 = 0.3;
/// Side length of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
    #[error("skeleton mismatch: {0:?} vs {1:?}")]
    SkeletonMismatch(String, String),
    #[error("joint name sets differ")]
    JointSetMismatch,
    #[error("no joint survives the confidence filter")]
    NoValidJoints,
    #[error("cannot aggregate an empty sample list")]
    Empty,
    #[error("invalid {0}")]
    Invalid(String),
    #[error("failed to access {path}: {message}")]
    File { path: PathBuf, message: String },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// A 2D pose: named joints in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub skeleton_id: String,
    pub joints: Vec<Joint>,
    /// Set by exporters when no person was found; `joints` is then empty.
    #[serde(default)]
    pub no_detection: bool,
}

impl KeypointSet {
    pub fn new(skeleton_id: impl Into<String>, joints: Vec<Joint>) -> Result<Self> {
        let set = KeypointSet {
            skeleton_id: skeleton_id.into(),
            no_detection: joints.is_empty(),
            joints,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for j in &self.joints {
            if !seen.insert(j.name.as_str()) {
                return Err(MetricsError::Invalid(format!("duplicate joint {:?}", j.name)));
            }
            if !j.x.is_finite() || !j.y.is_finite() {
                return Err(MetricsError::Invalid(format!("joint {:?} has non-finite coordinates", j.name)));
            }
            if !(0.0..=1.0).contains(&j.confidence) {
                return Err(MetricsError::Invalid(format!("joint {:?} confidence outside [0, 1]", j.name)));
            }
        }
        Ok(())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> KeypointSet {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.x += dx;
            j.y += dy;
        }
        out
    }
}

/// Per-pixel class ids with a class-name table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    class_names: BTreeMap<u8, String>,
}

impl LabelMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        class_names: BTreeMap<u8, String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(MetricsError::Invalid(format!(
                "label buffer length {} for {width}x{height}",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| !class_names.contains_key(l)) {
            return Err(MetricsError::Invalid(format!("label id {l} has no class name")));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
            class_names,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn class_names(&self) -> &BTreeMap<u8, String> {
        &self.class_names
    }

    pub fn class_name(&self, id: u8) -> Option<&str> {
        self.class_names.get(&id).map(String::as_str)
    }
}

fn check_dims(a: &RgbFrame, b: &RgbFrame) -> Result<()> {
    if a.same_dimensions(b) {
        Ok(())
    } else {
        Err(MetricsError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()))
    }
}

/// Peak signal-to-noise ratio in dB over all pixels and channels.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(reference: &RgbFrame, candidate: &RgbFrame) -> Result<f64> {
    check_dims(reference, candidate)?;
    let sse: u64 = reference
        .pixels()
        .iter()
        .zip(candidate.pixels())
        .map(|(&a, &b)| {
            let d = a.abs_diff(b) as u64;
            d * d
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / reference.pixels().len() as f64;
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// BT.601 luma of every pixel, unrounded.
pub fn luminance(frame: &RgbFrame) -> Vec<f64> {
    frame
        .pixels()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" filtering: output is (w - 10) x (h - 10).
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horiz[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM on the luminance channel with an 11x11 Gaussian window (σ = 1.5).
pub fn ssim(reference: &RgbFrame, candidate: &RgbFrame) -> Result<f64> {
    check_dims(reference, candidate)?;
    let (w, h) = (reference.width(), reference.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(w, h));
    }
    let x = luminance(reference);
    let y = luminance(candidate);
    let taps = gaussian_taps();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(&x, w, h, &taps);
    let mu_y = filter_valid(&y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);

    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok((total / n as f64).clamp(-1.0, 1.0))
}

/// Mean Euclidean distance between joints with the same name.
pub fn mpjpe(reference: &KeypointSet, candidate: &KeypointSet, min_conf: f64) -> Result<f64> {
    if reference.skeleton_id != candidate.skeleton_id {
        return Err(MetricsError::SkeletonMismatch(
            reference.skeleton_id.clone(),
            candidate.skeleton_id.clone(),
        ));
    }
    if reference.joints.is_empty() || candidate.joints.is_empty() {
        return Err(MetricsError::NoValidJoints);
    }
    let cand: BTreeMap<&str, &Joint> = candidate.joints.iter().map(|j| (j.name.as_str(), j)).collect();
    if cand.len() != reference.joints.len() || reference.joints.iter().any(|j| !cand.contains_key(j.name.as_str())) {
        return Err(MetricsError::JointSetMismatch);
    }
    let dists: Vec<f64> = reference
        .joints
        .iter()
        .filter_map(|r| {
            let c = cand[r.name.as_str()];
            (r.confidence >= min_conf && c.confidence >= min_conf).then(|| (r.x - c.x).hypot(r.y - c.y))
        })
        .collect();
    if dists.is_empty() {
        return Err(MetricsError::NoValidJoints);
    }
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Percentage of pixels whose labels agree.
pub fn overall_accuracy(reference: &LabelMap, candidate: &LabelMap) -> Result<f64> {
    if reference.width != candidate.width || reference.height != candidate.height {
        return Err(MetricsError::DimensionMismatch(
            reference.width,
            reference.height,
            candidate.width,
            candidate.height,
        ));
    }
    let equal = reference
        .labels
        .iter()
        .zip(&candidate.labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(100.0 * equal as f64 / reference.labels.len() as f64)
}

/// Mean, optional sample std (n ≥ 2) and sample count of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub count: usize,
}

impl MetricValue {
    pub fn single(v: f64) -> Self {
        MetricValue {
            mean: v,
            std: None,
            count: 1,
        }
    }

    fn from_samples(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(MetricValue { mean, std, count: n })
    }

    /// `"18.57 ± 1.21"`, or just the mean for a single sample.
    pub fn display(&self, scale: f64) -> String {
        match self.std {
            Some(s) => format!("{:.2} ± {:.2}", self.mean * scale, s * scale),
            None => format!("{:.2}", self.mean * scale),
        }
    }
}

/// Metrics for one reconstruction or an aggregate over many.
///
/// Infinite PSNR samples (bit-exact reconstructions) are never averaged; they
/// are counted in `psnr_infinite`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr_db: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpjpe_px: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oa_percent: Option<MetricValue>,
    #[serde(default)]
    pub psnr_infinite: usize,
}

impl MetricReport {
    pub fn sample(psnr_db: Option<f64>, ssim: Option<f64>, mpjpe_px: Option<f64>, oa_percent: Option<f64>) -> Result<Self> {
        if let Some(s) = ssim {
            if !(-1.0..=1.0).contains(&s) {
                return Err(MetricsError::Invalid(format!("ssim {s} outside [-1, 1]")));
            }
        }
        if let Some(o) = oa_percent {
            if !(0.0..=100.0).contains(&o) {
                return Err(MetricsError::Invalid(format!("oa {o} outside [0, 100]")));
            }
        }
        if let Some(m) = mpjpe_px {
            if !(m >= 0.0) {
                return Err(MetricsError::Invalid(format!("mpjpe {m} is negative")));
            }
        }
        let (psnr_db, psnr_infinite) = match psnr_db {
            Some(p) if p == f64::INFINITY => (None, 1),
            Some(p) if p.is_finite() => (Some(MetricValue::single(p)), 0),
            Some(p) => return Err(MetricsError::Invalid(format!("psnr {p}"))),
            None => (None, 0),
        };
        Ok(MetricReport {
            psnr_db,
            ssim: ssim.map(MetricValue::single),
            mpjpe_px: mpjpe_px.map(MetricValue::single),
            oa_percent: oa_percent.map(MetricValue::single),
            psnr_infinite,
        })
    }

    /// PSNR as a single comparable number: +∞ when every sample was exact.
    pub fn psnr_effective(&self) -> Option<f64> {
        match self.psnr_db {
            Some(v) => Some(v.mean),
            None if self.psnr_infinite > 0 => Some(f64::INFINITY),
            None => None,
        }
    }

    pub fn psnr_display(&self) -> String {
        match (&self.psnr_db, self.psnr_infinite) {
            (Some(v), _) => v.display(1.0),
            (None, n) if n > 0 => "∞".to_string(),
            _ => "—".to_string(),
        }
    }

    /// True when `self` is strictly better on PSNR, SSIM, MPJPE and OA.
    ///
    /// A metric that is present beats one that could not be computed.
    pub fn dominates(&self, other: &MetricReport) -> bool {
        fn better(a: Option<f64>, b: Option<f64>, higher_is_better: bool) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => {
                    if higher_is_better {
                        x > y
                    } else {
                        x < y
                    }
                }
                (Some(_), None) => true,
                _ => false,
            }
        }
        better(self.psnr_effective(), other.psnr_effective(), true)
            && better(self.ssim.map(|v| v.mean), other.ssim.map(|v| v.mean), true)
            && better(self.mpjpe_px.map(|v| v.mean), other.mpjpe_px.map(|v| v.mean), false)
            && better(self.oa_percent.map(|v| v.mean), other.oa_percent.map(|v| v.mean), true)
    }
}

/// Per-metric mean and sample standard deviation across reports.
pub fn aggregate(samples: &[MetricReport]) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let collect = |f: fn(&MetricReport) -> Option<MetricValue>| -> Vec<f64> {
        samples.iter().filter_map(f).map(|v| v.mean).collect()
    };
    Ok(MetricReport {
        psnr_db: MetricValue::from_samples(&collect(|r| r.psnr_db)),
        ssim: MetricValue::from_samples(&collect(|r| r.ssim)),
        mpjpe_px: MetricValue::from_samples(&collect(|r| r.mpjpe_px)),
        oa_percent: MetricValue::from_samples(&collect(|r| r.oa_percent)),
        psnr_infinite: samples.iter().map(|r| r.psnr_infinite).sum(),
    })
}

fn file_err(path: &Path, e: impl ToString) -> MetricsError {
    MetricsError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn load_keypoints(path: &Path) -> Result<KeypointSet> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let set: KeypointSet = serde_json::from_str(&text).map_err(|e| file_err(path, e))?;
    set.validate()?;
    Ok(set)
}

pub fn save_keypoints(set: &KeypointSet, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(set).expect("keypoints serialize");
    fs::write(path, json + "\n").map_err(|e| file_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct ClassTable {
    class_names: BTreeMap<u8, String>,
}

pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    let img = image::open(path).map_err(|e| file_err(path, e))?;
    let image::DynamicImage::ImageLuma8(gray) = img else {
        return Err(file_err(path, "label maps must be 8-bit single-channel PNGs"));
    };
    let side = path.with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| file_err(&side, e))?;
    let table: ClassTable = serde_json::from_str(&text).map_err(|e| file_err(&side, e))?;
    let (w, h) = gray.dimensions();
    LabelMap::new(w as usize, h as usize, gray.into_raw(), table.class_names)
}

pub fn save_label_map(map: &LabelMap, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        &map.labels,
        map.width as u32,
        map.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| file_err(path, e))?;
    let side = path.with_extension("json");
    let table = ClassTable {
        class_names: map.class_names.clone(),
    };
    let json = serde_json::to_string_pretty(&table).expect("class table serializes");
    fs::write(&side, json + "\n").map_err(|e| file_err(&side, e))
}
