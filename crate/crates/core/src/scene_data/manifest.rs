//! On-disk scenario manifests.
//!
//! ```json
//! {
//!   "scenario_id": "sit-01",
//!   "kind": "sit_chair",
//!   "contact_duration_s": 30.0,
//!   "entries": [
//!     {"delay_s": 0, "rgb_path": "gt_rgb.png", "thermal_path": "gt_thermal.png"},
//!     {"delay_s": 5, "rgb_path": "d01_rgb.png", "thermal_path": "d01_thermal.png"}
//!   ],
//!   "annotations": {"keypoints_path": "gt_keypoints.json", "labels_path": "gt_labels.png"}
//! }
//! ```
//!
//! The delay-0 entry is the ground truth. A manifest may instead name it in a
//! separate `ground_truth` object. Paths are relative to the manifest file.
//! Thermal grids are 16-bit grayscale PNGs with a sidecar `<stem>.json`
//! holding `{"scale_c_per_count", "offset_c"}`; temperature is
//! `count * scale_c_per_count + offset_c`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{
    FrameAnnotations, PairedCapture, Result, RgbFrame, ScenarioKind, ScenarioManifest,
    SceneDataError, ThermalFrame, MAX_PLAUSIBLE_C, MIN_PLAUSIBLE_C,
};
use crate::metrics::{load_keypoints, load_label_map, save_keypoints, save_label_map};

/// Temperature resolution used when writing thermal PNGs.
pub const THERMAL_SCALE_C_PER_COUNT: f64 = 0.01;
/// Temperature of count 0 when writing thermal PNGs.
pub const THERMAL_OFFSET_C: f64 = MIN_PLAUSIBLE_C;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    scenario_id: String,
    kind: String,
    contact_duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<EntryDoc>,
    entries: Vec<EntryDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<AnnotationDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    delay_s: f64,
    rgb_path: String,
    thermal_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rgb_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thermal_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<AnnotationDoc>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels_path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ThermalSidecar {
    scale_c_per_count: f64,
    offset_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ambient_hint_c: Option<f64>,
}

fn prefixed(prefix: &str, err: SceneDataError) -> SceneDataError {
    match err {
        SceneDataError::Invalid { field, message } => SceneDataError::Invalid {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

/// Reads a manifest and every file it references, validating all invariants.
pub fn load_manifest(path: &Path) -> Result<ScenarioManifest> {
    let text = fs::read_to_string(path).map_err(|source| SceneDataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| SceneDataError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let kind: ScenarioKind = doc.kind.parse()?;

    let mut entries = doc.entries;
    let gt_doc = match doc.ground_truth {
        Some(gt) => gt,
        None => {
            let pos = entries.iter().position(|e| e.delay_s == 0.0).ok_or_else(|| {
                SceneDataError::invalid("entries", "ground truth must be delay 0 (no delay-0 entry)")
            })?;
            entries.remove(pos)
        }
    };
    if gt_doc.delay_s != 0.0 {
        return Err(SceneDataError::invalid(
            "ground_truth.delay_s",
            "ground truth must be delay 0",
        ));
    }

    let mut ground_truth = load_entry(base, &doc.scenario_id, &gt_doc).map_err(|e| prefixed("ground_truth", e))?;
    if let Some(ann) = &doc.annotations {
        let loaded = load_annotations(base, ann)?;
        ground_truth = ground_truth.with_annotations(Some(loaded));
    }
    let observations = entries
        .iter()
        .enumerate()
        .map(|(i, e)| load_entry(base, &doc.scenario_id, e).map_err(|err| prefixed(&format!("entries[{i}]"), err)))
        .collect::<Result<Vec<_>>>()?;

    ScenarioManifest::new(doc.scenario_id, kind, doc.contact_duration_s, ground_truth, observations)
}

fn load_entry(base: &Path, scenario_id: &str, e: &EntryDoc) -> Result<PairedCapture> {
    let rgb_time = e.rgb_time_s.unwrap_or(e.delay_s);
    let thermal_time = e.thermal_time_s.unwrap_or(e.delay_s);
    let rgb = read_rgb_png(&base.join(&e.rgb_path))?.with_capture_time(rgb_time);
    let thermal = read_thermal_png(&base.join(&e.thermal_path))?.with_capture_time(thermal_time);
    let capture = PairedCapture::new(rgb, thermal, e.delay_s, scenario_id)?;
    let annotations = match &e.annotations {
        Some(a) => Some(load_annotations(base, a)?),
        None => None,
    };
    Ok(capture.with_annotations(annotations))
}

fn load_annotations(base: &Path, a: &AnnotationDoc) -> Result<FrameAnnotations> {
    let keypoints = match &a.keypoints_path {
        Some(p) => {
            let path = base.join(p);
            Some(load_keypoints(&path).map_err(|e| SceneDataError::Parse {
                path,
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let labels = match &a.labels_path {
        Some(p) => {
            let path = base.join(p);
            Some(load_label_map(&path).map_err(|e| SceneDataError::Parse {
                path,
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    Ok(FrameAnnotations { keypoints, labels })
}

/// Writes `manifest` and all of its frames into `dir`; returns the manifest path.
pub fn save_manifest(manifest: &ScenarioManifest, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| SceneDataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let gt = manifest.ground_truth();
    let mut entries = vec![save_entry(dir, "gt", gt, false)?];
    for (i, obs) in manifest.observations().iter().enumerate() {
        entries.push(save_entry(dir, &format!("d{:02}", i + 1), obs, true)?);
    }
    let annotations = match gt.annotations() {
        Some(a) => Some(save_annotations(dir, "gt", a)?),
        None => None,
    };
    let doc = ManifestDoc {
        scenario_id: manifest.scenario_id().to_string(),
        kind: manifest.kind().as_str().to_string(),
        contact_duration_s: manifest.contact_duration_s(),
        ground_truth: None,
        entries,
        annotations,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&doc).expect("manifest document serializes");
    fs::write(&path, json + "\n").map_err(|source| SceneDataError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn save_entry(dir: &Path, stem: &str, c: &PairedCapture, with_annotations: bool) -> Result<EntryDoc> {
    let rgb_path = format!("{stem}_rgb.png");
    let thermal_path = format!("{stem}_thermal.png");
    write_rgb_png(c.rgb(), &dir.join(&rgb_path))?;
    write_thermal_png(c.thermal(), &dir.join(&thermal_path))?;
    let annotations = match (with_annotations, c.annotations()) {
        (true, Some(a)) => Some(save_annotations(dir, stem, a)?),
        _ => None,
    };
    Ok(EntryDoc {
        delay_s: c.delay_s(),
        rgb_path,
        thermal_path,
        rgb_time_s: Some(c.rgb().capture_time_s()),
        thermal_time_s: Some(c.thermal().capture_time_s()),
        annotations,
    })
}

fn save_annotations(dir: &Path, stem: &str, a: &FrameAnnotations) -> Result<AnnotationDoc> {
    let mut doc = AnnotationDoc::default();
    if let Some(k) = &a.keypoints {
        let name = format!("{stem}_keypoints.json");
        let path = dir.join(&name);
        save_keypoints(k, &path).map_err(|e| SceneDataError::Parse {
            path,
            message: e.to_string(),
        })?;
        doc.keypoints_path = Some(name);
    }
    if let Some(l) = &a.labels {
        let name = format!("{stem}_labels.png");
        let path = dir.join(&name);
        save_label_map(l, &path).map_err(|e| SceneDataError::Parse {
            path,
            message: e.to_string(),
        })?;
        doc.labels_path = Some(name);
    }
    Ok(doc)
}

pub fn read_rgb_png(path: &Path) -> Result<RgbFrame> {
    let img = image::open(path).map_err(|e| SceneDataError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    RgbFrame::new(w as usize, h as usize, rgb.into_raw(), 0.0)
}

pub fn write_rgb_png(frame: &RgbFrame, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        frame.pixels(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| SceneDataError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Sidecar path for a thermal or label PNG: same stem, `.json` extension.
pub(crate) fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn read_thermal_png(path: &Path) -> Result<ThermalFrame> {
    let img = image::open(path).map_err(|e| SceneDataError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let image::DynamicImage::ImageLuma16(gray) = img else {
        return Err(SceneDataError::Image {
            path: path.to_path_buf(),
            message: "thermal grids must be 16-bit single-channel PNGs".into(),
        });
    };
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|source| SceneDataError::Io {
        path: side.clone(),
        source,
    })?;
    let sidecar: ThermalSidecar = serde_json::from_str(&text).map_err(|e| SceneDataError::Parse {
        path: side.clone(),
        message: e.to_string(),
    })?;
    let (w, h) = gray.dimensions();
    let temps = gray
        .into_raw()
        .into_iter()
        .map(|c| c as f64 * sidecar.scale_c_per_count + sidecar.offset_c)
        .collect();
    Ok(ThermalFrame::new(w as usize, h as usize, temps, 0.0)?.with_ambient_hint(sidecar.ambient_hint_c))
}

pub fn write_thermal_png(frame: &ThermalFrame, path: &Path) -> Result<()> {
    let max_count = ((MAX_PLAUSIBLE_C - THERMAL_OFFSET_C) / THERMAL_SCALE_C_PER_COUNT).round();
    let counts: Vec<u16> = frame
        .temps()
        .iter()
        .map(|t| ((t - THERMAL_OFFSET_C) / THERMAL_SCALE_C_PER_COUNT).round().clamp(0.0, max_count) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, counts)
            .expect("thermal buffer matches dimensions");
    buf.save(path).map_err(|e| SceneDataError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let sidecar = ThermalSidecar {
        scale_c_per_count: THERMAL_SCALE_C_PER_COUNT,
        offset_c: THERMAL_OFFSET_C,
        ambient_hint_c: frame.ambient_hint_c(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n")
        .map_err(|source| SceneDataError::Io { path: side, source })
}
