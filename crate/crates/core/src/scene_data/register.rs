use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use super::{Result, RgbFrame, SceneDataError, ThermalFrame};

/// Affine correction between the thermal and RGB fields of view.
///
/// `scale` > 1 means the RGB frame covers a smaller field than the thermal
/// sensor, so the thermal grid is cropped around its center. Offsets are in
/// thermal pixels and shift the sampling window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams {
            scale_x: 1.0,
            scale_y: 1.0,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }
}

impl AlignmentParams {
    fn validate(&self) -> Result<()> {
        for (name, s) in [("scale_x", self.scale_x), ("scale_y", self.scale_y)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(SceneDataError::DegenerateAlignment(format!(
                    "{name} = {s} is not invertible"
                )));
            }
        }
        if !self.offset_x.is_finite() || !self.offset_y.is_finite() {
            return Err(SceneDataError::DegenerateAlignment("offsets must be finite".into()));
        }
        Ok(())
    }
}

/// Per-axis source sample positions: (lower index, upper index, upper weight).
fn sample_axis(src_len: usize, dst_len: usize, scale: f64, offset: f64) -> Vec<(usize, usize, f64)> {
    let center = (src_len as f64 - 1.0) / 2.0;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let base = (d as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
            let s = ((base - center) / scale + center + offset).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Resamples a thermal grid onto the RGB pixel lattice with bilinear interpolation.
pub fn register_thermal(
    thermal: &ThermalFrame,
    target_w: usize,
    target_h: usize,
    alignment: AlignmentParams,
) -> Result<ThermalFrame> {
    alignment.validate()?;
    if target_w < thermal.width() || target_h < thermal.height() {
        return Err(SceneDataError::invalid(
            "target",
            format!(
                "target {}x{} is smaller than source {}x{}",
                target_w,
                target_h,
                thermal.width(),
                thermal.height()
            ),
        ));
    }
    let xs = sample_axis(thermal.width(), target_w, alignment.scale_x, alignment.offset_x);
    let ys = sample_axis(thermal.height(), target_h, alignment.scale_y, alignment.offset_y);
    let mut out = Vec::with_capacity(target_w * target_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = lerp(thermal.temp(x0, y0), thermal.temp(x1, y0), fx);
            let bottom = lerp(thermal.temp(x0, y1), thermal.temp(x1, y1), fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    Ok(ThermalFrame::new(target_w, target_h, out, thermal.capture_time_s())?
        .with_ambient_hint(thermal.ambient_hint_c()))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// A unitless grid with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedThermal {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl NormalizedThermal {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(SceneDataError::invalid(
                "normalized",
                format!("buffer length {} does not match {}x{}", values.len(), width, height),
            ));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SceneDataError::invalid(
                format!("normalized[{i}]"),
                format!("{v} is outside [0, 1]"),
            ));
        }
        Ok(NormalizedThermal {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Maps temperatures to `clamp((T - ambient) / (ref_max - ambient), 0, 1)`.
pub fn normalize_thermal(
    thermal: &ThermalFrame,
    ambient_c: f64,
    ref_max_c: f64,
) -> Result<NormalizedThermal> {
    if !(ref_max_c > ambient_c) || !ambient_c.is_finite() || !ref_max_c.is_finite() {
        return Err(SceneDataError::invalid(
            "ref_max_c",
            format!("reference maximum {ref_max_c} must exceed ambient {ambient_c}"),
        ));
    }
    let span = ref_max_c - ambient_c;
    let values = thermal
        .temps()
        .iter()
        .map(|t| ((t - ambient_c) / span).clamp(0.0, 1.0))
        .collect();
    NormalizedThermal::new(thermal.width(), thermal.height(), values)
}

/// 256-entry dark-to-bright heat ramp: red rises first, then green, then blue.
///
/// Every step raises at least one channel and lowers none, so BT.601
/// luminance is strictly increasing along the ramp.
pub static PSEUDOCOLOR_RAMP: LazyLock<[[u8; 3]; 256]> = LazyLock::new(|| {
    let mut ramp = [[0u8; 3]; 256];
    for (i, entry) in ramp.iter_mut().enumerate() {
        let t = i as i32 * 3;
        *entry = [
            t.clamp(0, 255) as u8,
            (t - 255).clamp(0, 255) as u8,
            (t - 510).clamp(0, 255) as u8,
        ];
    }
    ramp
});

/// Renders a normalized grid as an RGB image using [`PSEUDOCOLOR_RAMP`].
pub fn thermal_to_pseudocolor(norm: &NormalizedThermal) -> Result<RgbFrame> {
    let mut pixels = Vec::with_capacity(norm.values.len() * 3);
    for (i, &v) in norm.values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(SceneDataError::invalid(
                format!("normalized[{i}]"),
                format!("{v} is outside [0, 1]"),
            ));
        }
        let idx = (v * 255.0).round() as usize;
        pixels.extend_from_slice(&PSEUDOCOLOR_RAMP[idx]);
    }
    RgbFrame::new(norm.width, norm.height, pixels, 0.0)
}
