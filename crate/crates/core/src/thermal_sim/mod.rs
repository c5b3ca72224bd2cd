//! Synthetic residual-heat scenarios.
//!
//! Contact heats a surface toward body temperature with a first-order
//! response; after contact the surface relaxes toward ambient with Newtonian
//! cooling. A sensor model downsamples, adds seeded Gaussian noise and
//! quantizes. RGB frames are flat-color composites with a person sprite shown
//! only while some contact is active.

mod config;

pub use config::{EventConfig, MaterialSpec, ObjectConfig, PersonConfig, SimConfig, PROTOCOL_DELAYS_S};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mask::{Mask, Rect};
use crate::metrics::{Joint, KeypointSet, LabelMap};
use crate::scene_data::{
    FrameAnnotations, PairedCapture, RgbFrame, ScenarioKind, ScenarioManifest, SceneDataError,
    ThermalFrame, BODY_TEMP_C, MAX_PLAUSIBLE_C, MIN_PLAUSIBLE_C,
};

/// Joint convention used for every keypoint file this crate writes.
pub const SKELETON_ID: &str = "coco17";

pub const COCO17_JOINTS: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid material {0}: {1}")]
    Material(String, String),
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error("{0}")]
    Scene(String),
    #[error("sensor {0}x{1} is larger than scene {2}x{3}")]
    SensorTooLarge(usize, usize, usize, usize),
    #[error("invalid delay {0}")]
    Delay(f64),
    #[error(transparent)]
    Data(#[from] SceneDataError),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Thermal response of a surface. Time constants are engineering choices,
/// not measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub tau_cool_s: f64,
    pub tau_heat_s: f64,
    /// Fraction of the body–ambient gap the surface reaches at equilibrium.
    pub coupling: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, tau_cool_s: f64, tau_heat_s: f64, coupling: f64) -> Result<Self> {
        let m = Material {
            name: name.into(),
            tau_cool_s,
            tau_heat_s,
            coupling,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::Material(self.name.clone(), msg.to_string()));
        if !(self.tau_cool_s > 0.0) || !self.tau_cool_s.is_finite() {
            return bad("tau_cool_s must be > 0");
        }
        if !(self.tau_heat_s > 0.0) || !self.tau_heat_s.is_finite() {
            return bad("tau_heat_s must be > 0");
        }
        if !(self.coupling > 0.0 && self.coupling <= 1.0) {
            return bad("coupling must be in (0, 1]");
        }
        Ok(())
    }

    pub fn upholstered_chair() -> Self {
        Material {
            name: "upholstered_chair".into(),
            tau_cool_s: 90.0,
            tau_heat_s: 20.0,
            coupling: 0.43,
        }
    }

    pub fn painted_wall() -> Self {
        Material {
            name: "painted_wall".into(),
            tau_cool_s: 150.0,
            tau_heat_s: 25.0,
            coupling: 0.35,
        }
    }

    pub fn book_cover() -> Self {
        Material {
            name: "book_cover".into(),
            tau_cool_s: 60.0,
            tau_heat_s: 15.0,
            coupling: 0.6,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "upholstered_chair" => Ok(Material::upholstered_chair()),
            "painted_wall" => Ok(Material::painted_wall()),
            "book_cover" => Ok(Material::book_cover()),
            other => Err(SimError::UnknownMaterial(other.to_string())),
        }
    }
}

/// Surface temperature after `contact_s` seconds of contact.
///
/// `ambient + coupling·(body − ambient)·(1 − e^(−contact/τ_heat))`
pub fn heat_deposition(material: &Material, ambient_c: f64, body_temp_c: f64, contact_s: f64) -> f64 {
    let contact_s = contact_s.max(0.0);
    ambient_c + material.coupling * (body_temp_c - ambient_c) * (1.0 - (-contact_s / material.tau_heat_s).exp())
}

/// Newtonian relaxation toward ambient: `ambient + (T0 − ambient)·e^(−t/τ_cool)`.
pub fn cooled_temperature(surface_temp_c: f64, ambient_c: f64, material: &Material, elapsed_s: f64) -> f64 {
    let elapsed_s = elapsed_s.max(0.0);
    ambient_c + (surface_temp_c - ambient_c) * (-elapsed_s / material.tau_cool_s).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactEvent {
    pub region: Mask,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub body_temp_c: f64,
}

impl ContactEvent {
    pub fn new(region: Mask, t_start_s: f64, t_end_s: f64) -> Result<Self> {
        Self::with_body_temp(region, t_start_s, t_end_s, BODY_TEMP_C)
    }

    pub fn with_body_temp(region: Mask, t_start_s: f64, t_end_s: f64, body_temp_c: f64) -> Result<Self> {
        if !(t_end_s > t_start_s) {
            return Err(SimError::Scene(format!(
                "contact must end after it starts ({t_start_s} .. {t_end_s})"
            )));
        }
        if region.is_empty() {
            return Err(SimError::Scene("contact region is empty".into()));
        }
        Ok(ContactEvent {
            region,
            t_start_s,
            t_end_s,
            body_temp_c,
        })
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.t_start_s && t <= self.t_end_s
    }

    pub fn duration_s(&self) -> f64 {
        self.t_end_s - self.t_start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub label: String,
    pub mask: Mask,
    pub material: Material,
    pub color: [u8; 3],
}

/// Flat-color person cut-out, pasted while contact is active.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonSprite {
    pub image: RgbFrame,
    pub mask: Mask,
    pub keypoints: KeypointSet,
}

impl PersonSprite {
    /// A stick-figure sprite filling `bbox`, with 17 keypoints inside it.
    pub fn stick_figure(width: usize, height: usize, bbox: Rect, color: [u8; 3]) -> Result<Self> {
        if Mask::from_rect(width, height, bbox).is_none() || bbox.w < 8 || bbox.h < 16 {
            return Err(SimError::Scene(format!("person box {bbox:?} does not fit the scene")));
        }
        let fx = |f: f64| bbox.x as f64 + f * bbox.w as f64;
        let fy = |f: f64| bbox.y as f64 + f * bbox.h as f64;
        // (fraction of width, fraction of height) per COCO joint
        let layout: [(f64, f64); 17] = [
            (0.50, 0.07),
            (0.45, 0.05),
            (0.55, 0.05),
            (0.40, 0.07),
            (0.60, 0.07),
            (0.25, 0.20),
            (0.75, 0.20),
            (0.15, 0.35),
            (0.85, 0.35),
            (0.12, 0.48),
            (0.88, 0.48),
            (0.35, 0.52),
            (0.65, 0.52),
            (0.35, 0.74),
            (0.65, 0.74),
            (0.35, 0.95),
            (0.65, 0.95),
        ];
        let joints = COCO17_JOINTS
            .iter()
            .zip(layout)
            .map(|(name, (ax, ay))| Joint {
                name: name.to_string(),
                x: fx(ax),
                y: fy(ay),
                confidence: 1.0,
            })
            .collect();
        let keypoints = KeypointSet::new(SKELETON_ID, joints).map_err(|e| SimError::Scene(e.to_string()))?;

        let parts = [
            (0.35, 0.00, 0.30, 0.14), // head
            (0.20, 0.14, 0.60, 0.40), // torso
            (0.05, 0.18, 0.15, 0.34), // left arm
            (0.80, 0.18, 0.15, 0.34), // right arm
            (0.25, 0.54, 0.20, 0.46), // left leg
            (0.55, 0.54, 0.20, 0.46), // right leg
        ];
        let mut mask = Mask::empty(width, height);
        for (px, py, pw, ph) in parts {
            let r = Rect::new(
                (fx(px)).floor() as usize,
                (fy(py)).floor() as usize,
                ((pw * bbox.w as f64).ceil() as usize).max(1),
                ((ph * bbox.h as f64).ceil() as usize).max(1),
            );
            let r = Rect::new(r.x, r.y, r.w.min(bbox.x + bbox.w - r.x), r.h.min(bbox.y + bbox.h - r.y));
            if let Some(part) = Mask::from_rect(width, height, r) {
                mask.union_with(&part);
            }
        }
        let image = RgbFrame::filled(width, height, color, 0.0)?;
        Ok(PersonSprite { image, mask, keypoints })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub ambient_c: f64,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObject>,
    pub base_rgb: RgbFrame,
    pub person: Option<PersonSprite>,
}

impl SimScene {
    pub fn validate(&self) -> Result<()> {
        if self.base_rgb.width() != self.width || self.base_rgb.height() != self.height {
            return Err(SimError::Scene("base image does not match scene size".into()));
        }
        let mut labels = std::collections::HashSet::new();
        for o in &self.objects {
            if o.mask.width() != self.width || o.mask.height() != self.height {
                return Err(SimError::Scene(format!("object {:?} mask is out of bounds", o.label)));
            }
            if !labels.insert(o.label.as_str()) || o.label == "background" || o.label == "person" {
                return Err(SimError::Scene(format!("duplicate or reserved label {:?}", o.label)));
            }
            o.material.validate()?;
        }
        if let Some(p) = &self.person {
            if p.mask.width() != self.width || p.mask.height() != self.height || !p.image.same_dimensions(&self.base_rgb) {
                return Err(SimError::Scene("person sprite does not match scene size".into()));
            }
        }
        Ok(())
    }

    /// Index of the topmost object at each cell (later objects cover earlier ones).
    fn object_index(&self) -> Vec<Option<usize>> {
        let mut idx = vec![None; self.width * self.height];
        for (i, o) in self.objects.iter().enumerate() {
            for (cell, &on) in idx.iter_mut().zip(o.mask.bits()) {
                if on {
                    *cell = Some(i);
                }
            }
        }
        idx
    }

    pub fn label_table(&self) -> std::collections::BTreeMap<u8, String> {
        let mut names = std::collections::BTreeMap::new();
        names.insert(0, "background".to_string());
        for (i, o) in self.objects.iter().enumerate() {
            names.insert((i + 1) as u8, o.label.clone());
        }
        names.insert(self.person_label_id(), "person".to_string());
        names
    }

    pub fn person_label_id(&self) -> u8 {
        (self.objects.len() + 1) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub out_w: usize,
    pub out_h: usize,
    pub noise_sigma_c: f64,
    pub quant_step_c: f64,
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            out_w: 80,
            out_h: 60,
            noise_sigma_c: 0.15,
            quant_step_c: 0.1,
            seed: 0,
        }
    }
}

impl SensorModel {
    pub fn noiseless(self) -> Self {
        SensorModel {
            noise_sigma_c: 0.0,
            ..self
        }
    }

    fn for_frame(self, index: usize) -> Self {
        SensorModel {
            seed: self
                .seed
                .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)),
            ..self
        }
    }
}

/// Source indices and overlap weights covered by each output cell.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * ratio;
            let hi = (o + 1) as f64 * ratio;
            (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .filter_map(|i| {
                    let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average downsample, seeded Gaussian noise, then quantization.
pub fn render_thermal_sensor(scene_temps: &ThermalFrame, sensor: &SensorModel) -> Result<ThermalFrame> {
    let (sw, sh) = (scene_temps.width(), scene_temps.height());
    if sensor.out_w == 0 || sensor.out_h == 0 || sensor.out_w > sw || sensor.out_h > sh {
        return Err(SimError::SensorTooLarge(sensor.out_w, sensor.out_h, sw, sh));
    }
    if !(sensor.noise_sigma_c >= 0.0) || !(sensor.quant_step_c >= 0.0) {
        return Err(SimError::Scene("sensor noise and quantization must be >= 0".into()));
    }
    let wx = box_weights(sw, sensor.out_w);
    let wy = box_weights(sh, sensor.out_h);
    let mut rng = ChaCha8Rng::seed_from_u64(sensor.seed);
    let noise = (sensor.noise_sigma_c > 0.0)
        .then(|| Normal::new(0.0, sensor.noise_sigma_c).expect("sigma is finite and positive"));
    let mut out = Vec::with_capacity(sensor.out_w * sensor.out_h);
    for ys in &wy {
        for xs in &wx {
            let mut acc = 0.0;
            let mut area = 0.0;
            for &(y, wy) in ys {
                for &(x, wx) in xs {
                    acc += wx * wy * scene_temps.temp(x, y);
                    area += wx * wy;
                }
            }
            let mut v = acc / area;
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            if sensor.quant_step_c > 0.0 {
                v = (v / sensor.quant_step_c).round() / sensor.quant_step_c.recip();
            }
            out.push(v.clamp(MIN_PLAUSIBLE_C, MAX_PLAUSIBLE_C));
        }
    }
    Ok(ThermalFrame::new(sensor.out_w, sensor.out_h, out, scene_temps.capture_time_s())?)
}

/// Temperature of the scene grid at time `t_s` (0 = end of the reference contact).
pub fn scene_temperatures(scene: &SimScene, events: &[ContactEvent], t_s: f64) -> Result<ThermalFrame> {
    let objects = scene.object_index();
    let ambient = scene.ambient_c;
    let mut temps = vec![ambient; scene.width * scene.height];
    for ev in events {
        for (cell, t) in temps.iter_mut().enumerate() {
            if !ev.region.bits()[cell] {
                continue;
            }
            let Some(obj) = objects[cell] else { continue };
            let material = &scene.objects[obj].material;
            let surface = if t_s < ev.t_start_s {
                ambient
            } else if t_s <= ev.t_end_s {
                heat_deposition(material, ambient, ev.body_temp_c, t_s - ev.t_start_s)
            } else {
                let peak = heat_deposition(material, ambient, ev.body_temp_c, ev.duration_s());
                cooled_temperature(peak, ambient, material, t_s - ev.t_end_s)
            };
            if (surface - ambient).abs() > (*t - ambient).abs() {
                *t = surface;
            }
        }
    }
    if let (Some(person), Some(body)) = (
        &scene.person,
        events
            .iter()
            .filter(|e| e.active_at(t_s))
            .map(|e| e.body_temp_c)
            .reduce(f64::max),
    ) {
        for (t, &on) in temps.iter_mut().zip(person.mask.bits()) {
            if on {
                *t = body;
            }
        }
    }
    Ok(ThermalFrame::new(scene.width, scene.height, temps, t_s)?.with_ambient_hint(Some(ambient)))
}

fn compose_frame(scene: &SimScene, person_visible: bool, t_s: f64) -> Result<(RgbFrame, FrameAnnotations)> {
    let mut pixels = scene.base_rgb.pixels().to_vec();
    let mut labels = vec![0u8; scene.width * scene.height];
    for (i, o) in scene.objects.iter().enumerate() {
        for (cell, &on) in o.mask.bits().iter().enumerate() {
            if on {
                pixels[cell * 3..cell * 3 + 3].copy_from_slice(&o.color);
                labels[cell] = (i + 1) as u8;
            }
        }
    }
    let mut keypoints = KeypointSet {
        skeleton_id: SKELETON_ID.to_string(),
        joints: Vec::new(),
        no_detection: true,
    };
    if let (true, Some(p)) = (person_visible, &scene.person) {
        let sprite = p.image.pixels();
        for (cell, &on) in p.mask.bits().iter().enumerate() {
            if on {
                pixels[cell * 3..cell * 3 + 3].copy_from_slice(&sprite[cell * 3..cell * 3 + 3]);
                labels[cell] = scene.person_label_id();
            }
        }
        keypoints = p.keypoints.clone();
    }
    let rgb = RgbFrame::new(scene.width, scene.height, pixels, t_s)?;
    let labels = LabelMap::new(scene.width, scene.height, labels, scene.label_table())
        .map_err(|e| SimError::Scene(e.to_string()))?;
    Ok((
        rgb,
        FrameAnnotations {
            keypoints: Some(keypoints),
            labels: Some(labels),
        },
    ))
}

/// Renders one capture per delay; delay 0 (always included) is the ground truth.
pub fn generate_scenario_sequence(
    scene: &SimScene,
    events: &[ContactEvent],
    sensor: &SensorModel,
    snapshot_delays_s: &[f64],
) -> Result<ScenarioManifest> {
    scene.validate()?;
    for ev in events {
        if ev.region.width() != scene.width || ev.region.height() != scene.height {
            return Err(SimError::Scene("contact region lies outside the scene".into()));
        }
    }
    let mut delays: Vec<f64> = snapshot_delays_s.to_vec();
    if let Some(&d) = delays.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(SimError::Delay(d));
    }
    if !delays.contains(&0.0) {
        delays.push(0.0);
    }
    delays.sort_by(f64::total_cmp);
    delays.dedup();

    let captures = delays
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let person_visible = events.iter().any(|e| e.active_at(t));
            let temps = scene_temperatures(scene, events, t)?;
            let thermal = render_thermal_sensor(&temps, &sensor.for_frame(i))?
                .with_capture_time(t)
                .with_ambient_hint(Some(scene.ambient_c));
            let (rgb, annotations) = compose_frame(scene, person_visible, t)?;
            Ok(PairedCapture::new(rgb, thermal, t, scene.scenario_id.clone())?.with_annotations(Some(annotations)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut iter = captures.into_iter();
    let ground_truth = iter.next().expect("delay 0 is always present");
    let contact = match (
        events.iter().map(|e| e.t_start_s).reduce(f64::min),
        events.iter().map(|e| e.t_end_s).reduce(f64::max),
    ) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    Ok(ScenarioManifest::new(
        scene.scenario_id.clone(),
        scene.kind,
        contact,
        ground_truth,
        iter.collect(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn euler_cool(t0: f64, amb: f64, tau: f64, t_end: f64, dt: f64) -> f64 {
        let steps = (t_end / dt).round() as usize;
        let mut t = t0;
        for _ in 0..steps {
            t += -(t - amb) / tau * dt;
        }
        t
    }

    fn euler_heat(m: &Material, amb: f64, body: f64, contact: f64, dt: f64) -> f64 {
        let target = amb + m.coupling * (body - amb);
        let steps = (contact / dt).round() as usize;
        let mut t = amb;
        for _ in 0..steps {
            t += (target - t) / m.tau_heat_s * dt;
        }
        t
    }

    #[test]
    fn deposition_examples() {
        let m = Material::new("x", 60.0, 20.0, 0.8).unwrap();
        assert_eq!(heat_deposition(&m, 22.0, 37.0, 0.0), 22.0);
        let full = Material::new("x", 60.0, 20.0, 1.0).unwrap();
        assert!((heat_deposition(&full, 22.0, 37.0, 1e6) - 37.0).abs() < 1e-9);
        let v = heat_deposition(&m, 22.0, 37.0, 30.0);
        assert!((v - 31.323).abs() < 1e-3, "{v}");
        let euler = euler_heat(&m, 22.0, 37.0, 30.0, 1e-3);
        assert!((v - euler).abs() < 1e-3, "{v} vs {euler}");
    }

    #[test]
    fn cooling_examples() {
        let m = Material::new("x", 60.0, 20.0, 0.8).unwrap();
        assert_eq!(cooled_temperature(30.0, 22.0, &m, 0.0), 30.0);
        assert!((cooled_temperature(30.0, 22.0, &m, 60.0) - 24.943).abs() < 1e-3);
        let m90 = Material::new("x", 90.0, 20.0, 0.8).unwrap();
        let frac = (cooled_temperature(30.0, 22.0, &m90, 120.0) - 22.0) / 8.0;
        assert!((frac - 0.2636).abs() < 1e-4);
    }

    #[test]
    fn invalid_materials() {
        assert!(Material::new("x", 0.0, 1.0, 0.5).is_err());
        assert!(Material::new("x", 1.0, 1.0, 0.0).is_err());
        assert!(Material::new("x", 1.0, 1.0, 1.1).is_err());
        assert!(matches!(Material::by_name("glass"), Err(SimError::UnknownMaterial(_))));
    }

    #[test]
    fn sensor_constant_noiseless() {
        let scene = ThermalFrame::uniform(160, 120, 22.0, 0.0).unwrap();
        let s = SensorModel::default().noiseless();
        let out = render_thermal_sensor(&scene, &s).unwrap();
        assert_eq!((out.width(), out.height()), (80, 60));
        assert!(out.temps().iter().all(|&t| t == 22.0));
    }

    #[test]
    fn sensor_deterministic_per_seed() {
        let scene = ThermalFrame::uniform(160, 120, 22.0, 0.0).unwrap();
        let s = SensorModel {
            seed: 42,
            ..SensorModel::default()
        };
        let a = render_thermal_sensor(&scene, &s).unwrap();
        let b = render_thermal_sensor(&scene, &s).unwrap();
        assert_eq!(a.temps(), b.temps());
        let c = render_thermal_sensor(&scene, &SensorModel { seed: 43, ..s }).unwrap();
        assert_ne!(a.temps(), c.temps());
    }

    #[test]
    fn sensor_hot_block_area_average() {
        let mut temps = vec![22.0; 160 * 120];
        for y in 10..12 {
            for x in 20..22 {
                temps[y * 160 + x] = 30.0;
            }
        }
        let scene = ThermalFrame::new(160, 120, temps, 0.0).unwrap();
        let out = render_thermal_sensor(&scene, &SensorModel::default().noiseless()).unwrap();
        let hot: Vec<(usize, usize)> = (0..60)
            .flat_map(|y| (0..80).map(move |x| (x, y)))
            .filter(|&(x, y)| out.temp(x, y) != 22.0)
            .collect();
        assert_eq!(hot, vec![(10, 5)]);
        assert_eq!(out.temp(10, 5), 30.0);
        assert_eq!(out.temp(9, 5), 22.0);
    }

    #[test]
    fn sensor_larger_than_scene_rejected() {
        let scene = ThermalFrame::uniform(40, 30, 22.0, 0.0).unwrap();
        assert!(matches!(
            render_thermal_sensor(&scene, &SensorModel::default()),
            Err(SimError::SensorTooLarge(..))
        ));
    }

    #[test]
    fn non_integer_ratio_preserves_constant() {
        let scene = ThermalFrame::uniform(100, 70, 25.0, 0.0).unwrap();
        let s = SensorModel {
            out_w: 30,
            out_h: 21,
            quant_step_c: 0.0,
            ..SensorModel::default().noiseless()
        };
        let out = render_thermal_sensor(&scene, &s).unwrap();
        assert!(out.temps().iter().all(|&t| (t - 25.0).abs() < 1e-12));
    }

    fn two_object_scene() -> (SimScene, Vec<ContactEvent>) {
        let (w, h) = (160, 120);
        let seat = Rect::new(20, 60, 40, 16);
        let book = Rect::new(100, 60, 24, 16);
        let scene = SimScene {
            scenario_id: "two".into(),
            kind: ScenarioKind::SitChair,
            ambient_c: 22.0,
            width: w,
            height: h,
            objects: vec![
                SceneObject {
                    label: "chair_seat".into(),
                    mask: Mask::from_rect(w, h, seat).unwrap(),
                    material: Material::upholstered_chair(),
                    color: [120, 30, 30],
                },
                SceneObject {
                    label: "book".into(),
                    mask: Mask::from_rect(w, h, book).unwrap(),
                    material: Material::book_cover(),
                    color: [30, 30, 160],
                },
            ],
            base_rgb: RgbFrame::filled(w, h, [200, 200, 190], 0.0).unwrap(),
            person: Some(PersonSprite::stick_figure(w, h, Rect::new(60, 10, 40, 100), [230, 180, 150]).unwrap()),
        };
        let events = vec![
            ContactEvent::new(Mask::from_rect(w, h, seat).unwrap(), -30.0, 0.0).unwrap(),
            ContactEvent::new(Mask::from_rect(w, h, book).unwrap(), -30.0, 0.0).unwrap(),
        ];
        (scene, events)
    }

    #[test]
    fn protocol_sequence_shape() {
        let (scene, events) = two_object_scene();
        let m = generate_scenario_sequence(&scene, &events, &SensorModel::default(), &[0.0, 5.0, 15.0, 30.0, 120.0]).unwrap();
        assert_eq!(m.observations().len(), 4);
        assert_eq!(m.contact_duration_s(), 30.0);
        let person = scene.person_label_id();
        let has_person = |c: &PairedCapture| c.annotations().unwrap().labels.as_ref().unwrap().labels().contains(&person);
        assert!(has_person(m.ground_truth()));
        assert!(!m.ground_truth().annotations().unwrap().keypoints.as_ref().unwrap().joints.is_empty());
        for o in m.observations() {
            assert!(!has_person(o));
            assert!(o.annotations().unwrap().keypoints.as_ref().unwrap().no_detection);
            assert_ne!(o.rgb(), m.ground_truth().rgb());
        }
    }

    #[test]
    fn no_contact_is_ambient() {
        let (scene, _) = two_object_scene();
        let m = generate_scenario_sequence(&scene, &[], &SensorModel::default().noiseless(), &[0.0, 5.0]).unwrap();
        for c in std::iter::once(m.ground_truth()).chain(m.observations()) {
            assert!(c.thermal().temps().iter().all(|&t| t == 22.0));
        }
        let noisy = generate_scenario_sequence(&scene, &[], &SensorModel::default(), &[0.0, 5.0]).unwrap();
        let o = &noisy.observations()[0];
        assert!(o.thermal().temps().iter().all(|&t| (t - 22.0).abs() < 1.5));
    }

    #[test]
    fn material_ratio_matches_closed_form() {
        let (scene, events) = two_object_scene();
        let m = generate_scenario_sequence(&scene, &events, &SensorModel { quant_step_c: 0.0, ..SensorModel::default().noiseless() }, &[5.0]).unwrap();
        let th = m.observations()[0].thermal();
        // sensor cells lying fully inside each region (scene → sensor is 2x)
        let chair_dt = th.temp(15, 34) - 22.0;
        let book_dt = th.temp(55, 34) - 22.0;
        let closed = |mat: &Material| {
            cooled_temperature(heat_deposition(mat, 22.0, 37.0, 30.0), 22.0, mat, 5.0) - 22.0
        };
        let expected = closed(&Material::book_cover()) / closed(&Material::upholstered_chair());
        assert!((book_dt / chair_dt - expected).abs() < 1e-9);
    }

    #[test]
    fn identical_seeds_identical_manifests() {
        let (scene, events) = two_object_scene();
        let s = SensorModel { seed: 9, ..SensorModel::default() };
        let a = generate_scenario_sequence(&scene, &events, &s, &[0.0, 5.0, 30.0]).unwrap();
        let b = generate_scenario_sequence(&scene, &events, &s, &[0.0, 5.0, 30.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_scene_event_rejected() {
        let (scene, _) = two_object_scene();
        let ev = ContactEvent::new(Mask::from_rect(10, 10, Rect::new(0, 0, 2, 2)).unwrap(), -1.0, 0.0).unwrap();
        assert!(generate_scenario_sequence(&scene, &[ev], &SensorModel::default(), &[0.0]).is_err());
    }

    #[test]
    fn monotone_fade_every_cell() {
        let (scene, events) = two_object_scene();
        let m = generate_scenario_sequence(&scene, &events, &SensorModel::default().noiseless(), &[0.0, 5.0, 15.0, 30.0, 120.0, 300.0]).unwrap();
        let frames: Vec<_> = std::iter::once(m.ground_truth()).chain(m.observations()).collect();
        for pair in frames.windows(2) {
            for (a, b) in pair[0].thermal().temps().iter().zip(pair[1].thermal().temps()) {
                assert!((b - 22.0).abs() <= (a - 22.0).abs());
            }
        }
    }

    proptest! {
        #[test]
        fn deposition_monotone(
            tau in 1.0f64..200.0, c1 in 0.01f64..1.0, c2 in 0.01f64..1.0,
            t1 in 0.0f64..300.0, t2 in 0.0f64..300.0, amb in 10.0f64..30.0,
        ) {
            let lo = Material::new("a", 60.0, tau, c1.min(c2)).unwrap();
            let hi = Material::new("b", 60.0, tau, c1.max(c2)).unwrap();
            let (s, l) = (t1.min(t2), t1.max(t2));
            prop_assert!(heat_deposition(&lo, amb, 37.0, s) <= heat_deposition(&lo, amb, 37.0, l));
            prop_assert!(heat_deposition(&lo, amb, 37.0, l) <= heat_deposition(&hi, amb, 37.0, l));
            prop_assert!(heat_deposition(&hi, amb, 37.0, l) <= amb + hi.coupling * (37.0 - amb) + 1e-12);
        }

        #[test]
        fn cooling_never_crosses_ambient(t0 in -10.0f64..60.0, amb in 10.0f64..30.0, tau in 1.0f64..300.0, t in 0.0f64..1000.0) {
            let m = Material::new("m", tau, 10.0, 0.5).unwrap();
            let v = cooled_temperature(t0, amb, &m, t);
            prop_assert!((v - amb).abs() <= (t0 - amb).abs());
            prop_assert!((v - amb) * (t0 - amb) >= 0.0);
        }
    }

    #[test]
    fn cooling_matches_forward_euler() {
        let m = Material::upholstered_chair();
        for t in [1.0, 30.0, 120.0, 300.0] {
            let closed = cooled_temperature(31.0, 22.0, &m, t);
            let euler = euler_cool(31.0, 22.0, m.tau_cool_s, t, 1e-3);
            assert!((closed - euler).abs() < 1e-4, "t={t}: {closed} vs {euler}");
        }
    }
}
