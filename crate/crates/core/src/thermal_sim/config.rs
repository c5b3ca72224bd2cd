//! JSON simulator configuration and the three built-in scenario presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    generate_scenario_sequence, ContactEvent, Material, PersonSprite, Result, SceneObject,
    SensorModel, SimError, SimScene,
};
use crate::mask::{Mask, Rect};
use crate::scene_data::{RgbFrame, ScenarioKind, ScenarioManifest, BODY_TEMP_C};

/// Either a built-in material name or a full definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSpec {
    Named(String),
    Custom(Material),
}

impl MaterialSpec {
    pub fn resolve(&self) -> Result<Material> {
        match self {
            MaterialSpec::Named(n) => Material::by_name(n),
            MaterialSpec::Custom(m) => {
                m.validate()?;
                Ok(m.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub label: String,
    pub material: MaterialSpec,
    pub rect: Rect,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonConfig {
    pub rect: Rect,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub rect: Rect,
    pub t_start_s: f64,
    pub t_end_s: f64,
    #[serde(default = "default_body_temp")]
    pub body_temp_c: f64,
}

fn default_body_temp() -> f64 {
    BODY_TEMP_C
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub ambient_c: f64,
    pub width: usize,
    pub height: usize,
    pub background_rgb: [u8; 3],
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub person: Option<PersonConfig>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub sensor: SensorModel,
    pub delays_s: Vec<f64>,
}

pub const PROTOCOL_DELAYS_S: [f64; 5] = [0.0, 5.0, 15.0, 30.0, 120.0];

impl SimConfig {
    pub fn from_path(path: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Built-in 320x240 scene with an 80x60 sensor and 30 s of contact ending at t = 0.
    pub fn preset(kind: ScenarioKind, seed: u64) -> Self {
        let sensor = SensorModel {
            seed,
            ..SensorModel::default()
        };
        let obj = |label: &str, material: &str, rect: Rect, color: [u8; 3]| ObjectConfig {
            label: label.into(),
            material: MaterialSpec::Named(material.into()),
            rect,
            color,
        };
        let contact = |rect: Rect| EventConfig {
            rect,
            t_start_s: -30.0,
            t_end_s: 0.0,
            body_temp_c: BODY_TEMP_C,
        };
        let (objects, person, events) = match kind {
            ScenarioKind::SitChair => (
                vec![
                    obj("wall", "painted_wall", Rect::new(0, 0, 320, 128), [214, 206, 188]),
                    obj("chair_back", "upholstered_chair", Rect::new(124, 72, 72, 72), [128, 36, 40]),
                    obj("chair_seat", "upholstered_chair", Rect::new(120, 144, 80, 24), [150, 44, 48]),
                ],
                PersonConfig {
                    rect: Rect::new(128, 40, 64, 160),
                    color: [222, 170, 140],
                },
                vec![contact(Rect::new(120, 144, 80, 24))],
            ),
            ScenarioKind::LeanWall => (
                vec![
                    obj("wall", "painted_wall", Rect::new(0, 0, 320, 160), [200, 210, 220]),
                    obj("shelf", "book_cover", Rect::new(20, 100, 60, 12), [90, 60, 30]),
                ],
                PersonConfig {
                    rect: Rect::new(136, 24, 56, 200),
                    color: [210, 160, 130],
                },
                vec![contact(Rect::new(140, 60, 40, 80))],
            ),
            ScenarioKind::TouchObject => (
                vec![
                    obj("wall", "painted_wall", Rect::new(0, 0, 320, 128), [220, 214, 200]),
                    obj("table", "painted_wall", Rect::new(160, 148, 140, 20), [110, 80, 50]),
                    obj("book", "book_cover", Rect::new(200, 120, 40, 28), [30, 70, 150]),
                ],
                PersonConfig {
                    rect: Rect::new(96, 24, 64, 192),
                    color: [215, 165, 135],
                },
                vec![contact(Rect::new(200, 120, 40, 28))],
            ),
        };
        SimConfig {
            scenario_id: format!("{}-{seed}", kind.as_str()),
            kind,
            ambient_c: 22.0,
            width: 320,
            height: 240,
            background_rgb: [160, 160, 150],
            objects,
            person: Some(person),
            events,
            sensor,
            delays_s: PROTOCOL_DELAYS_S.to_vec(),
        }
    }

    pub fn build(&self) -> Result<(SimScene, Vec<ContactEvent>)> {
        let (w, h) = (self.width, self.height);
        let rect_mask = |r: Rect, what: &str| {
            Mask::from_rect(w, h, r).ok_or_else(|| SimError::Scene(format!("{what} {r:?} lies outside the {w}x{h} scene")))
        };
        let objects = self
            .objects
            .iter()
            .map(|o| {
                Ok(SceneObject {
                    label: o.label.clone(),
                    mask: rect_mask(o.rect, &format!("object {:?}", o.label))?,
                    material: o.material.resolve()?,
                    color: o.color,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let person = self
            .person
            .as_ref()
            .map(|p| PersonSprite::stick_figure(w, h, p.rect, p.color))
            .transpose()?;
        let events = self
            .events
            .iter()
            .map(|e| ContactEvent::with_body_temp(rect_mask(e.rect, "event")?, e.t_start_s, e.t_end_s, e.body_temp_c))
            .collect::<Result<Vec<_>>>()?;
        let scene = SimScene {
            scenario_id: self.scenario_id.clone(),
            kind: self.kind,
            ambient_c: self.ambient_c,
            width: w,
            height: h,
            objects,
            base_rgb: RgbFrame::filled(w, h, self.background_rgb, 0.0)?,
            person,
        };
        scene.validate()?;
        Ok((scene, events))
    }

    pub fn generate(&self) -> Result<ScenarioManifest> {
        let (scene, events) = self.build()?;
        generate_scenario_sequence(&scene, &events, &self.sensor, &self.delays_s)
    }

    /// Union of all contact regions at scene resolution.
    pub fn contact_mask(&self) -> Result<Mask> {
        let mut m = Mask::empty(self.width, self.height);
        for e in &self.events {
            let r = Mask::from_rect(self.width, self.height, e.rect)
                .ok_or_else(|| SimError::Scene(format!("event {:?} outside scene", e.rect)))?;
            m.union_with(&r);
        }
        Ok(m)
    }
}
