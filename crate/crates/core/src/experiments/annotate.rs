//! Sources of keypoints and label maps for reconstructed frames.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;

use crate::metrics::{load_keypoints, load_label_map};
use crate::scene_data::{write_rgb_png, FrameAnnotations, RgbFrame, ScenarioManifest};
use crate::vlm_pipeline::frame_hash;

/// Produces pose keypoints and/or a label map for an image.
pub trait Annotator: Send + Sync {
    fn annotate(&self, image: &RgbFrame) -> Option<FrameAnnotations>;
}

/// Looks images up by content hash among frames whose annotations are known.
///
/// Bit-exact reconstructions of a known frame inherit its annotations; any
/// other image gets none, so MPJPE and OA are reported as absent.
#[derive(Debug, Default, Clone)]
pub struct FixtureAnnotator {
    table: HashMap<String, FrameAnnotations>,
}

impl FixtureAnnotator {
    pub fn from_manifests(manifests: &[ScenarioManifest]) -> Self {
        let mut a = FixtureAnnotator::default();
        for m in manifests {
            for c in std::iter::once(m.ground_truth()).chain(m.observations()) {
                if let Some(ann) = c.annotations() {
                    a.insert(c.rgb(), ann.clone());
                }
            }
        }
        a
    }

    pub fn insert(&mut self, image: &RgbFrame, annotations: FrameAnnotations) {
        self.table.insert(frame_hash(image), annotations);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Annotator for FixtureAnnotator {
    fn annotate(&self, image: &RgbFrame) -> Option<FrameAnnotations> {
        self.table.get(&frame_hash(image)).cloned()
    }
}

/// Runs an external adapter program.
///
/// `<program> pose --in <img>.png --out <dir>` must write `<dir>/<stem>.keypoints.json`;
/// `<program> segment --in <img>.png --out <dir>` must write `<dir>/<stem>.labels.png`
/// with its `<stem>.labels.json` class table. Failures are logged and yield
/// no annotation.
#[derive(Debug, Clone)]
pub struct CommandAnnotator {
    pub program: PathBuf,
    pub work_dir: PathBuf,
}

impl CommandAnnotator {
    fn run(&self, verb: &str, input: &std::path::Path) -> bool {
        match Command::new(&self.program)
            .arg(verb)
            .arg("--in")
            .arg(input)
            .arg("--out")
            .arg(&self.work_dir)
            .status()
        {
            Ok(s) if s.success() => true,
            Ok(s) => {
                log::warn!("{} {verb} exited with {s}", self.program.display());
                false
            }
            Err(e) => {
                log::warn!("cannot run {}: {e}", self.program.display());
                false
            }
        }
    }
}

impl Annotator for CommandAnnotator {
    fn annotate(&self, image: &RgbFrame) -> Option<FrameAnnotations> {
        std::fs::create_dir_all(&self.work_dir).ok()?;
        let stem = frame_hash(image);
        let input = self.work_dir.join(format!("{stem}.png"));
        if let Err(e) = write_rgb_png(image, &input) {
            log::warn!("annotator input: {e}");
            return None;
        }
        let keypoints = self
            .run("pose", &input)
            .then(|| load_keypoints(&self.work_dir.join(format!("{stem}.keypoints.json"))))
            .and_then(|r| r.map_err(|e| log::warn!("adapter keypoints: {e}")).ok());
        let labels = self
            .run("segment", &input)
            .then(|| load_label_map(&self.work_dir.join(format!("{stem}.labels.png"))))
            .and_then(|r| r.map_err(|e| log::warn!("adapter labels: {e}")).ok());
        (keypoints.is_some() || labels.is_some()).then_some(FrameAnnotations { keypoints, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_data::ScenarioKind;
    use crate::thermal_sim::SimConfig;

    #[test]
    fn fixture_annotator_knows_ground_truth() {
        let m = SimConfig::preset(ScenarioKind::SitChair, 0).generate().unwrap();
        let a = FixtureAnnotator::from_manifests(std::slice::from_ref(&m));
        let ann = a.annotate(m.ground_truth().rgb()).unwrap();
        assert_eq!(ann.keypoints.unwrap().joints.len(), 17);
        assert!(a.annotate(&RgbFrame::filled(3, 3, [0, 0, 0], 0.0).unwrap()).is_none());
    }

    #[cfg(unix)]
    #[test]
    fn command_annotator_reads_adapter_output() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/adapters");
        let script = dir.path().join("adapter.sh");
        std::fs::write(
            &script,
            format!(
                "#!/bin/sh\nstem=$(basename \"$3\" .png)\nif [ \"$1\" = pose ]; then cp {kp} \"$5/$stem.keypoints.json\"; else cp {lp} \"$5/$stem.labels.png\"; cp {lj} \"$5/$stem.labels.json\"; fi\n",
                kp = fixtures.join("sit_pose.keypoints.json").display(),
                lp = fixtures.join("sit_scene.labels.png").display(),
                lj = fixtures.join("sit_scene.labels.json").display(),
            ),
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let a = CommandAnnotator {
            program: script,
            work_dir: dir.path().join("work"),
        };
        let ann = a.annotate(&RgbFrame::filled(320, 240, [1, 2, 3], 0.0).unwrap()).unwrap();
        assert_eq!(ann.keypoints.unwrap().joints.len(), 17);
        assert_eq!(ann.labels.unwrap().width(), 320);
    }

    #[test]
    fn missing_program_gives_none() {
        let dir = tempfile::tempdir().unwrap();
        let a = CommandAnnotator {
            program: dir.path().join("does-not-exist"),
            work_dir: dir.path().to_path_buf(),
        };
        assert!(a.annotate(&RgbFrame::filled(2, 2, [0, 0, 0], 0.0).unwrap()).is_none());
    }
}
