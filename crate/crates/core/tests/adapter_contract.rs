//! Pose and segmentation adapter outputs: schema checks and metric compatibility.

use std::path::{Path, PathBuf};

use chronolens::metrics::{load_keypoints, load_label_map, mpjpe, overall_accuracy, save_keypoints, DEFAULT_MIN_CONF};
use chronolens::thermal_sim::SimConfig;
use chronolens::ScenarioKind;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/adapters").join(name)
}

#[test]
fn pose_fixture_matches_schema() {
    let kp = load_keypoints(&fixture("sit_pose.keypoints.json")).unwrap();
    assert_eq!(kp.skeleton_id, "coco17");
    assert_eq!(kp.joints.len(), 17);
    assert!(!kp.no_detection);
    assert!(kp.joints.iter().all(|j| (0.0..=1.0).contains(&j.confidence)));
    assert!(kp.joints.iter().any(|j| j.name == "left_hip"));
}

#[test]
fn segmentation_fixture_matches_schema() {
    let lm = load_label_map(&fixture("sit_scene.labels.png")).unwrap();
    assert_eq!((lm.width(), lm.height()), (320, 240));
    let names: Vec<&str> = lm.class_names().values().map(String::as_str).collect();
    assert_eq!(names, ["background", "wall", "chair_back", "chair_seat", "person"]);
    assert!(lm.labels().iter().all(|l| lm.class_names().contains_key(l)));
}

#[test]
fn fixtures_feed_metrics_against_simulated_truth() {
    let m = SimConfig::preset(ScenarioKind::SitChair, 0).generate().unwrap();
    let truth = m.ground_truth().annotations().unwrap();
    let kp = load_keypoints(&fixture("sit_pose.keypoints.json")).unwrap();
    let lm = load_label_map(&fixture("sit_scene.labels.png")).unwrap();
    assert_eq!(mpjpe(truth.keypoints.as_ref().unwrap(), &kp, DEFAULT_MIN_CONF).unwrap(), 0.0);
    assert_eq!(overall_accuracy(truth.labels.as_ref().unwrap(), &lm).unwrap(), 100.0);
    let shifted = kp.translated(6.0, 8.0);
    assert!((mpjpe(&kp, &shifted, DEFAULT_MIN_CONF).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn keypoints_round_trip_and_reject_bad_confidence() {
    let dir = tempfile::tempdir().unwrap();
    let kp = load_keypoints(&fixture("sit_pose.keypoints.json")).unwrap();
    let p = dir.path().join("k.json");
    save_keypoints(&kp, &p).unwrap();
    assert_eq!(load_keypoints(&p).unwrap(), kp);

    let mut bad = kp.clone();
    bad.joints[0].confidence = 1.5;
    std::fs::write(&p, serde_json::to_string(&bad).unwrap()).unwrap();
    assert!(load_keypoints(&p).is_err());
}

#[test]
fn label_map_without_class_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("x.labels.png");
    std::fs::copy(fixture("sit_scene.labels.png"), &png).unwrap();
    assert!(load_label_map(&png).is_err());
}
