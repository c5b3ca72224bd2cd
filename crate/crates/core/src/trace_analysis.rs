//! Residual heat trace detection and grading.
//!
//! Cells warmer than ambient by at least the detection threshold are grouped
//! into 8-connected regions. Each region is graded strong / moderate / faint by
//! its peak ΔT, and the inventory can be rendered into the text lines that fill
//! the `{trace_summary}` prompt placeholder.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::mask::{Mask, Rect};
use crate::metrics::LabelMap;
use crate::scene_data::ThermalFrame;

pub const STRONG_DT_C: f64 = 4.0;
pub const MODERATE_DT_C: f64 = 1.5;
pub const FAINT_DT_C: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("ΔT {0:.3} °C is below the faint-trace floor of {FAINT_DT_C} °C")]
    SubThreshold(f64),
    #[error("detection threshold must be > 0, got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Faint,
    Moderate,
    Strong,
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grade::Faint => "faint",
            Grade::Moderate => "moderate",
            Grade::Strong => "strong",
        })
    }
}

/// Grades a peak temperature rise; lower bounds are inclusive.
pub fn grade_trace(peak_dt_c: f64) -> Result<Grade, TraceError> {
    if peak_dt_c >= STRONG_DT_C {
        Ok(Grade::Strong)
    } else if peak_dt_c >= MODERATE_DT_C {
        Ok(Grade::Moderate)
    } else if peak_dt_c >= FAINT_DT_C {
        Ok(Grade::Faint)
    } else {
        Err(TraceError::SubThreshold(peak_dt_c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub threshold_dt_c: f64,
    pub min_area_px: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            threshold_dt_c: 0.5,
            min_area_px: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRegion {
    #[serde(skip)]
    pub mask: Mask,
    pub area_px: usize,
    pub peak_dt_c: f64,
    pub mean_dt_c: f64,
    pub grade: Grade,
    pub bbox: Rect,
    pub object_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceInventory {
    pub ambient_c: f64,
    /// Sorted by peak ΔT, hottest first.
    pub regions: Vec<TraceRegion>,
    /// Labelled objects that show no heat.
    pub negatives: Vec<String>,
    #[serde(skip)]
    pub frame_width: usize,
}

/// Median temperature of the frame (mean of the middle pair for even counts).
pub fn estimate_ambient(thermal: &ThermalFrame) -> f64 {
    let mut v = thermal.temps().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Two-pass 8-connected labelling; returns one component id per set cell.
fn label_components(on: &[bool], w: usize, h: usize) -> Vec<Option<usize>> {
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !on[i] {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut neighbours = [None; 4];
            if x > 0 {
                neighbours[0] = Some(i - 1);
            }
            if y > 0 {
                neighbours[2] = Some(i - w);
                if x > 0 {
                    neighbours[1] = Some(i - w - 1);
                }
                if x + 1 < w {
                    neighbours[3] = Some(i - w + 1);
                }
            }
            for n in neighbours.into_iter().flatten() {
                if on[n] {
                    union(&mut parent, i, n);
                }
            }
        }
    }
    (0..w * h)
        .map(|i| on[i].then(|| find(&mut parent, i)))
        .collect()
}

/// Groups cells with `T − ambient ≥ threshold` into graded regions.
pub fn detect_traces(thermal: &ThermalFrame, ambient_c: f64, config: &TraceConfig) -> Result<TraceInventory, TraceError> {
    if !(config.threshold_dt_c > 0.0) {
        return Err(TraceError::Threshold(config.threshold_dt_c));
    }
    let (w, h) = (thermal.width(), thermal.height());
    let on: Vec<bool> = thermal
        .temps()
        .iter()
        .map(|t| t - ambient_c >= config.threshold_dt_c)
        .collect();
    let labels = label_components(&on, w, h);

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(root) = l {
            groups.entry(*root).or_default().push(i);
        }
    }

    let mut regions: Vec<TraceRegion> = groups
        .into_values()
        .filter(|cells| cells.len() >= config.min_area_px)
        .filter_map(|cells| {
            let dts: Vec<f64> = cells.iter().map(|&i| thermal.temps()[i] - ambient_c).collect();
            let peak = dts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let grade = grade_trace(peak).ok()?;
            let mut mask = Mask::empty(w, h);
            for &i in &cells {
                mask.set(i % w, i / w, true);
            }
            Some(TraceRegion {
                bbox: mask.bbox().expect("region is nonempty"),
                area_px: cells.len(),
                peak_dt_c: peak,
                mean_dt_c: dts.iter().sum::<f64>() / dts.len() as f64,
                grade,
                mask,
                object_label: None,
            })
        })
        .collect();
    // stable: ties keep raster order of first cell
    regions.sort_by(|a, b| b.peak_dt_c.total_cmp(&a.peak_dt_c));

    Ok(TraceInventory {
        ambient_c,
        regions,
        negatives: Vec::new(),
        frame_width: w,
    })
}

/// Names each region after the object it mostly covers and lists unheated objects.
///
/// `background` and `person` classes are never reported.
pub fn label_inventory(inv: &TraceInventory, labels: &LabelMap) -> TraceInventory {
    let mut out = inv.clone();
    let reportable = |id: u8| labels.class_name(id).filter(|n| *n != "background" && *n != "person");
    let mut heated: BTreeSet<u8> = BTreeSet::new();
    for region in &mut out.regions {
        let (w, h) = (region.mask.width(), region.mask.height());
        let mut votes: BTreeMap<u8, usize> = BTreeMap::new();
        for y in 0..h {
            for x in 0..w {
                if !region.mask.get(x, y) {
                    continue;
                }
                let lx = ((x as f64 + 0.5) * labels.width() as f64 / w as f64) as usize;
                let ly = ((y as f64 + 0.5) * labels.height() as f64 / h as f64) as usize;
                let id = labels.label(lx.min(labels.width() - 1), ly.min(labels.height() - 1));
                if reportable(id).is_some() {
                    *votes.entry(id).or_default() += 1;
                    heated.insert(id);
                }
            }
        }
        region.object_label = votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .and_then(|(id, _)| reportable(id).map(str::to_string));
    }
    out.negatives = labels
        .class_names()
        .keys()
        .filter(|id| !heated.contains(id))
        .filter_map(|&id| reportable(id).map(str::to_string))
        .collect();
    out
}

fn position_bucket(bbox: &Rect, width: usize) -> &'static str {
    let c = bbox.center_x() / width as f64;
    if c < 1.0 / 3.0 {
        "left"
    } else if c < 2.0 / 3.0 {
        "center"
    } else {
        "right"
    }
}

/// One line per region (hottest first), then one `no heat: <label>` line per negative.
pub fn inventory_summary(inv: &TraceInventory, object_labels: Option<&LabelMap>) -> Vec<String> {
    let labelled;
    let inv = match object_labels {
        Some(l) => {
            labelled = label_inventory(inv, l);
            &labelled
        }
        None => inv,
    };
    let mut lines = Vec::new();
    if inv.regions.is_empty() {
        lines.push("no thermographic traces detected".to_string());
    }
    for r in &inv.regions {
        let width = if inv.frame_width > 0 { inv.frame_width } else { r.mask.width() };
        lines.push(format!(
            "{}: {} trace, {}, area {} px",
            r.object_label.as_deref().unwrap_or("unlabeled region"),
            r.grade,
            position_bucket(&r.bbox, width),
            r.area_px
        ));
    }
    lines.extend(inv.negatives.iter().map(|n| format!("no heat: {n}")));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn frame_with_blocks(w: usize, h: usize, blocks: &[(Rect, f64)]) -> ThermalFrame {
        let mut t = vec![22.0; w * h];
        for (r, dt) in blocks {
            for y in r.y..r.y + r.h {
                for x in r.x..r.x + r.w {
                    t[y * w + x] = 22.0 + dt;
                }
            }
        }
        ThermalFrame::new(w, h, t, 0.0).unwrap()
    }

    #[test]
    fn ambient_median_cases() {
        assert_eq!(estimate_ambient(&ThermalFrame::uniform(5, 4, 22.0, 0.0).unwrap()), 22.0);
        let mostly = frame_with_blocks(10, 10, &[(Rect::new(0, 0, 5, 1), 8.0)]);
        assert_eq!(estimate_ambient(&mostly), 22.0);
        let half = ThermalFrame::new(2, 2, vec![20.0, 24.0, 20.0, 24.0], 0.0).unwrap();
        assert_eq!(estimate_ambient(&half), 22.0);
    }

    #[test]
    fn grading_table() {
        assert_eq!(grade_trace(6.0).unwrap(), Grade::Strong);
        assert_eq!(grade_trace(4.0).unwrap(), Grade::Strong);
        assert_eq!(grade_trace(1.5).unwrap(), Grade::Moderate);
        assert_eq!(grade_trace(0.5).unwrap(), Grade::Faint);
        assert!(matches!(grade_trace(0.29), Err(TraceError::SubThreshold(_))));
    }

    #[test]
    fn uniform_frame_has_no_traces() {
        let inv = detect_traces(&ThermalFrame::uniform(8, 8, 22.0, 0.0).unwrap(), 22.0, &TraceConfig::default()).unwrap();
        assert!(inv.regions.is_empty());
        assert_eq!(inventory_summary(&inv, None), vec!["no thermographic traces detected"]);
    }

    #[test]
    fn single_block() {
        let f = frame_with_blocks(20, 20, &[(Rect::new(3, 4, 5, 5), 6.0)]);
        let inv = detect_traces(&f, 22.0, &TraceConfig::default()).unwrap();
        assert_eq!(inv.regions.len(), 1);
        let r = &inv.regions[0];
        assert_eq!(r.area_px, 25);
        assert!((r.peak_dt_c - 6.0).abs() < 1e-12);
        assert_eq!(r.bbox, Rect::new(3, 4, 5, 5));
        assert_eq!(r.grade, Grade::Strong);
    }

    #[test]
    fn ordered_hottest_first() {
        let f = frame_with_blocks(20, 10, &[(Rect::new(1, 1, 3, 3), 2.0), (Rect::new(12, 2, 3, 3), 6.0)]);
        let cfg = TraceConfig {
            threshold_dt_c: 0.5,
            ..Default::default()
        };
        let inv = detect_traces(&f, 22.0, &cfg).unwrap();
        let peaks: Vec<f64> = inv.regions.iter().map(|r| (r.peak_dt_c * 1e9).round() / 1e9).collect();
        assert_eq!(peaks, vec![6.0, 2.0]);
    }

    #[test]
    fn diagonal_cells_are_connected_and_small_regions_dropped() {
        let mut f = vec![22.0; 36];
        for i in 0..4 {
            f[i * 6 + i] = 25.0;
        }
        f[5] = 25.0;
        let frame = ThermalFrame::new(6, 6, f, 0.0).unwrap();
        let inv = detect_traces(&frame, 22.0, &TraceConfig::default()).unwrap();
        assert_eq!(inv.regions.len(), 1);
        assert_eq!(inv.regions[0].area_px, 4);
    }

    #[test]
    fn summary_with_labels() {
        let (w, h) = (30, 12);
        let f = frame_with_blocks(w, h, &[(Rect::new(12, 4, 6, 4), 6.0)]);
        let inv = detect_traces(&f, 22.0, &TraceConfig::default()).unwrap();
        let mut ids = vec![0u8; w * h];
        for y in 4..8 {
            for x in 10..20 {
                ids[y * w + x] = 1;
            }
        }
        ids[0] = 2;
        let names = [(0, "background"), (1, "chair_seat"), (2, "wall"), (3, "person")]
            .into_iter()
            .map(|(i, n)| (i, n.to_string()))
            .collect();
        let labels = LabelMap::new(w, h, ids, names).unwrap();
        let lines = inventory_summary(&inv, Some(&labels));
        assert!(lines[0].starts_with("chair_seat: strong trace, center"), "{lines:?}");
        assert!(lines.contains(&"no heat: wall".to_string()));
        assert!(!lines.iter().any(|l| l.contains("person")));
    }

    #[test]
    fn rejects_nonpositive_threshold() {
        let f = ThermalFrame::uniform(2, 2, 22.0, 0.0).unwrap();
        let cfg = TraceConfig {
            threshold_dt_c: 0.0,
            ..Default::default()
        };
        assert!(detect_traces(&f, 22.0, &cfg).is_err());
    }

    /// Independent BFS flood fill over the thresholded set.
    fn flood_fill_oracle(on: &[bool], w: usize, h: usize, min_area: usize) -> Vec<BTreeSet<usize>> {
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        for start in 0..w * h {
            if !on[start] || seen[start] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                comp.insert(i);
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if on[n] && !seen[n] {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
            if comp.len() >= min_area {
                out.push(comp);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn components_match_flood_fill(
            w in 1usize..=32, h in 1usize..=32,
            cells in proptest::collection::vec(0u8..4, 32 * 32),
        ) {
            let temps: Vec<f64> = cells[..w * h].iter().map(|&c| 22.0 + if c == 0 { 2.0 + c as f64 } else { 0.0 }).collect();
            let frame = ThermalFrame::new(w, h, temps.clone(), 0.0).unwrap();
            let cfg = TraceConfig::default();
            let inv = detect_traces(&frame, 22.0, &cfg).unwrap();
            let on: Vec<bool> = temps.iter().map(|t| t - 22.0 >= cfg.threshold_dt_c).collect();
            let mut expected = flood_fill_oracle(&on, w, h, cfg.min_area_px);
            let mut got: Vec<BTreeSet<usize>> = inv
                .regions
                .iter()
                .map(|r| (0..w * h).filter(|&i| r.mask.bits()[i]).collect())
                .collect();
            expected.sort();
            got.sort();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn grading_monotone(a in 0.3f64..20.0, b in 0.3f64..20.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(grade_trace(lo).unwrap() <= grade_trace(hi).unwrap());
        }
    }
}
