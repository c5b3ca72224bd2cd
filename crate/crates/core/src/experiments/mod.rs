//! Experiment families: modality ablation, temporal sweep, generator
//! comparison and prompt ladders.
//!
//! Every cell reconstructs the frame at some delay and is scored against the
//! scenario's delay-0 ground truth. Cells run concurrently on a bounded pool;
//! a failing cell is recorded as such and never affects its neighbours.

pub mod annotate;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use annotate::{Annotator, CommandAnnotator, FixtureAnnotator};
pub use report::{emit_report, render_report, timings_csv, ExperimentOutput, ReportError, ReportFormat};

use crate::metrics::{aggregate, mpjpe, overall_accuracy, psnr, ssim, MetricReport, MetricsError, DEFAULT_MIN_CONF};
use crate::scene_data::{PairedCapture, RgbFrame, ScenarioManifest};
use crate::vlm_pipeline::{
    ladder_template, template, Backend, DescriptorOutput, EditRequest, Pipeline, PipelineError, ReconstructionRecord,
    Stage,
};

/// Action sentence held fixed across the editor ladder.
pub const FIXED_DESCRIPTION: &str = "the person was sitting and holding the book";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("no scenarios given")]
    NoScenarios,
    #[error("scenario {scenario_id} has no observation at {delay_s} s")]
    MissingDelay { scenario_id: String, delay_s: f64 },
    #[error("no backends given")]
    NoBackends,
    #[error("concurrency must be at least 1")]
    Concurrency,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub scenario_id: String,
    pub delay_s: f64,
    pub modalities: Vec<Modality>,
    pub use_descriptor: bool,
    pub descriptor_template: Option<String>,
    pub editor_template: String,
    pub backend_id: String,
}

impl ExperimentCell {
    pub fn uses(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.uses(Modality::Rgb) {
            return Err("the RGB frame is always edited, so rgb must be among the modalities".into());
        }
        if self.use_descriptor && self.descriptor_template.is_none() {
            return Err("use_descriptor requires a descriptor template".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum CellOutcome {
    Ok {
        record: ReconstructionRecord,
        report: MetricReport,
        descriptor: Option<DescriptorOutput>,
    },
    Failed {
        error: String,
        backend_failure: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cell: ExperimentCell,
    pub outcome: CellOutcome,
    pub wall_ms: u64,
}

impl ExperimentResult {
    pub fn report(&self) -> Option<&MetricReport> {
        match &self.outcome {
            CellOutcome::Ok { report, .. } => Some(report),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&str> {
        match &self.outcome {
            CellOutcome::Failed { error, .. } => Some(error),
            CellOutcome::Ok { .. } => None,
        }
    }
}

/// Summary plus the per-cell results it was built from.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub output: ExperimentOutput,
    pub results: Vec<ExperimentResult>,
}

impl ExperimentRun {
    pub fn failed_cells(&self) -> usize {
        self.results.iter().filter(|r| r.error().is_some()).count()
    }

    pub fn backend_failures(&self) -> usize {
        self.results
            .iter()
            .filter(|r| matches!(r.outcome, CellOutcome::Failed { backend_failure: true, .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub report: Option<MetricReport>,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl AggregateRow {
    fn from_results<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>) -> Self {
        let mut reports = Vec::new();
        let mut n_failed = 0;
        for r in results {
            match r.report() {
                Some(rep) => reports.push(rep.clone()),
                None => n_failed += 1,
            }
        }
        AggregateRow {
            n_ok: reports.len(),
            report: aggregate(&reports).ok(),
            n_failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rgb: bool,
    pub thermal: bool,
    pub descriptor: bool,
    #[serde(flatten)]
    pub aggregate: AggregateRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub delay_s: f64,
    pub scenarios: Vec<String>,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delay_s: f64,
    #[serde(flatten)]
    pub aggregate: AggregateRow,
    /// Mean over scenarios of the hottest detected trace's peak ΔT.
    pub trace_peak_dt_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub scenarios: Vec<String>,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRow {
    pub backend_id: String,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub scenario_id: String,
    pub delay_s: f64,
    pub describer_id: String,
    pub rows: Vec<GeneratorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub level: u8,
    pub template_id: String,
    /// Descriptor sentence used for this level, verbatim.
    pub sentence: Option<String>,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLog {
    pub scenario_id: String,
    pub delay_s: f64,
    pub stage: Stage,
    pub entries: Vec<LadderEntry>,
}

/// Scores a reconstruction against ground truth.
///
/// MPJPE and OA are absent whenever either side lacks the annotation or the
/// metric cannot be computed (for example no person detected).
pub fn score(candidate: &RgbFrame, ground_truth: &PairedCapture, annotator: &dyn Annotator, min_conf: f64) -> Result<MetricReport, MetricsError> {
    let gt = ground_truth.rgb();
    let p = psnr(gt, candidate)?;
    let s = ssim(gt, candidate)?;
    let gt_ann = ground_truth.annotations();
    let cand_ann = if gt_ann.is_some() { annotator.annotate(candidate) } else { None };
    let (mut mp, mut oa) = (None, None);
    if let (Some(g), Some(c)) = (gt_ann, cand_ann.as_ref()) {
        if let (Some(gk), Some(ck)) = (&g.keypoints, &c.keypoints) {
            mp = mpjpe(gk, ck, min_conf).ok();
        }
        if let (Some(gl), Some(cl)) = (&g.labels, &c.labels) {
            oa = overall_accuracy(gl, cl).ok();
        }
    }
    MetricReport::sample(Some(p), Some(s), mp, oa)
}

struct CellJob<'a> {
    manifest: &'a ScenarioManifest,
    cell: ExperimentCell,
    editor: &'a dyn Backend,
    fixed_description: Option<DescriptorOutput>,
}

pub struct ExperimentRunner<'a> {
    pipeline: &'a Pipeline,
    annotator: &'a dyn Annotator,
    pool: rayon::ThreadPool,
    min_conf: f64,
}

impl<'a> ExperimentRunner<'a> {
    pub fn new(pipeline: &'a Pipeline, annotator: &'a dyn Annotator, concurrency: usize) -> Result<Self> {
        if concurrency == 0 {
            return Err(ExperimentError::Concurrency);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?;
        Ok(ExperimentRunner {
            pipeline,
            annotator,
            pool,
            min_conf: DEFAULT_MIN_CONF,
        })
    }

    pub fn with_min_conf(mut self, min_conf: f64) -> Self {
        self.min_conf = min_conf;
        self
    }

    fn check_delays(manifests: &[ScenarioManifest], delays: &[f64]) -> Result<()> {
        if manifests.is_empty() {
            return Err(ExperimentError::NoScenarios);
        }
        for m in manifests {
            for &d in delays {
                if m.observation_at(d).is_none() {
                    return Err(ExperimentError::MissingDelay {
                        scenario_id: m.scenario_id().to_string(),
                        delay_s: d,
                    });
                }
            }
            if m.annotations().is_none() {
                log::warn!("scenario {} has no ground-truth annotations; MPJPE and OA will be absent", m.scenario_id());
            }
        }
        Ok(())
    }

    fn run_cell(&self, job: &CellJob<'_>, describer: &dyn Backend) -> ExperimentResult {
        let started = Instant::now();
        let outcome = match self.try_cell(job, describer) {
            Ok((record, descriptor)) => match score(&record.image, job.manifest.ground_truth(), self.annotator, self.min_conf) {
                Ok(report) => CellOutcome::Ok {
                    record,
                    report,
                    descriptor,
                },
                Err(e) => CellOutcome::Failed {
                    error: format!("scoring: {e}"),
                    backend_failure: false,
                },
            },
            Err(e) => {
                log::warn!("cell {} @ {} s via {} failed: {e}", job.cell.scenario_id, job.cell.delay_s, job.cell.backend_id);
                CellOutcome::Failed {
                    backend_failure: e.is_backend_failure(),
                    error: e.to_string(),
                }
            }
        };
        ExperimentResult {
            cell: job.cell.clone(),
            outcome,
            wall_ms: started.elapsed().as_millis() as u64,
        }
    }

    fn try_cell(&self, job: &CellJob<'_>, describer: &dyn Backend) -> Result<(ReconstructionRecord, Option<DescriptorOutput>), PipelineError> {
        let cell = &job.cell;
        let capture = job
            .manifest
            .observation_at(cell.delay_s)
            .ok_or_else(|| PipelineError::InvalidRequest(format!("no observation at {} s", cell.delay_s)))?;
        let thermal = if cell.uses(Modality::Thermal) {
            Some(self.pipeline.thermal_pseudocolor(capture)?)
        } else {
            None
        };
        let descriptor = match (&job.fixed_description, &cell.descriptor_template) {
            (Some(fixed), _) => Some(fixed.clone()),
            (None, Some(id)) if cell.use_descriptor => Some(self.pipeline.describe_scene(capture, template(id)?, describer)?),
            _ => None,
        };
        let editor_template = template(&cell.editor_template)?.clone();
        let request = if thermal.is_none() && descriptor.is_none() {
            EditRequest::rgb_only(capture.rgb().clone(), editor_template, cell.delay_s)?
        } else {
            EditRequest::new(capture.rgb().clone(), thermal, descriptor.clone(), editor_template, cell.delay_s)?
        };
        let record = self.pipeline.reconstruct_past(&request, job.editor)?;
        Ok((record, descriptor))
    }

    fn run_jobs(&self, jobs: &[CellJob<'_>], describer: &dyn Backend) -> Vec<ExperimentResult> {
        self.pool
            .install(|| jobs.par_iter().map(|j| self.run_cell(j, describer)).collect())
    }

    fn full_cell(manifest: &ScenarioManifest, delay_s: f64, backend_id: &str) -> ExperimentCell {
        ExperimentCell {
            scenario_id: manifest.scenario_id().to_string(),
            delay_s,
            modalities: vec![Modality::Rgb, Modality::Thermal],
            use_descriptor: true,
            descriptor_template: Some("desc-main".into()),
            editor_template: "gen-description".into(),
            backend_id: backend_id.to_string(),
        }
    }

    /// Three cells per scenario: RGB only, RGB + thermal, RGB + thermal + descriptor.
    pub fn run_ablation(&self, manifests: &[ScenarioManifest], describer: &dyn Backend, editor: &dyn Backend, delay_s: f64) -> Result<ExperimentRun> {
        Self::check_delays(manifests, &[delay_s])?;
        let configs: [(bool, bool, Option<&str>, &str); 3] = [
            (false, false, None, "gen-rgb"),
            (true, false, None, "gen-thermal"),
            (true, true, Some("desc-main"), "gen-description"),
        ];
        let mut jobs = Vec::new();
        for (thermal, desc, desc_t, edit_t) in configs {
            for m in manifests {
                let mut modalities = vec![Modality::Rgb];
                if thermal {
                    modalities.push(Modality::Thermal);
                }
                jobs.push(CellJob {
                    manifest: m,
                    cell: ExperimentCell {
                        scenario_id: m.scenario_id().to_string(),
                        delay_s,
                        modalities,
                        use_descriptor: desc,
                        descriptor_template: desc_t.map(str::to_string),
                        editor_template: edit_t.to_string(),
                        backend_id: editor.id().to_string(),
                    },
                    editor,
                    fixed_description: None,
                });
            }
        }
        let results = self.run_jobs(&jobs, describer);
        let rows = configs
            .iter()
            .enumerate()
            .map(|(i, &(thermal, desc, _, _))| AblationRow {
                rgb: true,
                thermal,
                descriptor: desc,
                aggregate: AggregateRow::from_results(&results[i * manifests.len()..(i + 1) * manifests.len()]),
            })
            .collect();
        Ok(ExperimentRun {
            output: ExperimentOutput::Ablation(AblationTable {
                delay_s,
                scenarios: manifests.iter().map(|m| m.scenario_id().to_string()).collect(),
                rows,
            }),
            results,
        })
    }

    /// Full pipeline at each delay, aggregated across scenarios.
    pub fn run_temporal_sweep(&self, manifests: &[ScenarioManifest], describer: &dyn Backend, editor: &dyn Backend, delays_s: &[f64]) -> Result<ExperimentRun> {
        Self::check_delays(manifests, delays_s)?;
        let jobs: Vec<CellJob> = delays_s
            .iter()
            .flat_map(|&d| {
                manifests.iter().map(move |m| CellJob {
                    manifest: m,
                    cell: Self::full_cell(m, d, editor.id()),
                    editor,
                    fixed_description: None,
                })
            })
            .collect();
        let results = self.run_jobs(&jobs, describer);
        let n = manifests.len();
        let mut points = Vec::new();
        for (i, &d) in delays_s.iter().enumerate() {
            let peaks: Vec<f64> = manifests
                .iter()
                .filter_map(|m| m.observation_at(d))
                .filter_map(|c| self.pipeline.traces(c).ok())
                .filter_map(|inv| inv.regions.first().map(|r| r.peak_dt_c))
                .collect();
            points.push(SweepPoint {
                delay_s: d,
                aggregate: AggregateRow::from_results(&results[i * n..(i + 1) * n]),
                trace_peak_dt_c: (!peaks.is_empty()).then(|| peaks.iter().sum::<f64>() / peaks.len() as f64),
            });
        }
        Ok(ExperimentRun {
            output: ExperimentOutput::Sweep(SweepSeries {
                scenarios: manifests.iter().map(|m| m.scenario_id().to_string()).collect(),
                points,
            }),
            results,
        })
    }

    /// Same full-pipeline cell for every editor; failures stay in the matrix.
    pub fn run_generator_comparison(&self, manifest: &ScenarioManifest, describer: &dyn Backend, editors: &[&dyn Backend], delay_s: f64) -> Result<ExperimentRun> {
        if editors.is_empty() {
            return Err(ExperimentError::NoBackends);
        }
        Self::check_delays(std::slice::from_ref(manifest), &[delay_s])?;
        let jobs: Vec<CellJob> = editors
            .iter()
            .map(|&e| CellJob {
                manifest,
                cell: Self::full_cell(manifest, delay_s, e.id()),
                editor: e,
                fixed_description: None,
            })
            .collect();
        let results = self.run_jobs(&jobs, describer);
        let rows = results
            .iter()
            .map(|r| GeneratorRow {
                backend_id: r.cell.backend_id.clone(),
                report: r.report().cloned(),
                error: r.error().map(str::to_string),
            })
            .collect();
        Ok(ExperimentRun {
            output: ExperimentOutput::Generators(GeneratorMatrix {
                scenario_id: manifest.scenario_id().to_string(),
                delay_s,
                describer_id: describer.id().to_string(),
                rows,
            }),
            results,
        })
    }

    /// Levels 1 to 4 of one ladder with everything else held fixed.
    ///
    /// Descriptor stage: each descriptor template feeds the main description-guided
    /// editor prompt. Editor stage: every level receives `fixed_description`.
    pub fn run_prompt_ladder(
        &self,
        manifest: &ScenarioManifest,
        describer: &dyn Backend,
        editor: &dyn Backend,
        stage: Stage,
        delay_s: f64,
        fixed_description: &str,
    ) -> Result<ExperimentRun> {
        Self::check_delays(std::slice::from_ref(manifest), &[delay_s])?;
        let mut jobs = Vec::new();
        for level in 1..=4u8 {
            let t = ladder_template(stage, level).map_err(PipelineError::from)?;
            let mut cell = Self::full_cell(manifest, delay_s, editor.id());
            let mut fixed = None;
            match stage {
                Stage::Descriptor => cell.descriptor_template = Some(t.id.clone()),
                Stage::Editor => {
                    cell.descriptor_template = None;
                    cell.editor_template = t.id.clone();
                    fixed = Some(DescriptorOutput {
                        sentence: fixed_description.to_string(),
                        raw_response: fixed_description.to_string(),
                        backend_id: "fixed".into(),
                        template_id: "fixed".into(),
                        latency_ms: 0,
                        from_cache: false,
                    });
                }
            }
            jobs.push(CellJob {
                manifest,
                cell,
                editor,
                fixed_description: fixed,
            });
        }
        let results = self.run_jobs(&jobs, describer);
        let entries = results
            .iter()
            .zip(1..=4u8)
            .map(|(r, level)| {
                let sentence = match &r.outcome {
                    CellOutcome::Ok { descriptor, .. } => descriptor.as_ref().map(|d| d.sentence.clone()),
                    CellOutcome::Failed { .. } => None,
                };
                if let (Stage::Descriptor, Some(s)) = (stage, &sentence) {
                    log::info!("descriptor level {level}: {s}");
                }
                LadderEntry {
                    level,
                    template_id: match stage {
                        Stage::Descriptor => r.cell.descriptor_template.clone().unwrap_or_default(),
                        Stage::Editor => r.cell.editor_template.clone(),
                    },
                    sentence,
                    report: r.report().cloned(),
                    error: r.error().map(str::to_string),
                }
            })
            .collect();
        Ok(ExperimentRun {
            output: ExperimentOutput::Ladder(LadderLog {
                scenario_id: manifest.scenario_id().to_string(),
                delay_s,
                stage,
                entries,
            }),
            results,
        })
    }
}

/// One JSON document describing an experiment batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub manifests: Vec<PathBuf>,
    #[serde(default)]
    pub describer: Option<String>,
    #[serde(default)]
    pub backends: Vec<String>,
    #[serde(default)]
    pub delay_s: Option<f64>,
    #[serde(default)]
    pub delays_s: Vec<f64>,
    #[serde(default)]
    pub ladder_stages: Vec<Stage>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_data::ScenarioKind;
    use crate::thermal_sim::SimConfig;
    use crate::vlm_pipeline::MockBackend;

    fn manifests() -> Vec<ScenarioManifest> {
        ScenarioKind::ALL
            .iter()
            .map(|&k| SimConfig::preset(k, 7).generate().unwrap())
            .collect()
    }

    #[test]
    fn cell_invariants() {
        let mut c = ExperimentRunner::full_cell(&manifests()[0], 5.0, "x");
        assert!(c.validate().is_ok());
        c.descriptor_template = None;
        assert!(c.validate().is_err());
        c.use_descriptor = false;
        c.modalities = vec![Modality::Thermal];
        assert!(c.validate().is_err());
    }

    #[test]
    fn ablation_with_identity_matches_direct_metrics() {
        let ms = manifests();
        let p = Pipeline::for_tests();
        let ann = FixtureAnnotator::from_manifests(&ms);
        let runner = ExperimentRunner::new(&p, &ann, 2).unwrap();
        let id = MockBackend::identity("mock-identity");
        let run = runner.run_ablation(&ms, &id, &id, 30.0).unwrap();
        assert_eq!(run.results.len(), 9);
        for r in &run.results {
            let m = ms.iter().find(|m| m.scenario_id() == r.cell.scenario_id).unwrap();
            let obs = m.observation_at(30.0).unwrap().rgb();
            let rep = r.report().unwrap();
            let expected_psnr = psnr(m.ground_truth().rgb(), obs).unwrap();
            let expected_ssim = ssim(m.ground_truth().rgb(), obs).unwrap();
            assert_eq!(rep.psnr_db.unwrap().mean, expected_psnr);
            assert_eq!(rep.ssim.unwrap().mean, expected_ssim);
            assert!(rep.mpjpe_px.is_none(), "no person in the current frame");
            assert!(rep.oa_percent.unwrap().mean < 100.0);
        }
    }

    #[test]
    fn missing_delay_is_an_error() {
        let ms = manifests();
        let p = Pipeline::for_tests();
        let ann = FixtureAnnotator::default();
        let runner = ExperimentRunner::new(&p, &ann, 1).unwrap();
        let id = MockBackend::identity("i");
        assert!(matches!(
            runner.run_ablation(&ms, &id, &id, 45.0),
            Err(ExperimentError::MissingDelay { .. })
        ));
        assert!(matches!(runner.run_ablation(&[], &id, &id, 5.0), Err(ExperimentError::NoScenarios)));
    }

    #[test]
    fn failing_backend_isolated() {
        let ms = manifests();
        let p = Pipeline::for_tests();
        let ann = FixtureAnnotator::from_manifests(&ms);
        let runner = ExperimentRunner::new(&p, &ann, 3).unwrap();
        let gt = MockBackend::ground_truth("mock-gt", &ms);
        let id = MockBackend::identity("mock-identity");
        let fail = MockBackend::failing("mock-fail");
        let run = runner
            .run_generator_comparison(&ms[0], &gt, &[&gt, &fail, &id], 15.0)
            .unwrap();
        let ExperimentOutput::Generators(matrix) = &run.output else { panic!() };
        assert_eq!(matrix.rows.len(), 3);
        assert!(matrix.rows[1].error.is_some());
        let alone = runner.run_generator_comparison(&ms[0], &gt, &[&gt, &id], 15.0).unwrap();
        let ExperimentOutput::Generators(m2) = &alone.output else { panic!() };
        assert_eq!(matrix.rows[0], m2.rows[0]);
        assert_eq!(matrix.rows[2], m2.rows[1]);
        assert_eq!(run.backend_failures(), 1);
    }

    #[test]
    fn sweep_trace_channel_decreases() {
        let ms = manifests();
        let p = Pipeline::for_tests();
        let ann = FixtureAnnotator::from_manifests(&ms);
        let runner = ExperimentRunner::new(&p, &ann, 4).unwrap();
        let gt = MockBackend::ground_truth("mock-gt", &ms);
        let run = runner.run_temporal_sweep(&ms, &gt, &gt, &[5.0, 15.0, 30.0, 120.0]).unwrap();
        let ExperimentOutput::Sweep(series) = &run.output else { panic!() };
        let peaks: Vec<f64> = series.points.iter().map(|p| p.trace_peak_dt_c.unwrap()).collect();
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
        for pt in &series.points {
            let rep = pt.aggregate.report.as_ref().unwrap();
            assert_eq!(rep.psnr_infinite, 3);
            assert_eq!(rep.ssim.unwrap().mean, 1.0);
        }
    }

    #[test]
    fn ladders_have_four_entries() {
        let ms = manifests();
        let p = Pipeline::for_tests();
        let ann = FixtureAnnotator::from_manifests(&ms);
        let runner = ExperimentRunner::new(&p, &ann, 2).unwrap();
        let echo = MockBackend::identity("echo");
        for stage in [Stage::Descriptor, Stage::Editor] {
            let run = runner.run_prompt_ladder(&ms[0], &echo, &echo, stage, 5.0, FIXED_DESCRIPTION).unwrap();
            let ExperimentOutput::Ladder(log) = &run.output else { panic!() };
            assert_eq!(log.entries.len(), 4);
            let sentences: Vec<_> = log.entries.iter().map(|e| e.sentence.clone().unwrap()).collect();
            assert!(sentences.windows(2).all(|w| w[0] == w[1]));
        }
        // four distinct descriptor prompts reached the backend
        assert_eq!(echo.describe_calls(), 4);
    }
}
