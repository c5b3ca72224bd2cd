//! Subcommand implementations. Each returns a `CliError` mapped to an exit code.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use chronolens::config::{BackendRegistry, GlobalConfig};
use chronolens::experiments::{
    render_report, score, timings_csv, Annotator, CommandAnnotator, ExperimentOutput, ExperimentPlan, ExperimentRun,
    ExperimentRunner, FixtureAnnotator, ReportFormat, FIXED_DESCRIPTION,
};
use chronolens::metrics::{load_keypoints, load_label_map, MetricReport};
use chronolens::scene_data::{
    load_manifest, read_rgb_png, save_manifest, write_rgb_png, FrameAnnotations, PairedCapture, ScenarioKind,
    ScenarioManifest,
};
use chronolens::thermal_sim::SimConfig;
use chronolens::vlm_pipeline::{template, Backend, EditRequest, Pipeline, PipelineError, PromptTemplate, Stage};

use crate::error::CliError;
use crate::*;

type Result<T = ()> = std::result::Result<T, CliError>;

const DEFAULT_DELAY_S: f64 = 30.0;
const DEFAULT_SWEEP_S: [f64; 4] = [5.0, 15.0, 30.0, 120.0];

pub fn run(cli: Cli) -> Result {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Simulate(a) => simulate(&config, cli.seed, a),
        Command::Ingest(a) => ingest(a),
        Command::Traces(a) => traces(&config, a),
        Command::Describe(a) => describe(&config, a),
        Command::Reconstruct(a) => reconstruct(&config, a),
        Command::Evaluate(a) => evaluate(&config, a),
        Command::Ablate(a) => ablate(&config, a),
        Command::Sweep(a) => sweep(&config, a),
        Command::CompareGenerators(a) => compare(&config, a),
        Command::PromptLadder(a) => ladder(&config, a),
        Command::Report(a) => report(a),
    }
}

fn load_config(cli: &Cli) -> Result<GlobalConfig> {
    let mut config = match &cli.config {
        Some(p) => GlobalConfig::from_path(p)?,
        None => GlobalConfig::default(),
    };
    if let Some(d) = &cli.cache_dir {
        config.cache_dir = Some(d.clone());
    }
    if let Some(n) = cli.concurrency {
        config.concurrency = n;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    log::debug!("config: {config:?}");
    Ok(config)
}

fn pipeline(config: &GlobalConfig) -> Result<Pipeline> {
    Ok(Pipeline::new(config.open_cache()?, config.retry_policy(), config.pipeline.clone()))
}

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<ScenarioManifest>> {
    paths.iter().map(|p| load_manifest(p).map_err(CliError::from)).collect()
}

fn observation(m: &ScenarioManifest, delay_s: f64) -> Result<&PairedCapture> {
    m.observation_at(delay_s).ok_or_else(|| {
        CliError::Data(format!(
            "scenario {} has no observation at {delay_s} s (available: {:?})",
            m.scenario_id(),
            m.delays()
        ))
    })
}

fn lookup_template(id: &str) -> Result<&'static PromptTemplate> {
    template(id).map_err(|e| PipelineError::from(e).into())
}

fn write_file(path: &Path, contents: &str) -> Result {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn simulate(config: &GlobalConfig, seed_flag: Option<u64>, a: SimulateArgs) -> Result {
    let configs = match &a.config {
        Some(p) => {
            if !a.kind.is_empty() {
                return Err(CliError::Usage("--kind cannot be combined with --config".into()));
            }
            let mut c = SimConfig::from_path(p).map_err(CliError::Data)?;
            if let Some(s) = seed_flag {
                c.sensor.seed = s;
            }
            vec![c]
        }
        None => {
            let kinds = if a.kind.is_empty() { ScenarioKind::ALL.to_vec() } else { a.kind.clone() };
            kinds.into_iter().map(|k| SimConfig::preset(k, config.seed)).collect()
        }
    };
    for c in configs {
        let m = c.generate()?;
        let path = save_manifest(&m, &a.out.join(m.scenario_id()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result {
    let manifests = load_manifests(&a.manifest)?;
    if a.json {
        let docs: Vec<_> = manifests
            .iter()
            .map(|m| {
                let gt = m.ground_truth();
                json!({
                    "scenario_id": m.scenario_id(),
                    "kind": m.kind(),
                    "contact_duration_s": m.contact_duration_s(),
                    "delays_s": m.delays(),
                    "rgb": [gt.rgb().width(), gt.rgb().height()],
                    "thermal": [gt.thermal().width(), gt.thermal().height()],
                    "annotated": m.annotations().is_some(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&docs)?);
        return Ok(());
    }
    for m in &manifests {
        let gt = m.ground_truth();
        println!(
            "{}: {} scenario, contact {} s, delays {:?} s, rgb {}x{}, thermal {}x{}, annotations {}",
            m.scenario_id(),
            m.kind(),
            m.contact_duration_s(),
            m.delays(),
            gt.rgb().width(),
            gt.rgb().height(),
            gt.thermal().width(),
            gt.thermal().height(),
            if m.annotations().is_some() { "yes" } else { "no" },
        );
    }
    Ok(())
}

fn traces(config: &GlobalConfig, a: TracesArgs) -> Result {
    let m = load_manifest(&a.manifest)?;
    let p = pipeline(config)?;
    let captures: Vec<&PairedCapture> = match a.delay {
        Some(d) => vec![observation(&m, d)?],
        None => m.observations().iter().collect(),
    };
    let mut docs = Vec::new();
    for c in captures {
        let inv = p.traces(c)?;
        if a.json {
            docs.push(json!({ "scenario_id": m.scenario_id(), "delay_s": c.delay_s(), "inventory": inv }));
        } else {
            println!(
                "{} @ {} s: ambient {:.2} °C, {} region(s)",
                m.scenario_id(),
                c.delay_s(),
                inv.ambient_c,
                inv.regions.len()
            );
            for line in p.trace_summary(c)?.lines() {
                println!("  {line}");
            }
        }
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&docs)?);
    }
    Ok(())
}

fn describe(config: &GlobalConfig, a: DescribeArgs) -> Result {
    let m = load_manifest(&a.manifest)?;
    let backend = BackendRegistry::build(config, std::slice::from_ref(&m)).get(&a.backend)?;
    let t = lookup_template(&a.template)?;
    let capture = observation(&m, a.delay)?;
    let out = pipeline(config)?.describe_scene(capture, t, &*backend)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{}", out.sentence);
    }
    Ok(())
}

fn reconstruct(config: &GlobalConfig, a: ReconstructArgs) -> Result {
    let m = load_manifest(&a.manifest)?;
    let registry = BackendRegistry::build(config, std::slice::from_ref(&m));
    let editor = registry.get(&a.backend)?;
    let describer = if a.no_descriptor {
        None
    } else {
        Some(registry.get(a.describer.as_deref().unwrap_or(&a.backend))?)
    };
    let editor_id = a.template.clone().unwrap_or_else(|| {
        match (a.no_descriptor, a.no_thermal) {
            (false, _) => "gen-description",
            (true, false) => "gen-thermal",
            (true, true) => "gen-rgb",
        }
        .to_string()
    });
    let editor_template = lookup_template(&editor_id)?.clone();
    let descriptor_template = lookup_template(&a.descriptor_template)?;
    let capture = observation(&m, a.delay)?;
    let p = pipeline(config)?;

    let thermal = if a.no_thermal { None } else { Some(p.thermal_pseudocolor(capture)?) };
    let description = match &describer {
        Some(d) => Some(p.describe_scene(capture, descriptor_template, &**d)?),
        None => None,
    };
    let request = if thermal.is_none() && description.is_none() {
        EditRequest::rgb_only(capture.rgb().clone(), editor_template, a.delay)?
    } else {
        EditRequest::new(capture.rgb().clone(), thermal, description.clone(), editor_template, a.delay)?
    };
    let record = p.reconstruct_past(&request, &*editor)?;
    write_rgb_png(&record.image, &a.out)?;
    let meta = json!({
        "out": a.out,
        "backend_id": record.backend_id,
        "description": description.as_ref().map(|d| &d.sentence),
        "descriptor_template_id": record.descriptor_template_id,
        "editor_template_id": record.editor_template_id,
        "inputs_hash": record.inputs_hash,
        "created_at_unix_s": record.created_at_unix_s,
        "latency_ms": record.latency_ms,
        "from_cache": record.from_cache,
    });
    println!("{}", serde_json::to_string_pretty(&meta)?);
    Ok(())
}

fn print_metrics(r: &MetricReport) {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
    println!("PSNR: {} dB", r.psnr_display());
    println!("SSIM: {}", opt(r.ssim.map(|v| v.display(1.0))));
    println!("MPJPE: {} px", opt(r.mpjpe_px.map(|v| v.display(1.0))));
    println!("OA: {} %", opt(r.oa_percent.map(|v| v.display(1.0))));
}

fn evaluate(config: &GlobalConfig, a: EvaluateArgs) -> Result {
    let m = load_manifest(&a.manifest)?;
    let candidate = read_rgb_png(&a.candidate)?;
    let annotator = if a.keypoints.is_some() || a.labels.is_some() {
        let mut ann = FixtureAnnotator::default();
        let keypoints = a.keypoints.as_deref().map(load_keypoints).transpose()?;
        let labels = a.labels.as_deref().map(load_label_map).transpose()?;
        ann.insert(&candidate, FrameAnnotations { keypoints, labels });
        ann
    } else {
        FixtureAnnotator::from_manifests(std::slice::from_ref(&m))
    };
    let r = score(&candidate, m.ground_truth(), &annotator, config.min_conf)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        print_metrics(&r);
    }
    Ok(())
}

/// Manifests, plan and annotator shared by every experiment subcommand.
struct Experiment {
    manifests: Vec<ScenarioManifest>,
    plan: ExperimentPlan,
    annotator: Box<dyn Annotator>,
    registry: BackendRegistry,
}

impl Experiment {
    fn load(config: &GlobalConfig, exp: &ExperimentArgs, sweep: bool) -> Result<Self> {
        if exp.format == ReportFormat::PlotData && !sweep {
            return Err(CliError::Usage("plot-data output is only available for sweep".into()));
        }
        let plan = match &exp.plan {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                let mut plan: ExperimentPlan =
                    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new("."));
                for m in &mut plan.manifests {
                    *m = base.join(&*m);
                }
                plan
            }
            None => ExperimentPlan {
                manifests: Vec::new(),
                describer: None,
                backends: Vec::new(),
                delay_s: None,
                delays_s: Vec::new(),
                ladder_stages: Vec::new(),
                out_dir: None,
            },
        };
        let paths = if exp.manifest.is_empty() { &plan.manifests } else { &exp.manifest };
        if paths.is_empty() {
            return Err(CliError::Usage("give at least one --manifest (or a --plan listing manifests)".into()));
        }
        let manifests = load_manifests(paths)?;
        let annotator: Box<dyn Annotator> = match &exp.annotator {
            Some(program) => Box::new(CommandAnnotator {
                program: program.clone(),
                work_dir: std::env::temp_dir().join(format!("chronolens-annotate-{}", std::process::id())),
            }),
            None => Box::new(FixtureAnnotator::from_manifests(&manifests)),
        };
        let registry = BackendRegistry::build(config, &manifests);
        Ok(Experiment {
            manifests,
            plan,
            annotator,
            registry,
        })
    }

    fn backend(&self, flag: Option<&str>) -> Result<Arc<dyn Backend>> {
        let id = flag
            .or(self.plan.backends.first().map(String::as_str))
            .ok_or_else(|| CliError::Usage("no backend given (--backend or plan backends)".into()))?;
        Ok(self.registry.get(id)?)
    }

    fn describer(&self, flag: Option<&str>, fallback: &dyn Backend) -> Result<Option<Arc<dyn Backend>>> {
        match flag.or(self.plan.describer.as_deref()) {
            Some(id) if id != fallback.id() => Ok(Some(self.registry.get(id)?)),
            _ => Ok(None),
        }
    }

    fn runner<'a>(&'a self, config: &GlobalConfig, p: &'a Pipeline) -> Result<ExperimentRunner<'a>> {
        Ok(ExperimentRunner::new(p, &*self.annotator, config.concurrency)?.with_min_conf(config.min_conf))
    }
}

/// Writes or prints every report, then maps cell failures to an exit status.
fn finish(exp: &ExperimentArgs, plan: &ExperimentPlan, runs: Vec<(Option<String>, ExperimentRun)>) -> Result {
    let several = runs.len() > 1;
    let out_dir = plan.out_dir.as_deref();
    let file_name = |suffix: &Option<String>, out: &ExperimentOutput, ext: &str| match suffix {
        Some(s) => format!("{}-{s}.{ext}", out.name()),
        None => format!("{}.{ext}", out.name()),
    };
    let target = |flag: Option<&PathBuf>, suffix: &Option<String>, out: &ExperimentOutput, ext: &str| -> Option<PathBuf> {
        match (flag, out_dir) {
            (Some(p), _) if !several && !p.is_dir() => Some(p.clone()),
            (Some(dir), _) => Some(dir.join(file_name(suffix, out, ext))),
            (None, Some(dir)) => Some(dir.join(file_name(suffix, out, ext))),
            (None, None) => None,
        }
    };

    for (i, (suffix, run)) in runs.iter().enumerate() {
        let text = render_report(&run.output, exp.format)?;
        match target(exp.out.as_ref(), suffix, &run.output, exp.format.extension()) {
            Some(path) => {
                write_file(&path, &text)?;
                println!("{}", path.display());
            }
            None => {
                if i > 0 {
                    println!();
                }
                print!("{text}");
            }
        }
        if let Some(path) = target(exp.save.as_ref(), suffix, &run.output, "json") {
            write_file(&path, &(serde_json::to_string_pretty(&run.output)? + "\n"))?;
        }
    }
    let all: Vec<_> = runs.iter().flat_map(|(_, r)| r.results.iter().cloned()).collect();
    let timings = exp.timings.clone().or_else(|| out_dir.map(|d| d.join("timings.csv")));
    if let Some(path) = timings {
        write_file(&path, &timings_csv(&all))?;
    }

    let total = all.len();
    let failed: usize = runs.iter().map(|(_, r)| r.failed_cells()).sum();
    let backend: usize = runs.iter().map(|(_, r)| r.backend_failures()).sum();
    let first_error = || all.iter().find_map(|r| r.error()).unwrap_or("").to_string();
    match failed {
        0 => Ok(()),
        f if f == total && backend == f => Err(CliError::Backend(format!("all {total} cells failed: {}", first_error()))),
        f if f == total => Err(CliError::Data(format!("all {total} cells failed: {}", first_error()))),
        f => Err(CliError::Partial { failed: f, total }),
    }
}

fn ablate(config: &GlobalConfig, a: AblateArgs) -> Result {
    let e = Experiment::load(config, &a.exp, false)?;
    let editor = e.backend(a.backend.as_deref())?;
    let describer = e.describer(a.describer.as_deref(), &*editor)?;
    let delay = a.delay.or(e.plan.delay_s).unwrap_or(DEFAULT_DELAY_S);
    let p = pipeline(config)?;
    let run = e
        .runner(config, &p)?
        .run_ablation(&e.manifests, describer.as_deref().unwrap_or(&*editor), &*editor, delay)?;
    finish(&a.exp, &e.plan, vec![(None, run)])
}

fn sweep(config: &GlobalConfig, a: SweepArgs) -> Result {
    let e = Experiment::load(config, &a.exp, true)?;
    let editor = e.backend(a.backend.as_deref())?;
    let describer = e.describer(a.describer.as_deref(), &*editor)?;
    let delays = if !a.delays.is_empty() {
        a.delays.clone()
    } else if !e.plan.delays_s.is_empty() {
        e.plan.delays_s.clone()
    } else {
        DEFAULT_SWEEP_S.to_vec()
    };
    let p = pipeline(config)?;
    let run = e
        .runner(config, &p)?
        .run_temporal_sweep(&e.manifests, describer.as_deref().unwrap_or(&*editor), &*editor, &delays)?;
    finish(&a.exp, &e.plan, vec![(None, run)])
}

fn compare(config: &GlobalConfig, a: CompareArgs) -> Result {
    let e = Experiment::load(config, &a.exp, false)?;
    let ids = if a.backends.is_empty() { e.plan.backends.clone() } else { a.backends.clone() };
    if ids.is_empty() {
        return Err(CliError::Usage("no editors given (--backends or plan backends)".into()));
    }
    let editors = ids.iter().map(|id| e.registry.get(id)).collect::<std::result::Result<Vec<_>, _>>()?;
    let describer = e.describer(a.describer.as_deref(), &*editors[0])?;
    let describer: &dyn Backend = describer.as_deref().unwrap_or(&*editors[0]);
    let refs: Vec<&dyn Backend> = editors.iter().map(|b| &**b).collect();
    let delay = a.delay.or(e.plan.delay_s).unwrap_or(DEFAULT_DELAY_S);
    let p = pipeline(config)?;
    let runner = e.runner(config, &p)?;
    let several = e.manifests.len() > 1;
    let runs = e
        .manifests
        .iter()
        .map(|m| {
            let run = runner.run_generator_comparison(m, describer, &refs, delay)?;
            Ok((several.then(|| m.scenario_id().to_string()), run))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(&a.exp, &e.plan, runs)
}

fn ladder(config: &GlobalConfig, a: LadderArgs) -> Result {
    let e = Experiment::load(config, &a.exp, false)?;
    let editor = e.backend(a.backend.as_deref())?;
    let describer = e.describer(a.describer.as_deref(), &*editor)?;
    let describer: &dyn Backend = describer.as_deref().unwrap_or(&*editor);
    let stages = if !a.stage.is_empty() {
        a.stage.clone()
    } else if !e.plan.ladder_stages.is_empty() {
        e.plan.ladder_stages.clone()
    } else {
        vec![Stage::Descriptor, Stage::Editor]
    };
    let delay = a.delay.or(e.plan.delay_s).unwrap_or(DEFAULT_DELAY_S);
    let description = a.description.as_deref().unwrap_or(FIXED_DESCRIPTION);
    let p = pipeline(config)?;
    let runner = e.runner(config, &p)?;
    let mut runs = Vec::new();
    for m in &e.manifests {
        for &stage in &stages {
            let run = runner.run_prompt_ladder(m, describer, &*editor, stage, delay, description)?;
            let suffix = match (e.manifests.len() > 1, stages.len() > 1) {
                (false, false) => None,
                (false, true) => Some(stage.to_string()),
                (true, false) => Some(m.scenario_id().to_string()),
                (true, true) => Some(format!("{}-{stage}", m.scenario_id())),
            };
            runs.push((suffix, run));
        }
    }
    finish(&a.exp, &e.plan, runs)
}

fn report(a: ReportArgs) -> Result {
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let output: ExperimentOutput =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let rendered = render_report(&output, a.format)?;
    match &a.out {
        Some(p) => write_file(p, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
