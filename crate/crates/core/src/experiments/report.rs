//! Markdown, CSV and plot-data rendering of experiment summaries.
//!
//! Output depends only on the summary, never on wall-clock timings, so two
//! runs over the same inputs produce byte-identical files. Timings go to a
//! separate CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AblationTable, AggregateRow, ExperimentResult, GeneratorMatrix, LadderLog, SweepSeries};
use crate::metrics::{MetricReport, MetricValue};
use crate::vlm_pipeline::Stage;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to report")]
    Empty,
    #[error("{0} output is not available for this experiment")]
    Unsupported(ReportFormat),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Markdown,
    PlotData,
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
            ReportFormat::PlotData => "plot-data",
        })
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "plot-data" => Ok(ReportFormat::PlotData),
            other => Err(format!("unknown format {other:?} (csv, markdown, plot-data)")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv | ReportFormat::PlotData => "csv",
        }
    }
}

/// Serializable summary of any experiment family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentOutput {
    Ablation(AblationTable),
    Sweep(SweepSeries),
    Generators(GeneratorMatrix),
    Ladder(LadderLog),
}

impl ExperimentOutput {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentOutput::Ablation(_) => "ablation",
            ExperimentOutput::Sweep(_) => "sweep",
            ExperimentOutput::Generators(_) => "generators",
            ExperimentOutput::Ladder(_) => "ladder",
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            ExperimentOutput::Ablation(t) => t.rows.is_empty(),
            ExperimentOutput::Sweep(s) => s.points.is_empty(),
            ExperimentOutput::Generators(g) => g.rows.is_empty(),
            ExperimentOutput::Ladder(l) => l.entries.is_empty(),
        }
    }
}

const DASH: &str = "—";

fn cell(v: Option<MetricValue>, scale: f64) -> String {
    v.map(|v| v.display(scale)).unwrap_or_else(|| DASH.to_string())
}

/// OA, MPJPE, PSNR, SSIM cells; every cell is a dash for a failed row.
fn metric_cells(report: Option<&MetricReport>, ssim_scale: f64) -> [String; 4] {
    match report {
        Some(r) => [
            cell(r.oa_percent, 1.0),
            cell(r.mpjpe_px, 1.0),
            r.psnr_display(),
            cell(r.ssim, ssim_scale),
        ],
        None => std::array::from_fn(|_| DASH.to_string()),
    }
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.6}"),
        None => String::new(),
    }
}

fn value_cols(v: Option<MetricValue>, scale: f64) -> String {
    match v {
        Some(v) => format!("{},{},{}", num(Some(v.mean * scale)), num(v.std.map(|s| s * scale)), v.count),
        None => ",,0".into(),
    }
}

const METRIC_CSV_HEADER: &str = "oa_mean,oa_std,oa_n,mpjpe_mean,mpjpe_std,mpjpe_n,psnr_mean,psnr_std,psnr_n,psnr_infinite,ssim_mean,ssim_std,ssim_n";

fn metric_csv(r: Option<&MetricReport>) -> String {
    match r {
        Some(r) => format!(
            "{},{},{},{},{}",
            value_cols(r.oa_percent, 1.0),
            value_cols(r.mpjpe_px, 1.0),
            value_cols(r.psnr_db, 1.0),
            r.psnr_infinite,
            value_cols(r.ssim, 1.0)
        ),
        None => ",,0,,,0,,,0,0,,,0".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn fmt_delay(d: f64) -> String {
    if d.fract() == 0.0 {
        format!("{d:.0}")
    } else {
        format!("{d}")
    }
}

fn infinite_note(out: &mut String, rows: &[&AggregateRow]) {
    let inf: usize = rows.iter().filter_map(|r| r.report.as_ref()).map(|r| r.psnr_infinite).sum();
    if inf > 0 {
        let _ = writeln!(
            out,
            "∞ PSNR marks bit-exact reconstructions; {inf} such sample(s) are excluded from the PSNR means."
        );
    }
}

fn ablation_markdown(t: &AblationTable) -> String {
    let mut out = String::new();
    out.push_str("| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |\n");
    out.push_str("|:---:|:---:|:---:|---:|---:|---:|---:|\n");
    for r in &t.rows {
        let [oa, mp, ps, ss] = metric_cells(r.aggregate.report.as_ref(), 1.0);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {oa} | {mp} | {ps} | {ss} |",
            mark(r.rgb),
            mark(r.thermal),
            mark(r.descriptor)
        );
    }
    out.push('\n');
    let counts: Vec<String> = t
        .rows
        .iter()
        .map(|r| format!("{}/{}", r.aggregate.n_ok, r.aggregate.n_ok + r.aggregate.n_failed))
        .collect();
    let _ = writeln!(
        out,
        "Delay {} s. Scenarios: {}. Successful cells per row (n): {}.",
        fmt_delay(t.delay_s),
        t.scenarios.join(", "),
        counts.join(", ")
    );
    infinite_note(&mut out, &t.rows.iter().map(|r| &r.aggregate).collect::<Vec<_>>());
    out
}

fn ablation_csv(t: &AblationTable) -> String {
    let mut out = format!("delay_s,rgb,thermal,descriptor,n_ok,n_failed,{METRIC_CSV_HEADER}\n");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_delay(t.delay_s),
            r.rgb,
            r.thermal,
            r.descriptor,
            r.aggregate.n_ok,
            r.aggregate.n_failed,
            metric_csv(r.aggregate.report.as_ref())
        );
    }
    out
}

fn sweep_markdown(s: &SweepSeries) -> String {
    let mut out = String::new();
    out.push_str("| Delay (s) | OA | MPJPE | PSNR | SSIM×100 | Peak trace ΔT (°C) | n |\n");
    out.push_str("|---:|---:|---:|---:|---:|---:|---:|\n");
    for p in &s.points {
        let [oa, mp, ps, ss] = metric_cells(p.aggregate.report.as_ref(), 100.0);
        let dt = p.trace_peak_dt_c.map(|v| format!("{v:.2}")).unwrap_or_else(|| DASH.into());
        let _ = writeln!(
            out,
            "| {} | {oa} | {mp} | {ps} | {ss} | {dt} | {}/{} |",
            fmt_delay(p.delay_s),
            p.aggregate.n_ok,
            p.aggregate.n_ok + p.aggregate.n_failed
        );
    }
    out.push('\n');
    let _ = writeln!(out, "Scenarios: {}.", s.scenarios.join(", "));
    infinite_note(&mut out, &s.points.iter().map(|p| &p.aggregate).collect::<Vec<_>>());
    out
}

fn sweep_csv(s: &SweepSeries) -> String {
    let mut out = format!("delay_s,n_ok,n_failed,{METRIC_CSV_HEADER},trace_peak_dt_c\n");
    for p in &s.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_delay(p.delay_s),
            p.aggregate.n_ok,
            p.aggregate.n_failed,
            metric_csv(p.aggregate.report.as_ref()),
            num(p.trace_peak_dt_c)
        );
    }
    out
}

/// Long-format `(delay, metric, value)` rows; SSIM is multiplied by 100.
fn sweep_plot_data(s: &SweepSeries) -> String {
    let mut out = String::from("delay_s,metric,value\n");
    for p in &s.points {
        let d = fmt_delay(p.delay_s);
        if let Some(r) = &p.aggregate.report {
            let rows: [(&str, Option<f64>); 4] = [
                ("psnr_db", r.psnr_effective()),
                ("ssim_x100", r.ssim.map(|v| v.mean * 100.0)),
                ("mpjpe_px", r.mpjpe_px.map(|v| v.mean)),
                ("oa_percent", r.oa_percent.map(|v| v.mean)),
            ];
            for (name, v) in rows {
                if v.is_some() {
                    let _ = writeln!(out, "{d},{name},{}", num(v));
                }
            }
        }
        if p.trace_peak_dt_c.is_some() {
            let _ = writeln!(out, "{d},trace_peak_dt_c,{}", num(p.trace_peak_dt_c));
        }
    }
    out
}

fn generators_markdown(g: &GeneratorMatrix) -> String {
    let mut out = String::new();
    out.push_str("| Backend | OA | MPJPE | PSNR | SSIM | Status |\n");
    out.push_str("|:---|---:|---:|---:|---:|:---|\n");
    for r in &g.rows {
        let [oa, mp, ps, ss] = metric_cells(r.report.as_ref(), 1.0);
        let status = match &r.error {
            Some(e) => format!("failed: {}", md_escape(e)),
            None => "ok".into(),
        };
        let _ = writeln!(out, "| {} | {oa} | {mp} | {ps} | {ss} | {status} |", md_escape(&r.backend_id));
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "Scenario {}, delay {} s, descriptor backend {}.",
        g.scenario_id,
        fmt_delay(g.delay_s),
        g.describer_id
    );
    out
}

fn generators_csv(g: &GeneratorMatrix) -> String {
    let mut out = format!("scenario_id,delay_s,backend_id,status,{METRIC_CSV_HEADER},error\n");
    for r in &g.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&g.scenario_id),
            fmt_delay(g.delay_s),
            csv_field(&r.backend_id),
            if r.error.is_some() { "failed" } else { "ok" },
            metric_csv(r.report.as_ref()),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

fn ladder_markdown(l: &LadderLog) -> String {
    let mut out = String::new();
    out.push_str("| Level | Template | Description | OA | MPJPE | PSNR | SSIM |\n");
    out.push_str("|---:|:---|:---|---:|---:|---:|---:|\n");
    for e in &l.entries {
        let [oa, mp, ps, ss] = metric_cells(e.report.as_ref(), 1.0);
        let text = match (&e.sentence, &e.error) {
            (Some(s), _) => md_escape(s),
            (None, Some(err)) => format!("failed: {}", md_escape(err)),
            (None, None) => DASH.into(),
        };
        let _ = writeln!(out, "| {} | {} | {text} | {oa} | {mp} | {ps} | {ss} |", e.level, e.template_id);
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{} ladder on scenario {}, delay {} s.",
        match l.stage {
            Stage::Descriptor => "Descriptor",
            Stage::Editor => "Editor",
        },
        l.scenario_id,
        fmt_delay(l.delay_s)
    );
    out
}

fn ladder_csv(l: &LadderLog) -> String {
    let mut out = format!("stage,level,template_id,sentence,{METRIC_CSV_HEADER},error\n");
    for e in &l.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            l.stage,
            e.level,
            e.template_id,
            csv_field(e.sentence.as_deref().unwrap_or("")),
            metric_csv(e.report.as_ref()),
            csv_field(e.error.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Renders a summary to text.
pub fn render_report(output: &ExperimentOutput, format: ReportFormat) -> Result<String, ReportError> {
    if output.is_empty() {
        return Err(ReportError::Empty);
    }
    use ExperimentOutput::*;
    use ReportFormat::*;
    Ok(match (output, format) {
        (Ablation(t), Markdown) => ablation_markdown(t),
        (Ablation(t), Csv) => ablation_csv(t),
        (Sweep(s), Markdown) => sweep_markdown(s),
        (Sweep(s), Csv) => sweep_csv(s),
        (Sweep(s), PlotData) => sweep_plot_data(s),
        (Generators(g), Markdown) => generators_markdown(g),
        (Generators(g), Csv) => generators_csv(g),
        (Ladder(l), Markdown) => ladder_markdown(l),
        (Ladder(l), Csv) => ladder_csv(l),
        (_, f) => return Err(ReportError::Unsupported(f)),
    })
}

/// Renders and writes a report; nothing is created when rendering fails.
pub fn emit_report(output: &ExperimentOutput, format: ReportFormat, path: &Path) -> Result<PathBuf, ReportError> {
    let text = render_report(output, format)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| ReportError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

/// Per-cell wall-clock and backend latency.
pub fn timings_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("scenario_id,delay_s,backend_id,descriptor_template,editor_template,status,wall_ms,descriptor_latency_ms,editor_latency_ms,editor_from_cache\n");
    for r in results {
        let (status, d_ms, e_ms, cached) = match &r.outcome {
            super::CellOutcome::Ok { record, descriptor, .. } => (
                "ok",
                descriptor.as_ref().map(|d| d.latency_ms.to_string()).unwrap_or_default(),
                record.latency_ms.to_string(),
                record.from_cache.to_string(),
            ),
            super::CellOutcome::Failed { .. } => ("failed", String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{status},{},{d_ms},{e_ms},{cached}",
            csv_field(&r.cell.scenario_id),
            fmt_delay(r.cell.delay_s),
            csv_field(&r.cell.backend_id),
            r.cell.descriptor_template.as_deref().unwrap_or(""),
            r.cell.editor_template,
            r.wall_ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{AblationRow, SweepPoint};

    fn row(report: Option<MetricReport>, thermal: bool, descriptor: bool) -> AblationRow {
        AblationRow {
            rgb: true,
            thermal,
            descriptor,
            aggregate: AggregateRow {
                n_ok: report.is_some() as usize * 2,
                n_failed: report.is_none() as usize * 2,
                report,
            },
        }
    }

    fn two_sample_report() -> MetricReport {
        let a = MetricReport::sample(Some(17.0), Some(0.5), Some(10.0), Some(70.0)).unwrap();
        let b = MetricReport::sample(Some(19.0), Some(0.7), Some(12.0), Some(80.0)).unwrap();
        crate::metrics::aggregate(&[a, b]).unwrap()
    }

    #[test]
    fn ablation_markdown_layout() {
        let t = AblationTable {
            delay_s: 30.0,
            scenarios: vec!["a".into(), "b".into()],
            rows: vec![row(None, false, false), row(Some(two_sample_report()), true, false), row(Some(two_sample_report()), true, true)],
        };
        let md = render_report(&ExperimentOutput::Ablation(t), ReportFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |");
        assert_eq!(lines[2], "| ✓ | ✗ | ✗ | — | — | — | — |");
        assert_eq!(lines[3], "| ✓ | ✓ | ✗ | 75.00 ± 7.07 | 11.00 ± 1.41 | 18.00 ± 1.41 | 0.60 ± 0.14 |");
    }

    #[test]
    fn sweep_plot_data_scales_ssim() {
        let s = SweepSeries {
            scenarios: vec!["a".into()],
            points: vec![SweepPoint {
                delay_s: 5.0,
                aggregate: AggregateRow {
                    report: Some(MetricReport::sample(Some(f64::INFINITY), Some(0.5), None, Some(90.0)).unwrap()),
                    n_ok: 1,
                    n_failed: 0,
                },
                trace_peak_dt_c: Some(3.25),
            }],
        };
        let out = render_report(&ExperimentOutput::Sweep(s), ReportFormat::PlotData).unwrap();
        assert_eq!(
            out,
            "delay_s,metric,value\n5,psnr_db,inf\n5,ssim_x100,50.000000\n5,oa_percent,90.000000\n5,trace_peak_dt_c,3.250000\n"
        );
    }

    #[test]
    fn empty_results_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/table.md");
        let empty = ExperimentOutput::Ablation(AblationTable {
            delay_s: 30.0,
            scenarios: vec![],
            rows: vec![],
        });
        assert!(matches!(emit_report(&empty, ReportFormat::Markdown, &path), Err(ReportError::Empty)));
        assert!(!path.exists());
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn output_json_round_trip() {
        let t = ExperimentOutput::Ablation(AblationTable {
            delay_s: 30.0,
            scenarios: vec!["a".into()],
            rows: vec![row(Some(two_sample_report()), true, true)],
        });
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"experiment\":\"ablation\""));
        let back: ExperimentOutput = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_quotes_fields() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
