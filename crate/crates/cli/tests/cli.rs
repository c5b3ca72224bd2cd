use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 11] = [
    "simulate",
    "ingest",
    "traces",
    "describe",
    "reconstruct",
    "evaluate",
    "ablate",
    "sweep",
    "compare-generators",
    "prompt-ladder",
    "report",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chronolens"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Simulated scenarios plus a config without retry back-off.
fn workspace() -> (tempfile::TempDir, Vec<PathBuf>) {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--seed", "3", "simulate", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifests: Vec<PathBuf> = stdout(&o).lines().map(PathBuf::from).collect();
    assert_eq!(manifests.len(), 3);
    std::fs::write(dir.path().join("fast.json"), r#"{"retry_base_delay_s": 0}"#).unwrap();
    (dir, manifests)
}

fn manifest_args(ms: &[PathBuf]) -> Vec<String> {
    ms.iter().flat_map(|m| ["--manifest".to_string(), m.display().to_string()]).collect()
}

fn run_owned(dir: &Path, args: Vec<String>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(dir, &refs)
}

#[test]
fn help_exits_zero_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    for sub in SUBCOMMANDS {
        let o = run(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[])), 1);
    assert_eq!(code(&run(dir.path(), &["ablate", "--bogus"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    // no manifest at all
    assert_eq!(code(&run(dir.path(), &["ablate", "--backend", "mock-gt"])), 1);
}

#[test]
fn simulate_writes_manifests_and_frames() {
    let (dir, ms) = workspace();
    for m in &ms {
        let m = dir.path().join(m);
        assert!(m.is_file());
        let files = std::fs::read_dir(m.parent().unwrap()).unwrap().count();
        assert!(files > 5, "only {files} files next to {}", m.display());
    }
    let o = run_owned(dir.path(), [vec!["ingest".into()], manifest_args(&ms)].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stdout(&o).contains("delays [5.0, 15.0, 30.0, 120.0]"));
}

#[test]
fn ablate_with_ground_truth_backend_gives_perfect_table() {
    let (dir, ms) = workspace();
    let args = [
        vec!["ablate".to_string()],
        manifest_args(&ms),
        ["--backend", "mock-gt", "--delay", "30"].map(String::from).to_vec(),
    ]
    .concat();
    let o = run_owned(dir.path(), args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |"));
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("| ✓")).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.contains("100.00 ± 0.00 | 0.00 ± 0.00 | ∞ | 1.00 ± 0.00"), "{r}");
    }
}

#[test]
fn unknown_backend_is_a_validation_error() {
    let (dir, ms) = workspace();
    let o = run(
        dir.path(),
        &["reconstruct", "--manifest", ms[0].to_str().unwrap(), "--backend", "nosuch", "--out", "x.png"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown backend"));
    assert!(!dir.path().join("x.png").exists());
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["traces", "--manifest", "nope.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failing_backend_exits_three_and_partial_failure_four() {
    let (dir, ms) = workspace();
    let m = ms[0].to_str().unwrap();
    let o = run(dir.path(), &["--config", "fast.json", "ablate", "--manifest", m, "--backend", "mock-fail"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = run(
        dir.path(),
        &["--config", "fast.json", "compare-generators", "--manifest", m, "--backends", "mock-gt,mock-fail", "--describer", "mock-gt"],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    // the partial table is still emitted
    assert!(stdout(&o).contains("| mock-gt |"));
    assert!(stdout(&o).contains("| mock-fail |"));
}

#[test]
fn unreachable_http_backend_is_a_backend_failure() {
    let (dir, ms) = workspace();
    std::fs::write(
        dir.path().join("http.json"),
        r#"{"retry_base_delay_s": 0, "request_timeout_s": 2,
            "backends": [{"backend_id": "remote", "kind": "http"}]}"#,
    )
    .unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = bin()
        .current_dir(dir.path())
        .env("CHRONOLENS_BACKEND_REMOTE_URL", format!("http://127.0.0.1:{port}"))
        .args(["--config", "http.json", "describe", "--manifest", ms[0].to_str().unwrap()])
        .args(["--backend", "remote", "--delay", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    // without the URL variable the registry cannot build it
    let o = bin()
        .current_dir(dir.path())
        .env_remove("CHRONOLENS_BACKEND_REMOTE_URL")
        .args(["--config", "http.json", "describe", "--manifest", ms[0].to_str().unwrap()])
        .args(["--backend", "remote", "--delay", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn saved_results_render_identically_through_report() {
    let (dir, ms) = workspace();
    let args = [
        vec!["sweep".to_string()],
        manifest_args(&ms),
        ["--backend", "mock-identity", "--save", "sweep.json", "--format", "csv"].map(String::from).to_vec(),
    ]
    .concat();
    let o = run_owned(dir.path(), args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let direct = stdout(&o);
    assert_eq!(direct.lines().count(), 5);
    let o = run(dir.path(), &["report", "--input", "sweep.json", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), direct);
    let o = run(dir.path(), &["report", "--input", "sweep.json", "--format", "plot-data"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("delay_s,metric,value\n"));
}

#[test]
fn plot_data_outside_sweep_is_rejected_before_running() {
    let (dir, ms) = workspace();
    let o = run(
        dir.path(),
        &["ablate", "--manifest", ms[0].to_str().unwrap(), "--backend", "mock-gt", "--format", "plot-data"],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn plan_file_drives_a_ladder_into_an_output_directory() {
    let (dir, ms) = workspace();
    let plan = serde_json::json!({
        "manifests": [ms[0]],
        "backends": ["mock-gt"],
        "delay_s": 15,
        "ladder_stages": ["descriptor", "editor"],
        "out_dir": "results",
    });
    std::fs::write(dir.path().join("plan.json"), plan.to_string()).unwrap();
    let o = run(dir.path(), &["prompt-ladder", "--plan", "plan.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results = dir.path().join("results");
    for f in ["ladder-descriptor.md", "ladder-editor.md", "timings.csv"] {
        assert!(results.join(f).is_file(), "{f}");
    }
    let editor = std::fs::read_to_string(results.join("ladder-editor.md")).unwrap();
    assert_eq!(editor.lines().filter(|l| l.starts_with("| ") && l.contains("edit-")).count(), 4);
    let timings = std::fs::read_to_string(results.join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 9);
}

#[test]
fn reconstruct_then_evaluate() {
    let (dir, ms) = workspace();
    let m = ms[1].to_str().unwrap();
    let o = run(dir.path(), &["reconstruct", "--manifest", m, "--backend", "mock-gt", "--delay", "15", "--out", "r.png"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(meta["editor_template_id"], "gen-description");
    let o = run(dir.path(), &["evaluate", "--manifest", m, "--candidate", "r.png", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["ssim"]["mean"], 1.0);
    assert_eq!(r["psnr_infinite"], 1);

    let o = run(
        dir.path(),
        &["reconstruct", "--manifest", m, "--backend", "mock-identity", "--no-descriptor", "--no-thermal", "--out", "id.png"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(meta["editor_template_id"], "gen-rgb");
}

#[test]
fn traces_report_grades() {
    let (dir, ms) = workspace();
    let o = run(dir.path(), &["traces", "--manifest", ms[0].to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    let docs: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let docs = docs.as_array().unwrap();
    assert_eq!(docs.len(), 4);
    let rank = |g: &serde_json::Value| ["faint", "moderate", "strong"].iter().position(|x| g == x).unwrap();
    let grades: Vec<usize> = docs.iter().map(|d| rank(&d["inventory"]["regions"][0]["grade"])).collect();
    assert_eq!(grades[0], 2);
    // sensor noise lifts the peak, so only the ordering is checked here
    assert!(grades.windows(2).all(|w| w[1] <= w[0]), "{grades:?}");
}
