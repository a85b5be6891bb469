//! End-to-end tests of the command line through the compiled binary:
//! every subcommand, the exit-code contract, and byte-level determinism
//! of the artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ltmlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ltmlab"))
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (
        status.code().expect("no signal"),
        String::from_utf8(stdout).expect("utf8 stdout"),
        String::from_utf8(stderr).expect("utf8 stderr"),
    )
}

fn run_ok(cmd: &mut Command) -> String {
    let (code, stdout, stderr) = run(cmd);
    assert_eq!(code, 0, "stdout:\n{stdout}\nstderr:\n{stderr}");
    stdout
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write test file");
}

const SMOKE_MANIFEST: &str = r#"
schema_version = 1
seed = 11
l_seq = 16

[[source]]
kind = "synth"
name = "main"
total_points = 30000
"#;

/// Ingests the smoke manifest into `dir` and returns the cache path.
fn smoke_cache(dir: &Path) -> PathBuf {
    let manifest = dir.join("smoke.toml");
    write(&manifest, SMOKE_MANIFEST);
    let cache = dir.join("smoke.corpus");
    run_ok(ltmlab().args(["ingest", "--manifest"]).arg(&manifest).arg("--out").arg(&cache));
    cache
}

fn smoke_run_config(cache: &Path, lr_max: &str) -> String {
    format!(
        r#"
corpus = "{}"
out = "run"

[model]
d_m = 8
n_layers = 1
l_seq = 16

[train]
lr_max = {lr_max}
batch_size = 8
total_steps = 40
warmup_steps = 4
eval_every = 20
eval_fraction = 1.0
seed = 5
"#,
        cache.display(),
    )
}

/// Log lines with the wall-clock field dropped, for determinism checks.
fn log_modulo_wall_clock(path: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(path).expect("log exists");
    text.lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).expect("log line parses");
            v.as_object_mut().expect("object").remove("wall_clock_s");
            v
        })
        .collect()
}

#[test]
fn ingest_writes_cache_and_reingest_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let manifest = tmp.path().join("smoke.toml");
    write(&manifest, SMOKE_MANIFEST);

    let stdout = run_ok(ltmlab().args(["ingest", "--manifest"]).arg(&manifest));
    assert!(stdout.contains("cache written"), "{stdout}");
    assert!(stdout.contains("main/ar2-oscillatory"), "{stdout}");
    let default_cache = tmp.path().join("smoke.corpus");
    assert!(default_cache.exists());
    let first = std::fs::read(&default_cache).unwrap();

    run_ok(ltmlab().args(["ingest", "--manifest"]).arg(&manifest));
    assert_eq!(first, std::fs::read(&default_cache).unwrap());

    // the environment variable moves the default cache location
    let cache_dir = tmp.path().join("shared-caches");
    run_ok(
        ltmlab()
            .args(["ingest", "--manifest"])
            .arg(&manifest)
            .env("LTMLAB_CACHE_DIR", &cache_dir),
    );
    assert_eq!(first, std::fs::read(cache_dir.join("smoke.corpus")).unwrap());
}

#[test]
fn ingest_warns_when_one_source_dominates() {
    let tmp = TempDir::new().unwrap();
    let mut rows = String::from("id,value\n");
    for i in 0..3000 {
        rows += &format!("big,{}\n", (i as f64 * 0.01).sin());
    }
    write(&tmp.path().join("big.csv"), &rows);
    write(
        &tmp.path().join("mix.toml"),
        r#"
schema_version = 1
seed = 3
l_seq = 16

[[source]]
kind = "synth"
name = "main"
total_points = 2000

[[source]]
kind = "csv"
name = "bigcsv"
path = "big.csv"
"#,
    );
    let stdout = run_ok(ltmlab().args(["ingest", "--manifest"]).arg(tmp.path().join("mix.toml")));
    assert!(stdout.contains("warning"), "{stdout}");
    assert!(
        stdout.contains("bigcsv") && stdout.contains("60.0%"),
        "{stdout}"
    );
}

#[test]
fn train_smoke_run_produces_artifacts_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let cache = smoke_cache(tmp.path());

    let dir_a = tmp.path().join("a");
    std::fs::create_dir(&dir_a).unwrap();
    let config_a = dir_a.join("run.toml");
    write(&config_a, &smoke_run_config(&cache, "3e-3"));
    let stdout = run_ok(ltmlab().args(["train", "--config"]).arg(&config_a));
    assert!(stdout.contains("[COMPLETED]"), "{stdout}");
    assert!(stdout.contains("min_crps="), "{stdout}");

    let run_a = dir_a.join("run");
    for artifact in ["config.toml", "log.jsonl", "model.ckpt", "best.ckpt", "summary.json"] {
        assert!(run_a.join(artifact).exists(), "missing {artifact}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_a.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "COMPLETED");
    assert_eq!(summary["evals"], 2);

    // identical config in a fresh directory reproduces the log bit for bit
    let dir_b = tmp.path().join("b");
    std::fs::create_dir(&dir_b).unwrap();
    let config_b = dir_b.join("run.toml");
    write(&config_b, &smoke_run_config(&cache, "3e-3"));
    run_ok(ltmlab().args(["train", "--config"]).arg(&config_b));
    assert_eq!(
        log_modulo_wall_clock(&run_a.join("log.jsonl")),
        log_modulo_wall_clock(&dir_b.join("run/log.jsonl")),
    );
    assert_eq!(
        std::fs::read(run_a.join("best.ckpt")).unwrap(),
        std::fs::read(dir_b.join("run/best.ckpt")).unwrap(),
    );
}

#[test]
fn train_exit_code_mirrors_divergence() {
    let tmp = TempDir::new().unwrap();
    let cache = smoke_cache(tmp.path());
    let config = tmp.path().join("hot.toml");
    write(&config, &smoke_run_config(&cache, "1e300"));
    let (code, stdout, _) = run(ltmlab().args(["train", "--config"]).arg(&config));
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("[DIVERGED]"), "{stdout}");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("run/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["status"], "DIVERGED");
}

#[test]
fn train_usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let (code, _, stderr) =
        run(ltmlab().args(["train", "--config"]).arg(tmp.path().join("absent.toml")));
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("error:"), "{stderr}");

    // config pointing at a missing corpus is also a setup problem
    let config = tmp.path().join("run.toml");
    write(&config, &smoke_run_config(&tmp.path().join("nocache.corpus"), "1e-3"));
    let (code, _, stderr) = run(ltmlab().args(["train", "--config"]).arg(&config));
    assert_eq!(code, 2, "{stderr}");
}

const SWEEP_MANIFEST: &str = r#"
schema_version = 1
seed = 29
l_seq = 8

[[source]]
kind = "synth"
name = "main"
total_points = 20000
"#;

fn lr_sweep_plan(cache: &Path, out: &str) -> String {
    format!(
        r#"
kind = "lr_sweep"
seed = 41
out = "{out}"
corpus = "{}"
lrs = [1e-4, 3e-4, 1e-3, 3e-3, 1e300]

[model]
d_m = 4
n_layers = 1
l_seq = 8

[train]
lr_max = 1e-3
batch_size = 2
total_steps = 12
warmup_steps = 2
eval_every = 6
seed = 0

[[models]]
d_m = 4
n_layers = 1

[[models]]
d_m = 8
n_layers = 1

[[models]]
d_m = 12
n_layers = 1
"#,
        cache.display(),
    )
}

fn sweep_cache(dir: &Path) -> PathBuf {
    let manifest = dir.join("sweep.toml");
    write(&manifest, SWEEP_MANIFEST);
    let cache = dir.join("sweep.corpus");
    run_ok(ltmlab().args(["ingest", "--manifest"]).arg(&manifest).arg("--out").arg(&cache));
    cache
}

#[test]
fn lr_sweep_enumerates_grid_and_selects_best_surviving_rate() {
    let tmp = TempDir::new().unwrap();
    let cache = sweep_cache(tmp.path());
    let plan = tmp.path().join("plan.toml");
    write(&plan, &lr_sweep_plan(&cache, "campaign"));

    let stdout = run_ok(ltmlab().args(["sweep", "--plan"]).arg(&plan));
    assert!(stdout.contains("best learning rate per size"), "{stdout}");
    let campaign = tmp.path().join("campaign");
    assert!(campaign.join("plan.toml").exists());
    assert!(campaign.join("report.txt").exists());

    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(campaign.join("index.json")).unwrap())
            .unwrap();
    let cells = index["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 15);
    for cell in cells {
        let status = cell["status"].as_str().unwrap();
        assert!(status == "COMPLETED" || status == "DIVERGED", "{cell}");
        // lr sweeps never back off; diverged rates are data
        assert_eq!(cell["retries"], 0);
        let run_dir = campaign.join(cell["run"].as_str().unwrap());
        assert!(run_dir.join("summary.json").exists());
    }
    let diverged: Vec<&str> = cells
        .iter()
        .filter(|c| c["status"] == "DIVERGED")
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(diverged.len(), 3, "{diverged:?}");
    assert!(diverged.iter().all(|id| id.ends_with("lr4")));

    let selection: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(campaign.join("selection.json")).unwrap())
            .unwrap();
    let sizes = selection["sizes"].as_array().unwrap();
    assert_eq!(sizes.len(), 3);
    for size in sizes {
        let best = size["best_lr_max"].as_f64().unwrap();
        assert!(best <= 3e-3, "diverged rate selected: {size}");
        assert_eq!(size["excluded_lrs"], serde_json::json!([1e300]));
        assert!(size["best_crps"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn sweep_runs_match_across_parallelism() {
    let tmp = TempDir::new().unwrap();
    let cache = sweep_cache(tmp.path());

    // two sizes x two rates, serial coordinator vs worker processes
    let plan_text = |out: &str| {
        format!(
            r#"
kind = "lr_sweep"
seed = 41
out = "{out}"
corpus = "{}"
lrs = [3e-4, 1e-3]

[model]
d_m = 4
n_layers = 1
l_seq = 8

[train]
lr_max = 1e-3
batch_size = 2
total_steps = 12
warmup_steps = 2
eval_every = 6

[[models]]
d_m = 4
n_layers = 1

[[models]]
d_m = 8
n_layers = 1
"#,
            cache.display(),
        )
    };
    let serial = tmp.path().join("serial.toml");
    write(&serial, &plan_text("serial"));
    run_ok(ltmlab().args(["sweep", "--plan"]).arg(&serial));
    let parallel = tmp.path().join("parallel.toml");
    write(&parallel, &plan_text("parallel"));
    run_ok(ltmlab().args(["sweep", "--plan", parallel.to_str().unwrap(), "--parallel", "3"]));

    for cell in ["size-d004-l1-lr0", "size-d004-l1-lr1", "size-d008-l1-lr0", "size-d008-l1-lr1"] {
        let a = tmp.path().join("serial/cells").join(cell).join("run/log.jsonl");
        let b = tmp.path().join("parallel/cells").join(cell).join("run/log.jsonl");
        assert_eq!(log_modulo_wall_clock(&a), log_modulo_wall_clock(&b), "{cell}");
    }
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("serial/report.txt")).unwrap(),
        std::fs::read_to_string(tmp.path().join("parallel/report.txt")).unwrap(),
    );
}

#[test]
fn sweep_rejects_invalid_plans_before_any_run() {
    let tmp = TempDir::new().unwrap();
    let plan = tmp.path().join("wide.toml");
    write(
        &plan,
        r#"
kind = "param_scaling"
out = "campaign"
corpus = "cache.corpus"

[model]
d_m = 8
n_layers = 1
l_seq = 8

[train]
lr_max = 1e-3

[[models]]
d_m = 72
n_layers = 1
"#,
    );
    let (code, _, stderr) = run(ltmlab().args(["sweep", "--plan"]).arg(&plan));
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("aspect ratio"), "{stderr}");
    assert!(!tmp.path().join("campaign").exists());
}

#[test]
fn fit_reads_campaigns_and_rejects_missing_dirs() {
    let tmp = TempDir::new().unwrap();
    let cache = sweep_cache(tmp.path());
    let plan = tmp.path().join("plan.toml");
    write(
        &plan,
        &format!(
            r#"
kind = "param_scaling"
seed = 13
out = "campaign"
corpus = "{}"

[model]
d_m = 4
n_layers = 1
l_seq = 8

[train]
lr_max = 1e-3
batch_size = 2
total_steps = 60
warmup_steps = 6
eval_every = 12

[[models]]
d_m = 4
n_layers = 1

[[models]]
d_m = 8
n_layers = 1

[[models]]
d_m = 12
n_layers = 1
"#,
            cache.display(),
        ),
    );
    run_ok(ltmlab().args(["sweep", "--plan"]).arg(&plan));
    let campaign = tmp.path().join("campaign");

    let stdout = run_ok(
        ltmlab().args(["fit", "--campaign", campaign.to_str().unwrap(), "--axis", "params"]),
    );
    assert!(stdout.contains("points: 3"), "{stdout}");
    assert!(stdout.contains("headline:"), "{stdout}");
    assert!(campaign.join("fit-params-loglik.txt").exists());
    let svg = std::fs::read_to_string(campaign.join("fit-params-loglik.svg")).unwrap();
    assert!(svg.contains("ltmlab-svg v1"));

    // the compute axis builds the frontier across runs before fitting
    let stdout = run_ok(ltmlab().args([
        "fit",
        "--campaign",
        campaign.to_str().unwrap(),
        "--axis",
        "compute",
        "--metric",
        "crps",
    ]));
    assert!(stdout.contains("axis=compute"), "{stdout}");
    assert!(campaign.join("fit-compute-crps.svg").exists());

    let report = run_ok(ltmlab().args(["report", "--campaign", campaign.to_str().unwrap()]));
    assert!(report.contains("param_scaling"), "{report}");
    assert!(report.contains("size-d012-l1"), "{report}");

    let (code, _, stderr) =
        run(ltmlab().args(["fit", "--campaign", "/nonexistent/campaign", "--axis", "params"]));
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("does not exist"), "{stderr}");
}

#[test]
fn forecast_is_deterministic_and_horizon_zero_is_header_only() {
    let tmp = TempDir::new().unwrap();
    let cache = smoke_cache(tmp.path());
    let config = tmp.path().join("run.toml");
    write(&config, &smoke_run_config(&cache, "1e-3"));
    run_ok(ltmlab().args(["train", "--config"]).arg(&config));
    let checkpoint = tmp.path().join("run/model.ckpt");

    let mut rows = String::from("value\n");
    for i in 0..48 {
        rows += &format!("{}\n", (i as f64 * 0.3).sin() * 2.0 + 5.0);
    }
    let series = tmp.path().join("series.csv");
    write(&series, &rows);

    let out_a = tmp.path().join("fc-a");
    let stdout = run_ok(ltmlab().args([
        "forecast",
        "--checkpoint", checkpoint.to_str().unwrap(),
        "--series", series.to_str().unwrap(),
        "--horizon", "8",
        "--n-samples", "5",
        "--seed", "3",
        "--context", "40",
        "--out", out_a.to_str().unwrap(),
    ]));
    assert!(stdout.contains("held-out"), "{stdout}");
    let csv_a = std::fs::read(out_a.with_extension("csv")).unwrap();
    let text_a = String::from_utf8(csv_a.clone()).unwrap();
    assert!(text_a.starts_with("# ltmlab-forecast v1\n"));
    assert_eq!(text_a.lines().count(), 2 + 8);
    assert!(text_a.lines().nth(1).unwrap().ends_with("sample_4"));
    assert!(out_a.with_extension("svg").exists());

    let out_b = tmp.path().join("fc-b");
    run_ok(ltmlab().args([
        "forecast",
        "--checkpoint", checkpoint.to_str().unwrap(),
        "--series", series.to_str().unwrap(),
        "--horizon", "8",
        "--n-samples", "5",
        "--seed", "3",
        "--context", "40",
        "--out", out_b.to_str().unwrap(),
    ]));
    assert_eq!(csv_a, std::fs::read(out_b.with_extension("csv")).unwrap());

    let out_c = tmp.path().join("fc-c");
    run_ok(ltmlab().args([
        "forecast",
        "--checkpoint", checkpoint.to_str().unwrap(),
        "--series", series.to_str().unwrap(),
        "--horizon", "0",
        "--out", out_c.to_str().unwrap(),
    ]));
    let text_c = std::fs::read_to_string(out_c.with_extension("csv")).unwrap();
    assert_eq!(text_c.lines().count(), 2);

    let (code, _, stderr) = run(ltmlab().args([
        "forecast",
        "--checkpoint", "/nonexistent.ckpt",
        "--series", series.to_str().unwrap(),
        "--horizon", "4",
    ]));
    assert_eq!(code, 2, "{stderr}");
}
