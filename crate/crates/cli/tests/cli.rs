use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gcfg_lab::output::{run_to_dir, SAMPLES};
use gcfg_lab::sweep::{sweep, sweep_csv};
use gcfg_lab::{plot, recipes, ExperimentConfig, LabError, Prepared, Range};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gcfg-lab");

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Quadrant world guided by `left` and `top` from the analytic oracle.
fn quadrant_pair(batch: usize, steps: usize) -> ExperimentConfig {
    config(&format!(
        r#"{{
            "world": {{ "kind": "quadrant" }},
            "predictors": {{ "oracle": {{ "kind": "analytic" }} }},
            "stack": {{
                "base": "oracle",
                "terms": [
                    {{ "predictor": "oracle", "condition": "left", "weight": 1.0 }},
                    {{ "predictor": "oracle", "condition": "top", "weight": 1.0 }}
                ]
            }},
            "sampler": {{ "kind": "ddim", "num_inference_steps": {steps}, "eta": 0.0, "batch": {batch} }},
            "metrics": [
                {{ "kind": "assignment_rate", "name": "left", "condition": "left" }},
                {{ "kind": "assignment_rate", "name": "top", "condition": "top" }}
            ]
        }}"#
    ))
}

#[test]
fn every_recipe_parses_and_validates() {
    for name in recipes::names() {
        let c = recipes::recipe(name).unwrap();
        c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let err = ExperimentConfig::from_json(
        r#"{ "world": { "kind": "quadrant" }, "predictors": {}, "w1": 2.0 }"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("w1"), "{err}");
}

#[test]
fn validation_names_the_undeclared_id_and_every_violation() {
    let c = config(
        r#"{
            "world": { "kind": "quadrant" },
            "predictors": { "oracle": { "kind": "analytic" } },
            "stack": {
                "base": "oracle",
                "terms": [{ "predictor": "ghost", "condition": "left", "weight": 1.0 }]
            },
            "sampler": { "kind": "ddim", "num_inference_steps": 0, "eta": 0.0, "batch": 10 }
        }"#,
    );
    let err = c.validate().unwrap_err();
    let LabError::Invalid(violations) = &err else {
        panic!("expected a validation error, got {err}");
    };
    assert!(violations.len() >= 2, "{violations:?}");
    assert!(
        violations.iter().any(|v| v.contains("ghost")),
        "{violations:?}"
    );
    assert!(
        violations.iter().any(|v| v.starts_with("sampler")),
        "{violations:?}"
    );
}

#[test]
fn invalid_config_exits_nonzero_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{ "world": { "kind": "quadrant" }, "predictors": {},
             "stack": { "base": "missing", "terms": [] } }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args([
            "run",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    assert!(!out_dir.exists());
}

#[test]
fn reruns_write_identical_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = recipes::recipe("gaussian-exactness").unwrap();
    c.sampler.batch = 500;
    let mut hashes = Vec::new();
    for k in 0..2 {
        c.output_dir = dir.path().join(format!("run{k}"));
        run_to_dir(&c).unwrap();
        hashes.push(manifest(&c.output_dir)["artifacts"][SAMPLES].clone());
    }
    let a = fs::read(dir.path().join("run0").join(SAMPLES)).unwrap();
    let b = fs::read(dir.path().join("run1").join(SAMPLES)).unwrap();
    assert_eq!(a, b);
    assert_eq!(hashes[0], hashes[1]);

    c.seed = 1;
    c.output_dir = dir.path().join("other");
    run_to_dir(&c).unwrap();
    assert_ne!(a, fs::read(c.output_dir.join(SAMPLES)).unwrap());
}

#[test]
fn samples_csv_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quadrant_pair(50, 10);
    c.output_dir = dir.path().to_path_buf();
    run_to_dir(&c).unwrap();
    let text = fs::read_to_string(dir.path().join(SAMPLES)).unwrap();
    assert_eq!(text.lines().next(), Some("index,x0,x1,assigned_component"));
    assert_eq!(text.lines().count(), 51);
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("metric,value,details"));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    assert!(m["seeds"]["sources"]["main"].is_u64());
    assert!(m["world_hash"].is_string());
}

#[test]
fn mid_run_failure_leaves_a_failed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // a directory where samples.csv should go makes the write fail after sampling
    fs::create_dir_all(dir.path().join(SAMPLES)).unwrap();
    let mut c = quadrant_pair(20, 5);
    c.output_dir = dir.path().to_path_buf();
    assert!(run_to_dir(&c).is_err());
    let m = manifest(dir.path());
    assert_eq!(m["status"], "failed");
    assert!(m["error"].is_string());
}

#[test]
fn grid_ranges_include_both_ends() {
    let r: Range = "0:2:0.25".parse().unwrap();
    let v = r.values();
    assert_eq!(v.len(), 9);
    assert_eq!(v[0], 0.0);
    assert_eq!(v[8], 2.0);
    assert_eq!("1:1:0.5".parse::<Range>().unwrap().values(), vec![1.0]);
    for bad in ["0:2", "0:2:0", "2:0:0.5", "a:b:c", "0:2:-1"] {
        assert!(bad.parse::<Range>().is_err(), "{bad}");
    }
}

#[test]
fn sweep_covers_81_sorted_cells_with_fixed_seeds() {
    let prepared = Prepared::new(quadrant_pair(64, 10)).unwrap();
    let grid: Range = "0:2:0.25".parse().unwrap();
    let rows = sweep(&prepared, &grid, &grid, Some(2)).unwrap();
    assert_eq!(rows.len(), 81 * 2);
    let mut cells: Vec<(f64, f64)> = rows.iter().map(|r| (r.w1, r.w2)).collect();
    assert!(cells.windows(2).all(|p| p[0] <= p[1]));
    cells.dedup();
    assert_eq!(cells.len(), 81);

    let again = sweep(&prepared, &grid, &grid, Some(1)).unwrap();
    assert_eq!(sweep_csv(&rows).unwrap(), sweep_csv(&again).unwrap());
    assert_ne!(prepared.cell_seed((0, 0)), prepared.cell_seed((0, 1)));
    assert_ne!(prepared.cell_seed((0, 1)), prepared.cell_seed((1, 0)));
}

#[test]
fn sweep_rejects_stacks_with_fewer_than_two_terms() {
    let prepared = Prepared::new(recipes::recipe("interpolation").unwrap()).unwrap();
    let grid: Range = "0:1:1".parse().unwrap();
    assert!(matches!(
        sweep(&prepared, &grid, &grid, None),
        Err(LabError::SweepStack)
    ));
}

#[test]
fn zero_control_weight_keeps_the_control_rate_at_its_base_rate() {
    let batch = 2000;
    let prepared = Prepared::new(quadrant_pair(batch, 50)).unwrap();
    let w1: Range = "0:2:0.25".parse().unwrap();
    let w2: Range = "0:0:1".parse().unwrap();
    let rows = sweep(&prepared, &w1, &w2, None).unwrap();
    let base = 0.5;
    // four binomial standard deviations
    let tolerance = 4.0 * (base * (1.0 - base) / batch as f64).sqrt();
    let top: Vec<f64> = rows
        .iter()
        .filter(|r| r.metric == "assignment_rate.top")
        .map(|r| r.value)
        .collect();
    assert_eq!(top.len(), 9);
    for v in top {
        assert!((v - base).abs() <= tolerance, "top rate {v}");
    }
}

#[test]
fn cell_at_the_origin_reproduces_the_unconditional_baseline() {
    let baseline = recipes::recipe("uncond-baseline").unwrap();
    let mut c = baseline.clone();
    c.predictors.insert(
        "shifted".into(),
        serde_json::from_str(
            r#"{ "kind": "analytic", "world": { "kind": "gaussian",
                 "mean": [4.0, 0.0], "covariance": [[1.0, 0.0], [0.0, 1.0]] } }"#,
        )
        .unwrap(),
    );
    c.stack = Some(
        serde_json::from_value(serde_json::json!({
            "base": baseline.stack.as_ref().unwrap().base,
            "terms": [
                { "predictor": "shifted", "weight": 1.0 },
                { "predictor": "shifted", "weight": 1.0 }
            ]
        }))
        .unwrap(),
    );
    let prepared = Prepared::new(c).unwrap();
    let rows = prepared.execute_cell(&[0.0, 0.0], (0, 0)).unwrap();
    let get = |name: &str| rows.iter().find(|r| r.metric == name).unwrap().value;
    assert!(get("max_mean_error") <= 0.05);
    assert!(get("max_covariance_error") <= 0.1);

    let reference = Prepared::new(baseline).unwrap().execute().unwrap();
    for name in ["mean[0]", "mean[1]", "cov[0][0]", "cov[1][1]"] {
        let want = reference.metric(name).unwrap();
        assert!(
            (get(name) - want).abs() <= 0.1,
            "{name}: {} vs {want}",
            get(name)
        );
    }
}

#[test]
fn uncond_baseline_recipe_runs_under_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = Command::new(BIN)
        .current_dir(dir.path())
        .args(["run", "uncond-baseline"])
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(elapsed < 60.0, "{elapsed} s");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("tolerance 0.05: pass"), "{stdout}");
    assert!(stdout.contains("tolerance 0.1: pass"), "{stdout}");
    assert!(dir
        .path()
        .join("runs/uncond-baseline")
        .join(SAMPLES)
        .exists());
}

#[test]
fn plotting_an_empty_sample_set_fails_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("samples.csv");
    fs::write(&csv, "index,x0,x1,assigned_component\n").unwrap();
    let out = dir.path().join("plots");
    assert!(plot::plot(&csv, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn sweep_csv_gives_one_deterministic_heatmap_per_metric() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    fs::write(
        &csv,
        "w1,w2,metric,value\n0,0,a,0.1\n0,1,a,0.2\n0,0,b,1\n0,1,b,2\n1,0,a,0.3\n1,1,a,0.4\n1,0,b,3\n1,1,b,4\n",
    )
    .unwrap();
    let first = plot::plot(&csv, &dir.path().join("p1")).unwrap();
    let second = plot::plot(&csv, &dir.path().join("p2")).unwrap();
    assert_eq!(first.len(), 2);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        assert!(fs::read_to_string(a).unwrap().starts_with("<svg"));
    }
}

#[test]
fn plot_command_renders_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quadrant_pair(100, 10);
    c.output_dir = dir.path().to_path_buf();
    run_to_dir(&c).unwrap();
    let out = Command::new(BIN)
        .args(["plot", dir.path().join(SAMPLES).to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("samples.svg").exists());
}

#[test]
fn recipes_command_lists_every_recipe() {
    let out = Command::new(BIN).arg("recipes").output().unwrap();
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().collect::<Vec<_>>(), recipes::names());
}
