//! End-to-end tests of the `optforest` binary: every subcommand, exit
//! codes, and seed-driven determinism of the outputs.

use optforest::bench::load_csv;
use optforest::forest::Forest;
use optforest::grow::GrowConfig;
use optforest::weights::CriterionContext;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optforest"))
}

fn write_toy_csv(dir: &Path) -> PathBuf {
    let path = dir.join("toy.csv");
    let mut text = String::from("x1,x2,target\n");
    for i in 0..40 {
        let a = (i as f64 * 0.37).sin().abs();
        let b = (i as f64 * 0.73).cos().abs();
        let y = 3.0 * a + 2.0 * b + 0.1 * (i as f64 * 1.3).sin();
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Remove volatile wall-clock fields before comparing outputs.
fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_s");
            map.remove("timings");
            for val in map.values_mut() {
                strip_timings(val);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[test]
fn fit_two_steps_writes_simplex_weights() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let model_path = dir.path().join("model.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args([
                "--target", "target", "--method", "2steps", "--trees", "8", "--seed", "3",
            ])
            .arg("--out")
            .arg(&model_path),
    );
    let model = read_json(&model_path);
    assert_eq!(model["schema_version"], 1);
    assert_eq!(model["method"], "2steps");
    assert_eq!(model["tree_kind"], "cart");
    let w: Vec<f64> = model["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(w.len(), 8);
    assert!(w.iter().all(|&v| v >= 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    assert!(model["solve_report"]["converged"].is_boolean());
    assert_eq!(model["trees"].as_array().unwrap().len(), 8);
}

#[test]
fn fit_rf_gives_equal_weights() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let model_path = dir.path().join("rf.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args(["--target", "target", "--method", "rf", "--trees", "5"])
            .arg("--out")
            .arg(&model_path),
    );
    let model = read_json(&model_path);
    for v in model["weights"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.2);
    }
}

#[test]
fn one_step_improves_on_two_steps_under_cubic_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let fit = |method: &str, out: &Path| {
        run_ok(
            bin()
                .args(["fit", "--data"])
                .arg(&csv)
                .args(["--target", "target", "--method", method])
                .args([
                    "--trees",
                    "6",
                    "--seed",
                    "17",
                    "--min-leaf",
                    "5",
                    "--q",
                    "1",
                ])
                .arg("--out")
                .arg(out),
        );
    };
    let one_path = dir.path().join("one.json");
    let two_path = dir.path().join("two.json");
    fit("1step", &one_path);
    fit("2steps", &two_path);

    let weights = |v: &Value| -> Vec<f64> {
        v["weights"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    let one_w = weights(&read_json(&one_path));
    let two_w = weights(&read_json(&two_path));

    // rebuild the same forest (same seed and config) and evaluate the
    // cubic criterion at both weight vectors
    let data = load_csv(&csv, "target").unwrap();
    let cfg = GrowConfig::cart(1, 5);
    let mut forest = Forest::grow(&data, &cfg, 6, 17).unwrap();
    forest.build_hats(&data).unwrap();
    let ctx = CriterionContext::new(forest.hats().unwrap(), data.y()).unwrap();
    assert!(ctx.c_prime(&one_w) <= ctx.c_prime(&two_w) + 1e-10);
}

#[test]
fn fit_is_deterministic_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let fit = |out: &Path| {
        run_ok(
            bin()
                .args(["fit", "--data"])
                .arg(&csv)
                .args([
                    "--target", "target", "--method", "2steps", "--trees", "6", "--seed", "5",
                ])
                .arg("--out")
                .arg(out),
        );
    };
    let a_path = dir.path().join("a.json");
    let b_path = dir.path().join("b.json");
    fit(&a_path);
    fit(&b_path);
    let mut a = read_json(&a_path);
    let mut b = read_json(&b_path);
    strip_timings(&mut a);
    strip_timings(&mut b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    // a different seed changes the trees
    let c_path = dir.path().join("c.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args([
                "--target", "target", "--method", "2steps", "--trees", "6", "--seed", "6",
            ])
            .arg("--out")
            .arg(&c_path),
    );
    let mut c = read_json(&c_path);
    strip_timings(&mut c);
    assert_ne!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&c).unwrap()
    );
}

#[test]
fn predict_scores_against_target() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let model_path = dir.path().join("model.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args([
                "--target", "target", "--method", "crf", "--trees", "5", "--seed", "2",
            ])
            .arg("--out")
            .arg(&model_path),
    );
    let preds_path = dir.path().join("preds.json");
    run_ok(
        bin()
            .args(["predict", "--model"])
            .arg(&model_path)
            .arg("--data")
            .arg(&csv)
            .args(["--target", "target"])
            .arg("--out")
            .arg(&preds_path),
    );
    let preds = read_json(&preds_path);
    assert_eq!(preds["n"], 40);
    assert_eq!(preds["predictions"].as_array().unwrap().len(), 40);
    assert!(preds["msfe"].as_f64().unwrap() >= 0.0);
    assert!(preds["mafe"].as_f64().unwrap() >= 0.0);
}

#[test]
fn predict_without_target_uses_all_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let model_path = dir.path().join("model.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args(["--target", "target", "--method", "wrf", "--lambda", "1.5"])
            .args(["--trees", "4", "--seed", "9"])
            .arg("--out")
            .arg(&model_path),
    );

    // feature-only CSV
    let feat_path = dir.path().join("features.csv");
    let mut text = String::from("x1,x2\n");
    for i in 0..7 {
        text.push_str(&format!("{},{}\n", 0.1 * i as f64, 0.05 * i as f64));
    }
    std::fs::write(&feat_path, text).unwrap();
    let preds_path = dir.path().join("p.json");
    run_ok(
        bin()
            .args(["predict", "--model"])
            .arg(&model_path)
            .arg("--data")
            .arg(&feat_path)
            .arg("--out")
            .arg(&preds_path),
    );
    let preds = read_json(&preds_path);
    assert_eq!(preds["n"], 7);
    assert!(preds.get("msfe").is_none());
}

#[test]
fn bench_runs_and_reports_five_methods() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .args(["bench", "--data"])
            .arg(&csv)
            .args([
                "--target", "target", "--trees", "4", "--reps", "2", "--seed", "1",
            ])
            .arg("--out")
            .arg(&report_path),
    );
    let report = read_json(&report_path);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["methods"].as_array().unwrap().len(), 5);
    assert_eq!(report["failures"], 0);
    // benchmark method is its own reference
    let two = report["methods"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["method"] == "2steps")
        .unwrap();
    assert_eq!(two["relative_msfe"], 1.0);

    // markdown format
    let md_path = dir.path().join("report.md");
    run_ok(
        bin()
            .args(["bench", "--data"])
            .arg(&csv)
            .args([
                "--target", "target", "--trees", "4", "--reps", "1", "--format", "md",
            ])
            .arg("--out")
            .arg(&md_path),
    );
    let md = std::fs::read_to_string(&md_path).unwrap();
    assert!(md.contains("| MSFE |"));
}

#[test]
fn bench_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_csv(dir.path());
    let manifest_path = dir.path().join("manifest.json");
    std::fs::write(
        &manifest_path,
        r#"[{"name":"toy","path":"toy.csv","target":"target","expected_n":40,"expected_p":2}]"#,
    )
    .unwrap();
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .args(["bench", "--manifest"])
            .arg(&manifest_path)
            .args(["--dataset", "toy", "--trees", "3", "--reps", "1"])
            .arg("--out")
            .arg(&report_path),
    );
    assert_eq!(read_json(&report_path)["dataset"]["name"], "toy");

    // shape mismatch in the manifest is a hard error
    std::fs::write(
        &manifest_path,
        r#"[{"name":"toy","path":"toy.csv","target":"target","expected_n":41,"expected_p":2}]"#,
    )
    .unwrap();
    let out = bin()
        .args(["bench", "--manifest"])
        .arg(&manifest_path)
        .args(["--dataset", "toy", "--trees", "3", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_emits_valid_ratio_report() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("study.json");
    run_ok(
        bin()
            .args(["simulate", "--n-grid", "40", "--p", "2", "--trees", "4"])
            .args(["--reps", "2", "--seed", "3", "--skip-one-step"])
            .arg("--out")
            .arg(&report_path),
    );
    let report = read_json(&report_path);
    assert_eq!(report["schema_version"], 1);
    let entry = &report["entries"][0];
    assert!(entry["loss_ratio_two_steps"]["min"].as_f64().unwrap() >= 1.0 - 1e-9);

    // byte-identical across runs (no wall-clock fields in this report)
    let again = dir.path().join("study2.json");
    run_ok(
        bin()
            .args(["simulate", "--n-grid", "40", "--p", "2", "--trees", "4"])
            .args(["--reps", "2", "--seed", "3", "--skip-one-step"])
            .arg("--out")
            .arg(&again),
    );
    assert_eq!(
        std::fs::read(&report_path).unwrap(),
        std::fs::read(&again).unwrap()
    );

    // text table format
    let txt = dir.path().join("study.txt");
    run_ok(
        bin()
            .args(["simulate", "--n-grid", "40", "--p", "2", "--trees", "4"])
            .args(["--reps", "1", "--format", "txt", "--min-leaf", "sqrt"])
            .arg("--out")
            .arg(&txt),
    );
    assert!(std::fs::read_to_string(&txt)
        .unwrap()
        .contains("loss ratios"));
}

#[test]
fn sut_fit_works_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let model_path = dir.path().join("sut.json");
    run_ok(
        bin()
            .args(["fit", "--data"])
            .arg(&csv)
            .args([
                "--target",
                "target",
                "--tree-kind",
                "sut",
                "--trees",
                "5",
                "--seed",
                "4",
            ])
            .arg("--out")
            .arg(&model_path),
    );
    assert_eq!(read_json(&model_path)["tree_kind"], "sut");
}

#[test]
fn io_errors_exit_nonzero() {
    let out = bin()
        .args([
            "fit",
            "--data",
            "/nonexistent.csv",
            "--target",
            "y",
            "--out",
            "/tmp/x.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    // no data source given
    let out = bin().args(["bench", "--dataset", "toy"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // clap usage error
    let out = bin().args(["fit", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
