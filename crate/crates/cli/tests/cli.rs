use std::path::Path;
use std::process::{Command, Output};

fn crossblock(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossblock"))
        .args(args)
        .current_dir(dir)
        .env_remove("CROSSBLOCK_THREADS")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn simulate(dir: &Path, n: &str) {
    ok(crossblock(&["--out-dir", "data", "--seed", "4", "simulate", "subspace", "--n", n], dir));
}

const QUICK: [&str; 6] = ["--permutations", "100", "--bootstraps", "100", "--splits", "20"];

#[test]
fn simulate_writes_data_truth_and_report() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "300");
    for f in ["x.csv", "y.csv", "truth_covariance.csv", "report.json"] {
        assert!(dir.path().join("data").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "crossblock-report/1");
    assert_eq!(report["simulation"]["p"], 50);
    let r2 = report["simulation"]["population_r2"].as_array().unwrap();
    assert!((r2[0].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!(report["metadata"].get("created").is_none());
}

#[test]
fn fit_reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "200");
    let mut reports = Vec::new();
    for (i, threads) in ["1", "1", "2", "8"].iter().enumerate() {
        let out = format!("run{i}");
        let mut args = vec!["--out-dir", &out, "--threads", threads];
        args.extend(QUICK);
        args.extend(["fit", "--x", "data/x.csv", "--y", "data/y.csv"]);
        ok(crossblock(&args, dir.path()));
        reports.push(std::fs::read(dir.path().join(&out).join("report.json")).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn csv_bundle_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "150");
    for out in ["a", "b"] {
        let mut args = vec!["--out-dir", out, "--format", "csv"];
        args.extend(QUICK);
        args.extend(["fit", "--x", "data/x.csv", "--y", "data/y.csv"]);
        ok(crossblock(&args, dir.path()));
    }
    for f in ["metadata.csv", "singular_values.csv", "bartlett.csv", "reproducibility.csv", "stable_weights.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn config_file_is_echoed_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "120");
    std::fs::write(dir.path().join("c.toml"), "n_perm = 60\nn_boot = 100\nn_split = 10\nseed = 3\nmethods = [\"pls\"]\n").unwrap();
    let args = ["--config", "c.toml", "--seed", "9", "--out-dir", "o", "permute", "--x", "data/x.csv", "--y", "data/y.csv"];
    ok(crossblock(&args, dir.path()));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    let config = &report["metadata"]["config"];
    assert_eq!(config["n_perm"], 60);
    assert_eq!(config["seed"], 9);
    assert_eq!(config["methods"], serde_json::json!(["pls"]));
    assert!(config.get("threads").is_none());
    assert_eq!(report["permutation"].as_array().unwrap().len(), 1);
    assert_eq!(report["permutation"][0]["n_perm"], 60);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "40");
    let code = |args: &[&str]| crossblock(args, dir.path()).status.code().unwrap();

    assert_eq!(code(&["fit", "--x", "missing.csv", "--y", "data/y.csv"]), 4);
    assert_eq!(code(&["--alpha", "1.5", "fit", "--x", "data/x.csv", "--y", "data/y.csv"]), 2);
    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    assert_eq!(code(&["fit", "--x", "bad.csv", "--y", "data/y.csv"]), 2);
    std::fs::write(dir.path().join("short.csv"), "a\n1\n2\n3\n").unwrap();
    assert_eq!(code(&["fit", "--x", "short.csv", "--y", "data/y.csv"]), 2);
    // 40 rows cannot support CCA on 50 predictors
    let mut cca = vec!["--method", "cca", "--out-dir", "o"];
    cca.extend(QUICK);
    cca.extend(["fit", "--x", "data/x.csv", "--y", "data/y.csv"]);
    assert_eq!(code(&cca), 3);
    assert_eq!(code(&["plot", "--report", "nowhere.json", "--kind", "eigenspectrum"]), 4);
}

#[test]
fn plot_data_from_saved_report() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "300");
    ok(crossblock(
        &["--out-dir", "p", "--iterations", "10", "--sample-sizes", "100,50", "pca", "stability", "--x", "data/x.csv"],
        dir.path(),
    ));
    ok(crossblock(&["--out-dir", "plots", "plot", "--report", "p/report.json", "--kind", "eigenspectrum"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("plots/eigenspectrum.csv")).unwrap();
    assert!(text.lines().count() > 50);
    let missing = crossblock(&["plot", "--report", "p/report.json", "--kind", "detectability-bars"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_marks_guarded_cells_not_run() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "500");
    let args = [
        "--out-dir", "s", "--iterations", "5", "--permutations", "20", "--sample-sizes", "100,40", "--format", "csv",
        "sweep", "detectability", "--x", "data/x.csv", "--y", "data/y.csv",
    ];
    ok(crossblock(&args, dir.path()));
    let text = std::fs::read_to_string(dir.path().join("s/detectability.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("cca,40,") && l.contains("NOT-RUN")));
    assert!(text.lines().any(|l| l.starts_with("pls,40,1,")));
}
