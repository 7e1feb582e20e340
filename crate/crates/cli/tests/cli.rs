use std::path::Path;
use std::process::{Command, Output};

fn dxi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dxi"))
        .args(args)
        .env_remove("DXI_OUTPUT_DIR")
        .output()
        .expect("spawn dxi")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Panel cohort plus a noisy score file that separates on the reference label.
fn fixture(dir: &Path) {
    let o = Command::new(env!("CARGO_BIN_EXE_dxi"))
        .args(["simulate", "panel", "--n-cases", "150", "--n-readers", "4", "--seed", "11"])
        .env("DXI_OUTPUT_DIR", dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cases = std::fs::read_to_string(dir.join("panel_cases.csv")).unwrap();
    let mut preds = String::from("case_id,score\n");
    for (i, line) in cases.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let positive = cols[5] == "HISTO" && cols[6] != "1";
        let jitter = ((i * 37) % 50) as f64;
        preds.push_str(&format!("{},{}\n", cols[0], jitter + if positive { 30.0 } else { 10.0 }));
    }
    std::fs::write(dir.join("preds.csv"), preds).unwrap();
}

fn write_config(dir: &Path, file: &str, name: &str, predictions: &str) {
    let cfg = serde_json::json!({
        "cohort_name": name,
        "cases": "panel_cases.csv",
        "predictions": predictions,
        "readings": "panel_readings.csv",
        "cutoff": "ge3",
        "prevalence": 0.3,
        "benchmark": {"source": "reader_study"},
        "bootstrap_reps": 300,
        "imputations": 5,
        "seed": 5
    });
    std::fs::write(dir.join(file), cfg.to_string()).unwrap();
}

#[test]
fn power_table_markdown() {
    let o = dxi(&["power", "--output", "md"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("| 476 | ±4.12% | ±3.89% | ±3.59% |"), "{s}");
    assert!(s.contains("| 391 |"));
}

#[test]
fn interval_decision_and_json() {
    let o = dxi(&["interchange", "--interval", "0.74,0.70,0.78", "--benchmark", "0.675"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["decision"], "interchangeable");
    assert!((v["decision_line"].as_f64().unwrap() - 0.625).abs() < 1e-12);

    let o = dxi(&["interchange", "--interval", "0.70,0.62,0.78", "--benchmark", "0.675", "--output", "md"]);
    assert!(stdout(&o).contains("not demonstrated"));
}

#[test]
fn bad_arguments_fail() {
    assert!(!dxi(&["interchange", "--interval", "0.7,0.6", "--benchmark", "0.675"]).status.success());
    assert!(!dxi(&["power", "--p", "1.5"]).status.success());
    assert!(!dxi(&["metrics", "--cases", "/nonexistent.csv", "--predictions", "/nonexistent.csv"]).status.success());
    assert!(!dxi(&["interchange", "--benchmark", "0.7", "--rule", "nonsense"]).status.success());
}

#[test]
fn seeded_output_is_reproducible_across_execution_modes() {
    let args = ["simulate", "table3", "--n", "300", "--seed", "9", "--output", "csv"];
    let a = dxi(&args);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    let b = dxi(&seq);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 13);
}

#[test]
fn subcommands_on_panel_cohort() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();

    let o = dxi(&["validate", "--cases", &p("panel_cases.csv"), "--readings", &p("panel_readings.csv")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_cases"], 150);
    assert_eq!(v["n_readers"], 4);

    let o = dxi(&[
        "agreement", "--cases", &p("panel_cases.csv"), "--readings", &p("panel_readings.csv"),
        "--bootstrap-reps", "200", "--prevalence", "0.3", "--output", "csv",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 7);

    let o = dxi(&[
        "metrics", "--cases", &p("panel_cases.csv"), "--predictions", &p("preds.csv"),
        "--rule", "youden", "--rule", "spec:0.6", "--roc-csv", &p("roc.csv"),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(p("roc.csv")).unwrap().starts_with("threshold,sensitivity,specificity"));

    let o = dxi(&[
        "auroc-mi", "--cases", &p("panel_cases.csv"), "--predictions", &p("preds.csv"),
        "--imputations", "4", "--stratify", "age-band", "--export-model", &p("model.json"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let auc = v["pooled"]["q_pooled"].as_f64().unwrap();
    assert!(auc > 0.5 && auc <= 1.0);
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn run_single_and_multi_cohort() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    write_config(dir.path(), "a.json", "alpha", "preds.csv");
    write_config(dir.path(), "b.json", "beta", "preds.csv");
    write_config(dir.path(), "broken.json", "gamma", "missing.csv");
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();

    let o = dxi(&["run", &p("a.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["cohort_name"], "alpha");
    assert!(v["interchange"]["decision"].is_string());

    // global flags override the config
    let o = dxi(&["run", &p("a.json"), "--seed", "99"]);
    let w: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(w["config"]["seed"], 99);

    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_dxi"))
        .args(["run", &p("a.json"), &p("b.json"), "--output", "md"])
        .env("DXI_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(std::fs::read_to_string(out.join("report.md")).unwrap().contains("Holm"));

    let o = dxi(&["run", &p("a.json"), &p("broken.json")]);
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["partial"], true);
    assert_eq!(v["failure"]["cohort_name"], "gamma");
}
