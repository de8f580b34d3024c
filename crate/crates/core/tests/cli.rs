use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_margin-rank"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path) {
    let out = run(
        dir,
        &["simulate", "--n", "6", "--N", "3000", "--score-scale", "1", "--seed", "5", "--out", "sim/data"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    simulate(a.path());
    simulate(b.path());
    for f in ["sim/data.csv", "sim/data.truth.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let truth = json(&a.path().join("sim/data.truth.json"));
    assert_eq!(truth["scores_star"].as_array().unwrap().len(), 6);
    assert_eq!(truth["lambda_star"], 1.0);
}

#[test]
fn fit_writes_outputs_and_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    simulate(p);
    let input_before = fs::read(p.join("sim/data.csv")).unwrap();
    let args = ["fit", "--input", "sim/data.csv", "--model", "bradley-terry", "--out", "fit.json", "--dot", "fit.dot"];
    let out = run(p, &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&p.join("fit.json"));
    for key in [
        "items", "scores", "lambda", "nll", "converged", "sigma2_lambda", "sigma2_scores", "delta_hat", "Delta",
        "lambda_lower", "lambda_upper", "threshold",
    ] {
        assert!(!fit[key].is_null(), "missing {key}");
    }
    assert_eq!(fit["converged"], true);
    let levels = json(&p.join("fit.levels.json"));
    let listed: usize = levels.as_array().unwrap().iter().map(|l| l.as_array().unwrap().len()).sum();
    assert_eq!(listed, 6);
    assert!(fs::read_to_string(p.join("fit.dot")).unwrap().starts_with("digraph"));

    let first: Vec<Vec<u8>> = ["fit.json", "fit.levels.json", "fit.dot"].iter().map(|f| fs::read(p.join(f)).unwrap()).collect();
    assert_eq!(run(p, &args).status.code(), Some(0));
    let second: Vec<Vec<u8>> = ["fit.json", "fit.levels.json", "fit.dot"].iter().map(|f| fs::read(p.join(f)).unwrap()).collect();
    assert_eq!(first, second);
    assert_eq!(fs::read(p.join("sim/data.csv")).unwrap(), input_before);
}

#[test]
fn threshold_rules_order_the_cuts() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    simulate(p);
    let mut thresholds = Vec::new();
    for rule in ["conservative", "mle", "aggressive"] {
        let out_file = format!("{rule}.json");
        let out = run(p, &["fit", "--input", "sim/data.csv", "--threshold", rule, "--out", &out_file]);
        assert!(out.status.success());
        thresholds.push(json(&p.join(&out_file))["threshold"].as_f64().unwrap());
    }
    assert!(thresholds[0] <= thresholds[1] && thresholds[1] <= thresholds[2], "{thresholds:?}");
    let out = run(p, &["fit", "--input", "sim/data.csv", "--threshold", "fixed:0.25", "--out", "fixed.json"]);
    assert!(out.status.success());
    assert_eq!(json(&p.join("fixed.json"))["threshold"], 0.25);
}

#[test]
fn evaluate_against_truth() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    simulate(p);
    assert!(run(p, &["fit", "--input", "sim/data.csv", "--out", "fit.json"]).status.success());
    let out = run(p, &["evaluate", "--fit", "fit.json", "--truth", "sim/data.truth.json", "--out-dir", "eval"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&p.join("eval/evaluation.json"));
    let macro_f1 = report["f1"]["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&macro_f1));
    assert_eq!(report["rules"].as_array().unwrap().len(), 3);
    assert!(p.join("eval/evaluation.txt").exists());
}

#[test]
fn evaluate_simulation_mode_writes_tables_and_curve() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let out = run(
        p,
        &[
            "evaluate", "--n", "6", "--N", "500", "--replications", "3", "--models", "bradley-terry,uniform",
            "--lambda-grid", "0.5:0.5:1", "--out-dir", "rep",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(p.join("rep/report.txt")).unwrap();
    assert!(text.contains("Macro-F1") && text.contains("Micro-F1") && text.contains("Bradley-Terry"));
    let csv = fs::read_to_string(p.join("rep/fdr_power_bradley-terry.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda_star,fdr_mle,power_mle,fdr_conservative,power_conservative,fdr_aggressive,power_aggressive"
    );
    assert_eq!(lines.count(), 2);
    assert_eq!(json(&p.join("rep/report.json")).as_array().unwrap().len(), 2);
}

#[test]
fn export_dag_recuts_a_saved_fit() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    simulate(p);
    assert!(run(p, &["fit", "--input", "sim/data.csv", "--out", "fit.json"]).status.success());
    let out = run(p, &["export-dag", "--fit", "fit.json", "--threshold", "fixed:100", "--levels", "flat.json", "--dot", "flat.dot"]);
    assert!(out.status.success());
    // Nothing is separated by a margin of 100: one level holding every item.
    let levels = json(&p.join("flat.json"));
    assert_eq!(levels.as_array().unwrap().len(), 1);
    assert!(!fs::read_to_string(p.join("flat.dot")).unwrap().contains("->"));
}

#[test]
fn alpha_cut_reports_axioms() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("c.csv"), "left,right,label\na,b,1\na,b,1\nb,c,1\nc,a,0\na,c,1\n").unwrap();
    let out = run(p, &["alpha-cut", "--input", "c.csv", "--alpha", "0.6", "--out", "a.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&p.join("a.json"));
    assert_eq!(a["is_partial_order"], true);
    assert_eq!(a["relation"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("ties.csv"), "left,right,label\na,b,0\nb,c,0\nc,a,0\n").unwrap();
    let out = run(p, &["fit", "--input", "ties.csv", "--model", "uniform", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(2));
    let t = json(&p.join("t.json"));
    assert_eq!(t["converged"], false);
    assert!(t["diagnostics"].as_array().unwrap().iter().any(|d| d.as_str().unwrap().contains("lambda cap")));

    assert_eq!(run(p, &["fit", "--input", "missing.csv", "--out", "x.json"]).status.code(), Some(1));
    fs::write(p.join("bad.csv"), "left,right,label\na,b,2\n").unwrap();
    assert_eq!(run(p, &["fit", "--input", "bad.csv", "--out", "x.json"]).status.code(), Some(1));
    fs::write(p.join("selfpair.csv"), "left,right,label\na,a,1\n").unwrap();
    assert_eq!(run(p, &["fit", "--input", "selfpair.csv", "--out", "x.json"]).status.code(), Some(1));
    assert_eq!(run(p, &["fit", "--input", "ties.csv", "--model", "probit", "--out", "x.json"]).status.code(), Some(1));
    assert_eq!(run(p, &["frobnicate"]).status.code(), Some(1));
    assert!(!p.join("x.json").exists());
}
