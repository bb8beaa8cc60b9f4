use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softsense::bundle::load_model;
use softsense::dataio::load_feature_table;
use softsense::FeatureId;

fn softsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softsense")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// A small generator config so each command runs in well under a second.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("gen.json");
    fs::write(&path, r#"{"n_rows": 1200, "outlier_count": 4}"#).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_data_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&softsense(&["gen", "--gen-config", s(&cfg), "--seed", "3", "--out-dir", s(dir.path())]));
    let data = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(data.lines().next().unwrap(), "A,B,C,D,E,F,G,H,NT,OUTLIER");
    assert_eq!(data.lines().count(), 1201);
    assert!(dir.path().join("gen_config.json").exists());

    // same seed, same bytes
    let again = dir.path().join("again");
    ok(&softsense(&["gen", "--gen-config", s(&cfg), "--seed", "3", "--out-dir", s(&again)]));
    assert_eq!(fs::read(again.join("data.csv")).unwrap(), data.as_bytes());
}

#[test]
fn run_writes_reports_from_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&softsense(&["gen", "--gen-config", s(&cfg), "--out-dir", s(dir.path())]));
    let out = dir.path().join("run");
    let input = dir.path().join("data.csv");
    ok(&softsense(&["run", "--input", s(&input), "--trees", "10", "--out-dir", s(&out)]));
    for name in ["manifest.json", "importance.csv", "corrmatrix.csv", "test_results.csv", "tree.dot"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["outliers_removed"], 4);
}

#[test]
fn importance_select_and_export_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = s(dir.path());
    let base = ["--gen-config", s(&cfg), "--trees", "10", "--out-dir", out];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(base);
        args.extend(extra);
        softsense(&args)
    };
    ok(&with("importance", &[]));
    assert_eq!(fs::read_to_string(dir.path().join("rankings.csv")).unwrap().lines().count(), 5);
    ok(&with("select", &["--family", "linear,tree", "--ranking", "B,A,H"]));
    let table = fs::read_to_string(dir.path().join("selection_linear.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().nth(3).unwrap().ends_with("\"B,A,H\""));
    assert!(!dir.path().join("selection_forest.csv").exists());
    ok(&with("export-tree", &[]));
    assert!(fs::read_to_string(dir.path().join("tree.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn evaluate_then_predict_with_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&softsense(&["gen", "--gen-config", s(&cfg), "--out-dir", s(dir.path())]));
    let input = dir.path().join("data.csv");
    ok(&softsense(&[
        "evaluate", "--input", s(&input), "--family", "linear", "--ranking", "B,A,H", "--out-dir", s(dir.path()),
    ]));
    let results = fs::read_to_string(dir.path().join("test_results_linear.csv")).unwrap();
    assert!(results.contains("linear,top3,"));
    assert!(results.contains("linear,all,"));
    let model = dir.path().join("model_linear.json");

    // All features: identical to the library's predictions.
    let pred_dir = dir.path().join("p1");
    ok(&softsense(&["predict", "--model", s(&model), "--input", s(&input), "--out-dir", s(&pred_dir)]));
    let bundle = load_model(&model).unwrap();
    let table = load_feature_table(&input).unwrap();
    let csv = fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row,prediction,subset");
    assert_eq!(lines.len(), table.rows.len() + 1);
    for (i, line) in lines[1..].iter().enumerate().step_by(97) {
        let fields: Vec<&str> = line.splitn(3, ',').collect();
        let (want, _) = bundle.predict(&table.rows[i], &FeatureId::ALL).unwrap();
        assert_eq!(fields[0], i.to_string());
        assert_eq!(fields[1].parse::<f64>().unwrap(), want);
        assert_eq!(fields[2], "\"B,A,H\"");
    }

    // Without H the {B, A} prefix model serves.
    let pred_dir = dir.path().join("p2");
    ok(&softsense(&[
        "predict", "--model", s(&model), "--input", s(&input), "--mask", "A,B", "--out-dir", s(&pred_dir),
    ]));
    let csv = fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with("\"B,A\"")));

    // Nothing available: no model can serve.
    let out = softsense(&["predict", "--model", s(&model), "--input", s(&input), "--mask", "", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no model"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "A,B,C,D,E,F,G,NT\n1,2,3,4,5,6,7,8\n").unwrap();
    let out = softsense(&["run", "--input", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains('H'));

    assert_eq!(softsense(&["run", "--no-such-flag"]).status.code(), Some(2));
    let out = softsense(&["run", "--trees", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let junk = dir.path().join("model.json");
    fs::write(&junk, "not a bundle").unwrap();
    let out = softsense(&["predict", "--model", s(&junk), "--input", s(&bad), "--out-dir", s(dir.path())]);
    assert_ne!(out.status.code(), Some(0));
}
