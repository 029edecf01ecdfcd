use std::path::Path;
use std::process::{Command, Output};

fn peer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peer")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = peer(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_commands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (raw, full, model) = (d.join("raw.csv"), d.join("full.csv"), d.join("model.json"));
    ok(&["synth", "--n", "400", "--seed", "4", "--effect-scale", "2", "--out", s(&raw)]);
    assert!(d.join("raw.csv.truth.json").exists());

    let numbered = d.join("numbered.csv");
    ok(&["synth", "--profile", "numbered", "--n", "200", "--d", "8", "--out", s(&numbered)]);
    let schema = d.join("numbered.csv.schema.json");
    ok(&["fit", "--in", s(&numbered), "--schema", s(&schema), "--out", s(&d.join("m8.json")), "--lambda", "0.01"]);

    ok(&["impute", "--in", s(&raw), "--out", s(&full), "--trees", "10", "--seed", "1", "--threads", "1"]);
    let trace = std::fs::read_to_string(d.join("full.csv.trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,delta_continuous,delta_categorical\n"));
    assert!(!std::fs::read_to_string(&full).unwrap().contains(",,"));

    let fitted = ok(&["fit", "--in", s(&full), "--out", s(&model), "--lambda", "0.02"]);
    assert!(!fitted.is_empty());

    let scores = d.join("scores.csv");
    ok(&["score", "--in", s(&full), "--model", s(&model), "--out", s(&scores)]);
    let text = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(text.lines().count(), 401);
    ok(&["score", "--in", s(&full), "--score", "curb65", "--out", s(&scores)]);
    let curb: Vec<f64> = std::fs::read_to_string(&scores)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(curb.iter().all(|v| (0.0..=5.0).contains(v) && v.fract() == 0.0));

    let eval = d.join("eval");
    let printed = ok(&["evaluate", "--in", s(&full), "--model", s(&model), "--out", s(&eval), "--replicates", "50"]);
    assert!(printed.starts_with("c-index"));
    for f in ["evaluation.json", "calibration.svg", "km.svg"] {
        assert!(eval.join(f).exists(), "{f}");
    }

    let nomo = d.join("nomogram.txt");
    ok(&["nomogram", "--model", s(&model), "--in", s(&full), "--format", "text", "--day", "7", "--out", s(&nomo)]);
    let first = std::fs::read(&nomo).unwrap();
    ok(&["nomogram", "--model", s(&model), "--in", s(&full), "--format", "text", "--day", "7", "--out", s(&nomo)]);
    assert_eq!(first, std::fs::read(&nomo).unwrap());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let missing = peer(&["impute", "--in", "/no/such/cohort.csv", "--out", s(&d.join("x.csv"))]);
    assert_eq!(missing.status.code(), Some(4));

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "id,age\np1,40\n").unwrap();
    let invalid = peer(&["impute", "--in", s(&bad), "--out", s(&d.join("x.csv"))]);
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("error"));

    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{ "cohort": "c.csv", "cv_folds": 1 }"#).unwrap();
    assert_eq!(peer(&["run", "--config", s(&cfg)]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{ "cohort": "c.csv", "no_such_option": true }"#).unwrap();
    assert_eq!(peer(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}
