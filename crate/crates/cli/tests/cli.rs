use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn perfloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfloc"))
        .args(args)
        .output()
        .expect("run perfloc")
}

fn ok(args: &[&str]) -> String {
    let out = perfloc(args);
    assert!(
        out.status.success(),
        "perfloc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let gen = root.join("gen.json");
    std::fs::write(
        &gen,
        r#"{"n_train_archs": 3, "n_test_archs": 1, "n_bugfree_test_archs": 1,
            "n_workloads": 3, "windows_min": 10, "windows_max": 12}"#,
    )
    .unwrap();
    let corpus = root.join("corpus");
    ok(&["simgen", "--config", s(&gen), "--seed", "5", "--out", s(&corpus)]);
    let manifest = corpus.join("manifest.json");
    assert!(manifest.exists() && corpus.join("impact_histogram.csv").exists());

    let selection = root.join("selection.json");
    ok(&["select", "--manifest", s(&manifest), "--out", s(&selection)]);
    let sel: Value = serde_json::from_str(&std::fs::read_to_string(&selection).unwrap()).unwrap();
    assert!(sel["superset"].as_array().is_some_and(|a| !a.is_empty()));

    let bank = root.join("bank");
    ok(&[
        "train-cbc", "--manifest", s(&manifest), "--selection", s(&selection), "--trees", "10",
        "--include-bugfree", "--threads", "1", "--out", s(&bank),
    ]);
    let p2bc = root.join("p2bc");
    ok(&[
        "train-p2bc", "--manifest", s(&manifest), "--selection", s(&selection), "--trees", "10",
        "--epochs", "2", "--small-net", "--out", s(&p2bc),
    ]);

    // One design: the first test architecture's bug-free traces.
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    let test_arch = m["splits"]
        .as_object()
        .unwrap()
        .iter()
        .find(|(_, v)| *v == "test")
        .map(|(k, _)| k.clone())
        .unwrap();
    let design = corpus.join("traces").join(&test_arch).join("bugfree");
    let verdict = ok(&[
        "localize", "--method", "ensemble", "--cbc-bank", s(&bank), "--p2bc-models", s(&p2bc),
        "--traces", s(&design),
    ]);
    let v: Value = serde_json::from_str(&verdict).unwrap();
    assert_eq!(v["ranking"].as_array().unwrap().len(), 11);
    assert!(v["cbc_normalized"].is_object() && v["p2bc_normalized"].is_object());
    let total: f64 = v["scores"].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let verdict_path = root.join("verdict.json");
    ok(&["localize", "--method", "cbc", "--bank", s(&bank), "--traces", s(&design), "--out", s(&verdict_path)]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&verdict_path).unwrap()).unwrap();
    assert_eq!(v["ranking"].as_array().unwrap().len(), 12);

    let eval = root.join("eval");
    ok(&["evaluate", "--manifest", s(&manifest), "--method", "cbc", "--bank", s(&bank), "--out", s(&eval)]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let n = report["n_verdicts"].as_u64().unwrap();
    let by_cat: u64 = report["categories"].as_array().unwrap().iter().map(|r| r["n"].as_u64().unwrap()).sum();
    assert_eq!(n, by_cat);
    assert!(std::fs::read_to_string(eval.join("report.csv")).unwrap().starts_with("method,"));

    let sens = root.join("sens");
    ok(&[
        "sensitivity", "--manifest", s(&manifest), "--bank", s(&bank), "--grid", "3,2,1",
        "--repetitions", "3", "--seed", "1", "--out", s(&sens),
    ]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(sens.join("sensitivity.json")).unwrap()).unwrap();
    assert_eq!(r["points"].as_array().unwrap().len(), 3);

    let audit = ok(&["audit-bugfree", "--manifest", s(&manifest), "--bank", s(&bank)]);
    let a: Value = serde_json::from_str(&audit).unwrap();
    assert_eq!(a["bugfree_designs"].as_array().unwrap().len(), 2);

    let bad = perfloc(&["sensitivity", "--manifest", s(&manifest), "--bank", s(&bank), "--grid", "1,2", "--out", s(&sens)]);
    assert!(!bad.status.success());
    let e: Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(e["error"], "GridError");
}

#[test]
fn errors_are_json() {
    let out = perfloc(&["select", "--manifest", "/nonexistent/manifest.json"]);
    assert!(!out.status.success());
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(e["error"].is_string() && e["message"].is_string());

    let out = perfloc(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "UsageError");
}

#[test]
fn help_succeeds() {
    assert!(ok(&["--help"]).contains("localize"));
}
