use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

fn brainet(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brainet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("BRAINET_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const CORR: &str = "name,IL6,TNF,CRP\nIL6,1,0.6,0.2\nTNF,0.6,1,0.5\nCRP,0.2,0.5,1\n";

#[test]
fn graph_from_correlation_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write(&tmp.path().join("corr.csv"), CORR);
    let stdout = ok(&brainet(
        tmp.path(),
        &["--out", "g", "graph", "--corr", "corr.csv", "--alpha", "0.45", "--mode", "signed"],
    ));
    assert!(stdout.contains("3 nodes, 2 edges"), "{stdout}");
    let dot = std::fs::read_to_string(tmp.path().join("g/graph_combined.dot")).unwrap();
    assert!(dot.contains("\"IL6\" -- \"TNF\""));
    assert!(!dot.contains("\"CRP\" -- \"IL6\""));
    assert!(tmp.path().join("g/graph_combined.graphml").is_file());
}

#[test]
fn compare_reports_present_only_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let case = "name,A,B,C\nA,1,0.9,0.9\nB,0.9,1,0\nC,0.9,0,1\n";
    let control = "name,A,B,C\nA,1,0,0\nB,0,1,0.9\nC,0,0.9,1\n";
    write(&tmp.path().join("case.csv"), case);
    write(&tmp.path().join("control.csv"), control);
    for (file, group) in [("case.csv", "case"), ("control.csv", "control")] {
        ok(&brainet(tmp.path(), &["--out", ".", "graph", "--corr", file, "--group", group]));
    }
    let stdout = ok(&brainet(tmp.path(), &["--out", ".", "compare", "graph_case.json", "graph_control.json"]));
    let table = std::fs::read_to_string(tmp.path().join("degree_table.csv")).unwrap();
    assert!(table.contains("A,2,0,true"), "{table}");
    assert!(table.contains("B,1,1,false"), "{table}");
    assert!(stdout.contains("true"));
    let diff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("diff.json")).unwrap()).unwrap();
    assert_eq!(diff["edges_lost"].as_array().unwrap().len(), 2);
    assert_eq!(diff["edges_gained"].as_array().unwrap().len(), 1);
}

#[test]
fn stage_subcommands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&brainet(dir, &["--out", "cohort", "synth", "--preset", "demo"]));
    ok(&brainet(
        dir,
        &["--out", "p", "preprocess", "--input", "cohort/cohort.csv", "--schema", "cohort/schema.json"],
    ));
    assert!(dir.join("p/normalization.json").is_file());
    let ranked = ok(&brainet(dir, &["--out", "p", "select", "--matrix", "p/matrix.csv", "--m", "5"]));
    assert_eq!(ranked.lines().count(), 5);
    ok(&brainet(
        dir,
        &["--out", "p", "train", "--matrix", "p/matrix.csv", "--model", "logistic", "--hp", "lambda=0.05"],
    ));
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("p/model_elastic_net_logistic.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["hyperparameters"]["lambda"], 0.05);
    ok(&brainet(
        dir,
        &[
            "--out",
            "p",
            "explain",
            "--model",
            "p/model_elastic_net_logistic.json",
            "--matrix",
            "p/matrix.csv",
            "--background-size",
            "10",
            "--n-coalitions",
            "64",
        ],
    ));
    let importance = std::fs::read_to_string(dir.join("p/importance_elastic_net_logistic.csv")).unwrap();
    assert!(importance.starts_with("rank,feature,score"));
    ok(&brainet(dir, &["--out", "g", "graph", "--matrix", "p/matrix.csv", "--group", "case"]));
    assert!(dir.join("g/components_case.json").is_file());
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["cohort.csv", "schema.json", "pipeline.json"] {
        std::fs::copy(demo_dir().join(f), tmp.path().join(f)).unwrap();
    }
    ok(&brainet(
        tmp.path(),
        &["--config", "pipeline.json", "--seed", "99", "--out", "elsewhere", "--jobs", "2", "run", "--bootstrap", "2"],
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("elsewhere/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 99);
    let metrics = std::fs::read_to_string(tmp.path().join("elsewhere/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
    let report = ok(&brainet(tmp.path(), &["report", "elsewhere"]));
    assert!(report.contains("# Biomarker network report"));
    assert!(tmp.path().join("elsewhere/report.md").is_file());
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let code = |args: &[&str]| brainet(dir, args).status.code();

    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["select", "--matrix", "m.csv"]), Some(2));
    assert_eq!(code(&["--config", "missing.json", "run"]), Some(5));

    write(&dir.join("bad.json"), "{\"graph\": {\"alpha\": 2.0}}");
    assert_eq!(code(&["--config", "bad.json", "run"]), Some(2));
    write(&dir.join("typo.json"), "{\"grpah\": {}}");
    assert_eq!(code(&["--config", "typo.json", "run"]), Some(2));

    write(&dir.join("corr.csv"), "name,a,b\na,1,0.5\nb,0.4,1\n");
    assert_eq!(code(&["graph", "--corr", "corr.csv"]), Some(3));

    write(&dir.join("schema.json"), r#"[{"name":"x","kind":"continuous"},{"name":"diagnosis","kind":"label"}]"#);
    write(&dir.join("cohort.csv"), "x,diagnosis\n1.0,1\nabc,0\n");
    assert_eq!(
        code(&["--out", "o", "preprocess", "--input", "cohort.csv", "--schema", "schema.json"]),
        Some(3)
    );
}
