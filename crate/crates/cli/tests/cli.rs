use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdnmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdnmf"))
        .args(args)
        .env_remove("CDNMF_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, graph: &Path, extra: &str) -> String {
    let path = dir.join("run.json");
    let json = format!(
        r#"{{"dataset": {{"files": {{"edges": "{g}/edges.tsv", "features": "{g}/features.tsv", "labels": "{g}/labels.tsv"}}}},
           "pretrain": {{"max_iters": 40}}, "seeds": [0]{extra}}}"#,
        g = graph.display()
    );
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn gen_graph(dir: &Path) -> std::path::PathBuf {
    let g = dir.join("graph");
    let o = cdnmf(&["gen-sbm", "--blocks", "15,15", "--p-in", "0.4", "--p-out", "0.02", "--feature-dim", "3", "--out", g.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    g
}

#[test]
fn train_writes_results_and_eval_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(dir.path(), &g, "");
    let out = dir.path().join("out");
    let o = cdnmf(&["train", "--config", &cfg, "--epochs", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ACC"));

    let csv = fs::read_to_string(out.join("assignments_seed0.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("node_id,predicted_community"));
    assert_eq!(csv.lines().count(), 31);

    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    let acc = result["seeds"][0]["report"]["acc"].as_f64().unwrap();

    let o = cdnmf(&[
        "eval",
        "--assignments",
        out.join("assignments_seed0.csv").to_str().unwrap(),
        "--labels",
        g.join("labels.tsv").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["acc"].as_f64().unwrap(), acc);
}

#[test]
fn trace_with_one_epoch_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(dir.path(), &g, "");
    let o = cdnmf(&["trace", "--config", &cfg, "--epochs", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec![lines[0], lines[1]]);
    assert_eq!(lines[0], "epoch,L_DNMF,L_reg,L_cl,total");
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn runs_are_byte_identical_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(dir.path(), &g, "");
    let mut docs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = cdnmf(&["train", "--config", &cfg, "--epochs", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v["config"].as_object_mut().unwrap().remove("out_dir");
        docs.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(dir.path(), &g, "");
    let first = dir.path().join("first");
    let o = cdnmf(&["train", "--config", &cfg, "--epochs", "4", "--save-checkpoints", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(first.join("pretrained_seed0.json").is_file());
    let second = dir.path().join("second");
    let o = cdnmf(&[
        "train",
        "--config",
        &cfg,
        "--epochs",
        "4",
        "--resume-from",
        first.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let seeds = |d: &Path| -> serde_json::Value {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("result.json")).unwrap()).unwrap();
        v["seeds"].clone()
    };
    assert_eq!(seeds(&first), seeds(&second));
}

#[test]
fn ablate_prints_three_variants() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(dir.path(), &g, "");
    let o = cdnmf(&["ablate", "--config", &cfg, "--epochs", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for v in ["| full |", "| topo-only |", "| attr-only |"] {
        assert!(text.contains(v), "{text}");
    }
}

#[test]
fn benchmark_keeps_going_after_a_failed_run() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let good = write_config(dir.path(), &g, r#", "optimizer": {"epochs": 2}"#);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"dataset": {"builtin": "cora"}, "data_root": "/nonexistent", "seeds": [0]}"#).unwrap();
    let o = cdnmf(&["benchmark", "--config", bad.to_str().unwrap(), "--config", &good, "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("cora,1,,,,,"));
}

#[test]
fn exit_codes() {
    assert_eq!(cdnmf(&["train"]).status.code(), Some(1));
    assert_eq!(cdnmf(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(cdnmf(&["train", "--dataset", "cora"]).status.code(), Some(1));
    assert_eq!(
        cdnmf(&["train", "--dataset", "cora", "--data-root", "/nonexistent"]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{"dataset": {"builtin": "cora"}, "hyper": {"alpha": 1, "beta": 1, "gama": 1, "tau": 1}}"#).unwrap();
    let o = cdnmf(&["train", "--config", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));

    let g = gen_graph(dir.path());
    fs::write(g.join("edges.tsv"), "0 1\n0 999\n").unwrap();
    let cfg = write_config(dir.path(), &g, "");
    let o = cdnmf(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("edges.tsv:2"));
}

#[test]
fn numeric_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = write_config(
        dir.path(),
        &g,
        r#", "hyper": {"alpha": 1e300, "beta": 1e300, "gamma": 5, "tau": 1.4}, "optimizer": {"lr": 1e300, "grad_clip": null, "epochs": 5}"#,
    );
    let o = cdnmf(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}
