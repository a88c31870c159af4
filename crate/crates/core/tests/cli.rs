use std::path::Path;
use std::process::{Command, Output};

use ggmbd::manifest::RunManifest;
use ggmbd::Graph;

fn ggmbd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggmbd"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ratio_on_triangle_prints_value_and_zero_bound() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("k3.json"), Graph::complete(3).to_json_string()).unwrap();
    let o = ggmbd(&["ratio", "--approx", "--graph", "k3.json", "--edge", "0,1", "--delta", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "ratio = 0.21221\nB = 0\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "1,2\n3,4\n").unwrap();
    let usage = ggmbd(
        &["bdmcmc", "--data", "x.csv", "--iterations", "100", "--burn-in", "100", "--trace", "t", "--summary", "s"],
        dir.path(),
    );
    assert_eq!(usage.status.code(), Some(2));
    assert!(!usage.stderr.is_empty());
    assert_eq!(ggmbd(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(ggmbd(&["const", "--graph", "missing.json", "--exact"], dir.path()).status.code(), Some(1));
    assert_eq!(ggmbd(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn pipeline_with_manifests_replays_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let o = ggmbd(args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["gen-graph", "--kind", "random_2p", "--p", "6", "--seed", "11", "--out", "g.json"]);
    run(&["gen-data", "--graph", "g.json", "--n", "80", "--seed", "12", "--threads", "1", "--out", "x.csv"]);
    run(&[
        "bdmcmc", "--data", "x.csv", "--iterations", "1500", "--burn-in", "500", "--seed", "13", "--threads", "1", "--trace",
        "trace.jsonl", "--summary", "post.json",
    ]);
    run(&["evaluate", "--summary", "post.json", "--truth", "g.json", "--out", "metrics.csv"]);

    let metrics = std::fs::read_to_string(d.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("threshold,tp,tn,fp,fn,sensitivity,specificity,mcc,auc\n0.5,"));
    let post: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("post.json")).unwrap()).unwrap();
    assert_eq!(post["schema_version"], 1);
    assert_eq!(std::fs::read_to_string(d.join("trace.jsonl")).unwrap().lines().count(), 1000);

    for out in ["g.json", "x.csv", "trace.jsonl", "post.json", "metrics.csv"] {
        let m = RunManifest::read(&RunManifest::path_for(&d.join(out))).unwrap();
        assert!(m.outputs.iter().any(|o| o == out));
    }
    let m = RunManifest::read(&d.join("post.json.manifest.json")).unwrap();
    assert_eq!((m.subcommand.as_str(), m.seed), ("bdmcmc", Some(13)));

    let before = std::fs::read(d.join("trace.jsonl")).unwrap();
    let data_before = std::fs::read(d.join("x.csv")).unwrap();
    std::fs::remove_file(d.join("trace.jsonl")).unwrap();
    run(&["replay", "post.json.manifest.json"]);
    assert_eq!(std::fs::read(d.join("trace.jsonl")).unwrap(), before);
    run(&["replay", "x.csv.manifest.json"]);
    assert_eq!(std::fs::read(d.join("x.csv")).unwrap(), data_before);
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = ggmbd(&["gen-graph", "--kind", "scale_free", "--p", "8", "--out", "g.json"], dir.path());
    assert!(o.status.success());
    let m = RunManifest::read(&dir.path().join("g.json.manifest.json")).unwrap();
    assert!(m.seed_from_entropy);
    let first = std::fs::read(dir.path().join("g.json")).unwrap();
    assert!(ggmbd(&["replay", "g.json.manifest.json"], dir.path()).status.success());
    assert_eq!(std::fs::read(dir.path().join("g.json")).unwrap(), first);
}

#[test]
fn table1_rows_and_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let o = ggmbd(&["table1", "--paths", "11112", "--samples", "20000", "--seed", "1"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..7], &["11112", "3", "4", "2", "0.3395", "0.2500", "0.0382"]);
    let o = ggmbd(&["table1", "--config", "41", "--samples", "20000", "--seed", "1"], dir.path());
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",4,2,"));
    let o = ggmbd(&["table1", "--samples", "1000", "--seed", "1"], dir.path());
    assert_eq!(stdout(&o).lines().count(), 16);
}
