//! End-to-end tests of the binary: stage chaining, pipeline artifacts,
//! determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ladderbus"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn").status.code().expect("code")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn stage_chain_produces_consistent_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let workload = d.join("w.json");
    let mapping = d.join("m.json");
    let schedule = d.join("s.json");
    let routes = d.join("r.json");
    let report = d.join("rep.json");

    run_ok(bin().args([
        "gen",
        "--clusters", "12",
        "--degree", "1.5",
        "--burstiness", "0.5",
        "--steps", "15",
        "--seed", "3",
        "--out", workload.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "map",
        "--workload", workload.to_str().unwrap(),
        "--tiles", "12",
        "--lanes", "4",
        "--alpha", "0",
        "--beta", "1",
        "--restarts", "3",
        "--seed", "4",
        "--out", mapping.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "schedule",
        "--workload", workload.to_str().unwrap(),
        "--mapping", mapping.to_str().unwrap(),
        "--mode", "spx",
        "--spike-cycles", "1",
        "--out", schedule.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "route",
        "--schedule", schedule.to_str().unwrap(),
        "--tiles", "12",
        "--lanes", "4",
        "--out", routes.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "simulate",
        "--workload", workload.to_str().unwrap(),
        "--mapping", mapping.to_str().unwrap(),
        "--schedule", schedule.to_str().unwrap(),
        "--routes", routes.to_str().unwrap(),
        "--tiles", "12",
        "--lanes", "4",
        "--out", report.to_str().unwrap(),
    ]));

    let parsed: serde_json::Value =
        serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let offered = parsed["spikes_offered"].as_u64().unwrap();
    let delivered = parsed["spikes_delivered"].as_u64().unwrap();
    let dropped = parsed["spikes_dropped"].as_u64().unwrap();
    assert!(offered > 0);
    assert_eq!(offered, delivered + dropped);
}

#[test]
fn pipeline_writes_artifacts_and_spxs_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"{{
              "workload": {{"generator": {{"clusters": 12, "degree": 1.5, "burstiness": 0.5, "steps": 20}}}},
              "variants": ["sl", "txs", "spxs", "sr"],
              "out_dir": "{}",
              "seed": 7
            }}"#,
            out.display()
        ),
    );
    run_ok(bin().args(["pipeline", "--config", config.to_str().unwrap()]));

    for file in ["workload.json", "topology.json", "run_meta.json", "summary.csv"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    for variant in ["sl", "txs", "spxs", "sr"] {
        for file in ["mapping.json", "schedule.json", "routes.json", "report.json"] {
            assert!(out.join(variant).join(file).exists(), "missing {variant}/{file}");
        }
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let spxs = summary
        .lines()
        .find(|l| l.contains(",spxs,"))
        .expect("spxs row");
    assert!(spxs.contains(",1.000000,"), "spxs should be lossless: {spxs}");
    let sr = summary.lines().find(|l| l.contains(",sr,")).expect("sr row");
    assert!(sr.contains(",1.000000,"), "sr should be lossless: {sr}");
}

#[test]
fn pipeline_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(
        dir.path(),
        r#"{
          "workload": {"generator": {"clusters": 14, "degree": 2.93, "burstiness": 0.4, "steps": 12}},
          "out_dir": "placeholder",
          "seed": 99
        }"#,
    );
    run_ok(bin().args([
        "pipeline",
        "--config", config.to_str().unwrap(),
        "--out-dir", out_a.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "pipeline",
        "--config", config.to_str().unwrap(),
        "--out-dir", out_b.to_str().unwrap(),
    ]));

    let mut files_a = Vec::new();
    collect_files(&out_a, &mut files_a);
    files_a.sort();
    assert!(!files_a.is_empty());
    for rel in files_a {
        let a = fs::read(out_a.join(&rel)).unwrap();
        let b = fs::read(out_b.join(&rel)).unwrap();
        assert_eq!(a, b, "artifact {rel} differs between runs");
    }
}

fn collect_files(root: &Path, out: &mut Vec<String>) {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    walk(root, root, out);
}

#[test]
fn missing_workload_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "workload": {"file": "does_not_exist.json"},
          "out_dir": "out",
          "seed": 1
        }"#,
    );
    assert_eq!(
        exit_code(bin().args(["pipeline", "--config", config.to_str().unwrap()])),
        1
    );
    assert_eq!(
        exit_code(bin().args([
            "map",
            "--workload", "also_missing.json",
            "--tiles", "8",
            "--lanes", "2",
            "--out", dir.path().join("m.json").to_str().unwrap(),
        ])),
        1
    );
}

#[test]
fn budget_overflow_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"{{
              "workload": {{"generator": {{"clusters": 12, "degree": 1.5, "burstiness": 0.5, "steps": 10}}}},
              "sim": {{"cycles_per_time_step": 1}},
              "variants": ["sl"],
              "out_dir": "{}",
              "seed": 7
            }}"#,
            out.display()
        ),
    );
    assert_eq!(
        exit_code(bin().args(["pipeline", "--config", config.to_str().unwrap()])),
        3
    );
}

#[test]
fn compare_normalizes_against_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"{{
              "workload": {{"generator": {{"clusters": 12, "degree": 1.5, "burstiness": 0.6, "steps": 15}}}},
              "variants": ["sl", "spxs"],
              "out_dir": "{}",
              "seed": 21
            }}"#,
            out.display()
        ),
    );
    run_ok(bin().args(["pipeline", "--config", config.to_str().unwrap()]));

    let sl = out.join("sl/report.json");
    let spxs = out.join("spxs/report.json");
    let output = run_ok(bin().args([
        "compare",
        sl.to_str().unwrap(),
        spxs.to_str().unwrap(),
    ]));
    let csv = String::from_utf8(output.stdout).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("workload,variant,"));
    let sl_row = lines.next().unwrap();
    assert!(sl_row.contains(",sl,"));
    assert!(sl_row.contains(",1.0000,"), "baseline norms must be 1: {sl_row}");
    let spxs_row = lines.next().unwrap();
    let norm_latency: f64 = spxs_row.split(',').nth(5).unwrap().parse().unwrap();
    assert!(norm_latency >= 1.0, "scheduling only adds offsets: {spxs_row}");

    // single report "vs itself" is allowed and yields all ratios 1.0
    let self_cmp = run_ok(bin().args([
        "compare",
        sl.to_str().unwrap(),
        sl.to_str().unwrap(),
    ]));
    let csv = String::from_utf8(self_cmp.stdout).unwrap();
    for row in csv.lines().skip(1) {
        assert!(row.contains(",1.0000,"));
    }

    // reports from different workloads are rejected
    let other_out = dir.path().join("other");
    let other_config = write_config(
        &dir.path().join("."),
        &format!(
            r#"{{
              "workload": {{"generator": {{"clusters": 12, "degree": 1.5, "burstiness": 0.6, "steps": 15}}}},
              "variants": ["sl"],
              "out_dir": "{}",
              "seed": 22
            }}"#,
            other_out.display()
        ),
    );
    run_ok(bin().args(["pipeline", "--config", other_config.to_str().unwrap()]));
    assert_eq!(
        exit_code(bin().args([
            "compare",
            sl.to_str().unwrap(),
            other_out.join("sl/report.json").to_str().unwrap(),
        ])),
        1
    );
}
