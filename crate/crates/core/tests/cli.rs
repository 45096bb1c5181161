use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logsync"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples/scenarios")
        .join(name)
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> i32 {
    bin()
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn every_example_scenario_runs() {
    let cases = [
        ("simulate", "two_machines.json"),
        ("solve-tetra", "tetra.json"),
        ("solve-ring5", "ring5.json"),
        ("frozen", "frozen.json"),
        ("bitrate", "bitrate.json"),
        ("steer", "steer.json"),
        ("estimate-mu", "estimate.json"),
        ("export-graph", "two_machines.json"),
    ];
    for (cmd, file) in cases {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(&[cmd], &scenario(file), dir.path()), 0, "{cmd} {file}");
        let manifest = read_json(&dir.path().join("manifest.json"));
        assert_eq!(manifest["command"], cmd);
        assert_eq!(manifest["schema_version"], 1);
        for out in manifest["outputs"].as_array().unwrap() {
            assert!(dir.path().join(out.as_str().unwrap()).exists(), "{cmd}: {out}");
        }
    }
}

#[test]
fn manifest_records_input_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("two_machines.json");
    assert_eq!(run(&["simulate"], &path, dir.path()), 0);
    let manifest = read_json(&dir.path().join("manifest.json"));
    let hash = manifest["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    use sha2::Digest;
    let expected = hex::encode(sha2::Sha256::digest(fs::read(&path).unwrap()));
    assert_eq!(hash, expected);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let path = scenario("steer.json");
    assert_eq!(run(&["steer", "--seed", "7"], &path, a.path()), 0);
    assert_eq!(run(&["steer", "--seed", "7"], &path, b.path()), 0);
    for f in ["summary.json", "deviations.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn invalid_scenario_exits_two_with_all_issues() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{ "schema_version": 2, "constants": "geometric",
             "machines": [{ "id": "A", "position": { "value": [0, 0, 0], "unit": "furlong" } }],
             "colour": "blue" }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate"], &bad, &out), 2);
    let diag = read_json(&out.join("diagnostics.json"));
    assert_eq!(diag["exit_code"], 2);
    let fields: Vec<&str> = diag["issues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["field"].as_str().unwrap())
        .collect();
    assert!(fields.contains(&"schema_version"), "{fields:?}");
    assert!(fields.iter().any(|f| f.contains("unit")), "{fields:?}");
    assert!(fields.contains(&"colour"), "{fields:?}");
}

#[test]
fn unreadable_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate"], &dir.path().join("missing.json"), dir.path()), 1);
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coincident.json");
    fs::write(
        &path,
        r#"{ "schema_version": 1, "constants": "geometric",
             "machines": [
               { "id": "A", "position": { "value": [0, 0, 0], "unit": "m" } },
               { "id": "B", "position": { "value": [0, 0, 0], "unit": "m" } }
             ],
             "anchors": [{ "machine": "A", "proper_period": { "value": 1, "unit": "s" } }],
             "channels": [{ "a": "A", "b": "B" }] }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["frozen"], &path, &out), 3);
    assert_eq!(read_json(&out.join("diagnostics.json"))["exit_code"], 3);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(
            &["solve-ring5", "--sweep", "mu=0:1e-5:3"],
            &scenario("ring5.json"),
            dir.path()
        ),
        0
    );
    let summary = read_json(&dir.path().join("sweep.json"));
    assert_eq!(summary["points"].as_array().unwrap().len(), 3);
    let phases: Vec<f64> = (0..3)
        .map(|i| {
            read_json(&dir.path().join(format!("sweep_{i:03}/report.json")))["phase"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert!(phases[0].abs() < 1e-12);
    assert!(phases[2] < phases[1] && phases[1] < 0.0, "{phases:?}");
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = bin().args(["teleport", "--scenario", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
