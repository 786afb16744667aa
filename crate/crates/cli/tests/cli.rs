use assert_cmd::Command;
use predicates::prelude::*;

fn tiny_scenario(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("tiny.scenario");
    std::fs::write(
        &path,
        "schema = 1\nname = tiny\nn = 2\nd = 1\nkappa = 2.0\nprofile = constant\n\
         a0 = 0.75\nseed = 11\npts = 32\nhalf_len = 4.0\nlambda = 1.0\nsuites = geometry\n",
    )
    .unwrap();
    path
}

#[test]
fn passing_scenario_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let out = dir.path().join("out");
    Command::cargo_bin("verify")
        .unwrap()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("PASS:"));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"schema_version\""));
    assert!(out.join("tables").join("triples_tiny.csv").exists());
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    Command::cargo_bin("verify")
        .unwrap()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--suite", "nonsense"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("nonsense"));
}

#[test]
fn malformed_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scenario");
    std::fs::write(&path, "n = 2\nd = 1\nwhatever = 3\n").unwrap();
    Command::cargo_bin("verify")
        .unwrap()
        .args(["run", "--scenario"])
        .arg(&path)
        .assert()
        .code(2)
        .stderr(predicate::str::contains("bad scenario"));
    Command::cargo_bin("verify")
        .unwrap()
        .args(["run", "--scenario", "/nonexistent/x.scenario"])
        .assert()
        .code(2);
}

#[test]
fn same_seed_reproduces_the_payload_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let mut payloads = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}"));
        Command::cargo_bin("verify")
            .unwrap()
            .args(["run", "--scenario"])
            .arg(&scenario)
            .args(["--seed", "99", "--out"])
            .arg(&out)
            .assert()
            .success();
        let report = std::fs::read_to_string(out.join("report.json")).unwrap();
        // strip the timestamped block; everything below it must be identical
        let payload = report.split("\"payload\"").nth(1).unwrap().to_string();
        payloads.push(payload);
    }
    assert_eq!(payloads[0], payloads[1]);
}
