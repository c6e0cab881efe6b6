mod common;

use std::process::{Command, Output};

fn coexsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coexsim")).args(args).output().expect("binary runs")
}

fn path(name: &str) -> String {
    common::scenario_path(name).to_string_lossy().into_owned()
}

const SHORT: &str = "3000000";

#[test]
fn run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = coexsim(&["run", &path("emulation"), "--duration-us", SHORT, "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn csv_and_json_agree() {
    let json = coexsim(&["run", &path("conference-room"), "--duration-us", SHORT, "--format", "json"]);
    let csv = coexsim(&["run", &path("conference-room"), "--duration-us", SHORT, "--format", "csv"]);
    assert!(json.status.success() && csv.status.success());
    let result: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(csv.stdout.as_slice());
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    let (summary, link_rows) = records.split_last().unwrap();
    assert_eq!(&summary[col("row")], "summary");
    assert_eq!(&summary[col("trace_hash")], result["trace_hash"].as_str().unwrap());
    assert_eq!(summary[col("cts_count")].parse::<u64>().unwrap(), result["cts_count"].as_u64().unwrap());
    let links = result["links"].as_array().unwrap();
    assert_eq!(link_rows.len(), links.len());
    for (rec, link) in link_rows.iter().zip(links) {
        assert_eq!(&rec[col("row")], "link");
        assert_eq!(&rec[col("link")], link["id"].as_str().unwrap());
        assert_eq!(rec[col("delivered_bytes")].parse::<u64>().unwrap(), link["delivered_bytes"].as_u64().unwrap());
        let share: f64 = rec[col("share")].parse().unwrap();
        assert!((share - link["share"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn missing_scenario_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = coexsim(&["run", "/nonexistent/x.toml", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn invalid_scenario_exits_2_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"bad\"\n[wifi]\nslot = 9\n").unwrap();
    let o = coexsim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wifi.slot"));

    let node = "[[nodes]]\nid = \"a\"\nkind = \"wifi\"\nx = 0.0\ny = 0.0\ntx_power_dbm = 20.0\nchannel_mhz = 2412.0\n";
    std::fs::write(&bad, format!("name = \"bad\"\n{node}{node}")).unwrap();
    let out = dir.path().join("r.json");
    let o = coexsim(&["run", bad.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate node id"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(coexsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(coexsim(&["run"]).status.code(), Some(1));
    assert_eq!(coexsim(&["compare", &path("colocated"), "--toggle", "nope"]).status.code(), Some(1));
}

#[test]
fn validate_prints_a_scenario_that_parses_back() {
    for name in common::CANONICAL {
        let o = coexsim(&["validate", &path(name)]);
        assert!(o.status.success());
        let back = coexsim::parse_scenario(&String::from_utf8(o.stdout).unwrap()).unwrap();
        assert_eq!(back, common::scenario(name));
    }
}

#[test]
fn compare_reports_each_seed() {
    let o = coexsim(&["compare", &path("colocated"), "--toggle", "clc", "--seeds", "1,2", "--duration-us", "2000000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["per_seed"].as_array().unwrap().len(), 2);
    assert_eq!(v["on"]["colocated_conflict_us"].as_f64(), Some(0.0));
}

#[test]
fn trace_file_matches_reported_hash() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.log");
    let o = coexsim(&["run", &path("lone-ss"), "--duration-us", "2000000", "--trace", trace.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let digest = hex::encode(Sha256::digest(std::fs::read(&trace).unwrap()));
    assert_eq!(v["trace_hash"].as_str().unwrap(), digest);
}
