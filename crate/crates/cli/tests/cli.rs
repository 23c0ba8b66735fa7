use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn banderson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banderson"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn verdict(dir: &Path, sub: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{sub}.json"))).unwrap()).unwrap()
}

#[test]
fn expansion_writes_schema_and_verdict() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "expansion.l = 2,3\nrun.r = 100,200,400,800\n");
    let out = tmp.path().join("out");
    let res = banderson(&["expansion", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("expansion.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("l,a,b,r,n,exact,predicted,residual"));
    // 2 lengths with 2 + 3 modes, 16 (a, b) pairs, 4 values of r
    assert_eq!(lines.count(), 5 * 16 * 4);
    let v = verdict(&out, "expansion");
    assert_eq!(v["subcommand"], "expansion");
    assert_eq!(v["pass"], true);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["failures"].as_array().unwrap().is_empty());
}

#[test]
fn missing_lengths_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "geometry.d = 2\n");
    let res = banderson(&["multiplicity", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("geometry.lengths"));
}

#[test]
fn unknown_key_names_its_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "geometry.lengths = 2,2\nfrobnicate = 1\n");
    let res = banderson(&["partition", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("frobnicate") && err.contains('2'), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(banderson(&["nonsense"]).status.code(), Some(2));
    assert_eq!(banderson(&["cluster"]).status.code(), Some(2));
}

#[test]
fn cossum_without_config() {
    let tmp = TempDir::new().unwrap();
    let res = banderson(&["cossum", "--p", "5,7", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = verdict(tmp.path(), "cossum");
    assert_eq!(v["admissible"], true);
    assert_eq!(v["tuples"], 24);
    assert_eq!(v["zeros"], 0);
    assert_eq!(v["pass"], true);
}

#[test]
fn cossum_reports_inadmissible_zeros_without_failing() {
    let tmp = TempDir::new().unwrap();
    let res = banderson(&["cossum", "--p", "3,3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let v = verdict(tmp.path(), "cossum");
    assert_eq!(v["admissible"], false);
    assert!(v["zeros"].as_u64().unwrap() > 0);
    let witnesses = fs::read_to_string(tmp.path().join("cossum.csv")).unwrap();
    assert!(witnesses.lines().any(|l| l == "1 2"));
}

#[test]
fn partition_checks_identities() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "geometry.lengths = 2,3\ngeometry.radius = 1\n");
    let res = banderson(&["partition", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let v = verdict(tmp.path(), "partition");
    assert_eq!(v["sites"], 54);
    assert_eq!(v["boxes"], 9);
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "geometry.lengths = 2,4\ndisorder.seeds = 2\ndisorder.base_seed = 11\nrun.lambda = 2,3\nrun.r = 500\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let res = banderson(&["cluster", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(fs::read(a.join("cluster.csv")).unwrap(), fs::read(b.join("cluster.csv")).unwrap());
    assert_eq!(fs::read(a.join("cluster.json")).unwrap(), fs::read(b.join("cluster.json")).unwrap());
}

#[test]
fn multiplicity_histograms_cover_the_box() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "geometry.lengths = 2,2\ndisorder.seeds = 4\nrun.r = 300\n");
    let res = banderson(&["multiplicity", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(tmp.path().join("multiplicity.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let hist = line.split(',').nth(3).unwrap();
        let total: usize = hist
            .split_whitespace()
            .map(|e| {
                let (s, c) = e.split_once(':').unwrap();
                s.parse::<usize>().unwrap() * c.parse::<usize>().unwrap()
            })
            .sum();
        assert_eq!(total, 4);
    }
}

#[test]
fn failing_assertion_exits_1() {
    let tmp = TempDir::new().unwrap();
    // unit coefficients leave the selection sums well inside 1/δ of each other
    let cfg = write_config(
        tmp.path(),
        "separation.sets = 0.3,0.7;0.4,0.9\nseparation.a = 1,1\n",
    );
    let res = banderson(&["separation", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!verdict(tmp.path(), "separation")["failures"].as_array().unwrap().is_empty());
}
