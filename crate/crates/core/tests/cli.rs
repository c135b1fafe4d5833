use std::path::Path;
use std::process::{Command, Output};

use v2vsim::sim::demos;

fn v2vsim(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_v2vsim"));
    cmd.args(args).env_remove("V2VSIM_SEED");
    if let Some(s) = seed {
        cmd.env("V2VSIM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn write_demo(dir: &Path, name: &str) -> String {
    let path = dir.join(format!("{name}.scn"));
    std::fs::write(&path, demos::find(name).unwrap().source).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_exit_codes_follow_outcome() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&v2vsim(&["run", &write_demo(dir.path(), "ps-baseline")], None)), 2);
    // A run that ends in an abort is not the expected demo outcome here.
    assert_eq!(code(&v2vsim(&["run", &write_demo(dir.path(), "basic-defense")], None)), 3);
}

#[test]
fn demo_defenses_exit_zero() {
    for d in ["basic-defense", "laser-defense", "puf-defense"] {
        let o = v2vsim(&["demo", d], None);
        assert_eq!(code(&o), 0, "{d}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: HANDSHAKE_ABORTED"));
    }
    let o = v2vsim(&["demo", "ps-baseline"], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("brake warning"));
}

#[test]
fn trace_file_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_demo(dir.path(), "laser-defense");
    let trace = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let o = v2vsim(&["run", &scn, "--trace", out.to_str().unwrap()], seed);
        assert_eq!(code(&o), 3);
        std::fs::read_to_string(out).unwrap()
    };
    let a = trace("a.trace", None);
    let b = trace("b.trace", None);
    let c = trace("c.trace", Some("4242"));
    let d = trace("d.trace", Some("4242"));
    assert_eq!(a, b);
    assert_eq!(c, d);
    assert_ne!(a, c);
    assert!(a.lines().last().unwrap().contains("\tVERDICT\t"));
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "variant = V7\n").unwrap();
    let o = v2vsim(&["run", bad.to_str().unwrap()], None);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
    assert_eq!(code(&v2vsim(&["run", dir.path().join("missing.scn").to_str().unwrap()], None)), 1);
    assert_eq!(code(&v2vsim(&["demo", "nope"], None)), 1);
    assert_eq!(code(&v2vsim(&["frobnicate"], None)), 1);
    assert_eq!(code(&v2vsim(&["--help"], None)), 0);
    let scn = write_demo(dir.path(), "ps-baseline");
    assert_eq!(code(&v2vsim(&["run", &scn], Some("not-a-number"))), 1);
}

#[test]
fn search_reports_attack_or_none() {
    let dir = tempfile::tempdir().unwrap();
    let v0 = write_demo(dir.path(), "ps-baseline");
    let o = v2vsim(&["search", &v0, "--max-actions", "2"], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("violated: SECRECY"));
    let v1 = write_demo(dir.path(), "basic-defense");
    let o = v2vsim(&["search", &v1, "--max-actions", "1"], None);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("NO_ATTACK_FOUND(explored="));
    assert_eq!(code(&v2vsim(&["search", &v1, "--max-actions", "3", "--budget", "5"], None)), 1);
}

#[test]
fn list_demos_names_all() {
    let o = v2vsim(&["list-demos"], None);
    let out = String::from_utf8_lossy(&o.stdout);
    for d in &demos::DEMOS {
        assert!(out.contains(d.name));
    }
}
