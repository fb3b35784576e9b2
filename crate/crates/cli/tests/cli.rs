use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contactlab"))
}

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write(dir: &Path, file: &str, body: &str) -> PathBuf {
    let p = dir.join(file);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn spectrum_scenario_passes_with_gap_pi() {
    let d = scratch("spectrum");
    let p = write(&d, "spectrum.json", r#"{"kind": "spectrum", "params": {"n_modes": 256, "gap_trials": 200, "expected_gap": 3.141592653589793}}"#);
    let out = run(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = String::from_utf8(out.stdout).unwrap();
    let scalars = contactlab::scenario::parse_report_scalars(&json).unwrap();
    assert!((scalars["gap"] - std::f64::consts::PI).abs() < 1e-8);
    assert!(!json.contains("\"fail\""));
}

#[test]
fn exit_codes() {
    let d = scratch("codes");
    let bad_kind = write(&d, "k.json", r#"{"kind": "spectre"}"#);
    assert_eq!(run(&["run", bad_kind.to_str().unwrap()]).status.code(), Some(2));
    let bad_key = write(&d, "u.json", r#"{"kind": "orbit", "params": {"guesss": [0, 0, 0]}}"#);
    assert_eq!(run(&["run", bad_key.to_str().unwrap()]).status.code(), Some(2));
    let missing = d.join("absent.json");
    assert_eq!(run(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    let csv_no_out = write(&d, "c.json", r#"{"kind": "three_interval", "params": {"sequences": 5, "c_points": 2}}"#);
    assert_eq!(run(&["run", csv_no_out.to_str().unwrap(), "--format", "csv"]).status.code(), Some(2));
    let failing = write(&d, "f.json", r#"{"kind": "three_interval", "params": {"sequences": 0, "c_points": 0, "x": [1.0, 5.0, 1.0], "gamma": 0.3}}"#);
    let out = run(&["run", failing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let json = String::from_utf8(out.stdout).unwrap();
    assert!(json.contains("\"verdict\": \"fail\""));
    assert!(json.contains("\"offending\": 1"));
    let no_orbit = write(&d, "n.json", r#"{"kind": "orbit", "params": {"chart": {"name": "torus_cover"}, "guess": [0.0, 0.0, 0.3]}}"#);
    assert_eq!(run(&["run", no_orbit.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let d = scratch("determinism");
    let p = write(&d, "dual.json", r#"{"kind": "dual_checks", "seed": 11, "params": {"samples": 200}}"#);
    let a = run(&["run", p.to_str().unwrap()]);
    let b = run(&["run", p.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["run", p.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);

    let p = write(&d, "decay.json", r#"{"kind": "cylinder_decay", "params": {"n_modes": 8, "r": 10.0, "n_tau": 128, "n_t": 32}}"#);
    let (o1, o2) = (d.join("o1"), d.join("o2"));
    for o in [&o1, &o2] {
        let out = run(&["run", p.to_str().unwrap(), "--out", o.to_str().unwrap(), "--format", "csv"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["scalars.csv", "verdicts.csv", "decay.csv"] {
        assert_eq!(fs::read(o1.join("decay").join(f)).unwrap(), fs::read(o2.join("decay").join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(o1.join("decay").join("decay.csv")).unwrap();
    assert!(table.starts_with("tau,norm,fitted\n"));
    assert_eq!(table.lines().count(), 129);
}

#[test]
fn json_report_round_trips_scalars() {
    let d = scratch("roundtrip");
    let p = write(&d, "ti.json", r#"{"kind": "three_interval", "seed": 2, "params": {"sequences": 50, "c_points": 30, "c": 1.1}}"#);
    let out_dir = d.join("out");
    let out = run(&["run", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json = fs::read_to_string(out_dir.join("ti.json")).unwrap();
    let parsed = contactlab::scenario::parse_report_scalars(&json).unwrap();
    let direct = contactlab::scenario::run_path(&p, None).unwrap();
    assert_eq!(parsed.len(), direct.scalars.len());
    for (k, v) in &direct.scalars {
        assert_eq!(parsed[k].to_bits(), v.to_bits(), "{k}");
    }
}

#[test]
fn suite_aggregates() {
    let d = scratch("suite");
    write(&d, "a.json", r#"{"kind": "three_interval", "params": {"sequences": 10, "c_points": 3}}"#);
    write(&d, "b.json", r#"{"kind": "dual_checks", "params": {"samples": 10}}"#);
    let out = run(&["suite", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    write(&d, "c.json", r#"{"kind": "spectre"}"#);
    assert_eq!(run(&["suite", d.to_str().unwrap()]).status.code(), Some(2));
}
