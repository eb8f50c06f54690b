use std::path::Path;
use std::process::{Command, Output};

use ccsi::analysis::{read_curves, read_map_csv, Landscape};
use ccsi::scenario::MeasurementSet;

const SMALL: &str = r#"{
  "source_angles_deg": [0, 90, 180, 270],
  "receiver_relative_angles_deg": [90, 120, 150, 180, 210, 240, 270],
  "radius_m": 1.5,
  "frequencies_hz": [2e8, 4e8],
  "inversion_cell_m": 0.05,
  "domain_half_width_m": 0.9,
  "delta_eps": 1.0,
  "delta_sigma_s_per_m": 0.002,
  "max_iterations": 5,
  "landscape_samples": 5
}"#;

fn ccsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccsi")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr:\n{}", o.status, String::from_utf8_lossy(&o.stderr));
}

#[test]
fn phantom_writes_maps_and_materialized_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(&ccsi(&["phantom", "--config", s(&cfg), "--out", s(&out)]));
    let map = read_map_csv(&out.join("phantom.csv")).unwrap();
    assert_eq!(map.names, ["delta_eps", "delta_sigma"]);
    assert!(map.values[0].iter().any(|v| *v == 1.0));
    for f in ["phantom_delta_eps.pgm", "phantom_delta_eps.pgm.txt", "phantom_delta_sigma.pgm"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["landscape_samples"], 5);
    assert_eq!(written["pml_cells"], 10);
    assert_eq!(written["synthesis_cell_m"], 0.025);
    assert_eq!(written["variant"], "cc");
    assert_eq!(written["output_dir"], s(&out));
}

#[test]
fn inversions_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    ok(&ccsi(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "7", "--snr-db", "30"]));
    let data = out.join("measurements.csv");
    let ms = MeasurementSet::<f64>::read_csv(&data).unwrap();
    assert_eq!((ms.n_sources(), ms.n_frequencies(), ms.n_receivers()), (4, 2, 7));

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        ok(&ccsi(&["invert", "--config", s(&cfg), "--data", s(&data), "--out", s(o), "--seed", "7", "--threads", "1"]));
    }
    let la = std::fs::read(a.join("log.csv")).unwrap();
    assert_eq!(la, std::fs::read(b.join("log.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("contrast.csv")).unwrap(), std::fs::read(b.join("contrast.csv")).unwrap());
    let log = read_curves(&a.join("log.csv")).unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().all(|r| r.err.is_finite()));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    ok(&ccsi(&["simulate", "--config", s(&cfg), "--out", s(&out)]));
    let data = out.join("measurements.csv");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&ccsi(&["invert", "--config", s(&cfg), "--data", s(&data), "--out", s(&a), "--threads", "1", "--iterations", "3"]));
    ok(&ccsi(&["invert", "--config", s(&cfg), "--data", s(&data), "--out", s(&b), "--threads", "3", "--iterations", "3"]));
    assert_eq!(std::fs::read(a.join("log.csv")).unwrap(), std::fs::read(b.join("log.csv")).unwrap());
}

#[test]
fn zero_contrast_simulation_has_no_scattered_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"delta_eps\": 1.0", "\"delta_eps\": 0.0").replace("0.002", "0.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    ok(&ccsi(&["simulate", "--config", s(&cfg), "--out", s(&out), "--snr-db", "inf"]));
    let ms = MeasurementSet::<f64>::read_csv(&out.join("measurements.csv")).unwrap();
    let inc = ms.incident.as_ref().unwrap();
    for p in 0..4 {
        for i in 0..2 {
            let scale = inc[p][i].iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(ms.scattered[p][i].iter().all(|z| z.norm() <= 1e-12 * scale));
        }
    }
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"radius_m": 0, "frequencies_hz": [], "max_iterations": -3, "pml": 4}"#);
    let o = ccsi(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["radius_m", "frequencies_hz is empty", "max_iterations", "pml: unknown key"] {
        assert!(err.contains(needle), "missing {needle:?} in\n{err}");
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn existing_outputs_need_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(&ccsi(&["phantom", "--config", s(&cfg), "--out", s(&out)]));
    let o = ccsi(&["phantom", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--overwrite"));
    ok(&ccsi(&["phantom", "--config", s(&cfg), "--out", s(&out), "--overwrite"]));
}

#[test]
fn missing_data_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = ccsi(&["invert", "--config", s(&cfg), "--out", s(&dir.path().join("x")), "--data", "/nonexistent/m.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn landscape_from_two_inversions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(&ccsi(&["simulate", "--config", s(&cfg), "--out", s(&out), "--snr-db", "inf"]));
    let data = out.join("measurements.csv");
    let cc = dir.path().join("cc");
    let plain = dir.path().join("plain");
    ok(&ccsi(&["invert", "--config", s(&cfg), "--data", s(&data), "--out", s(&cc)]));
    ok(&ccsi(&["invert", "--config", s(&cfg), "--data", s(&data), "--out", s(&plain), "--variant", "plain"]));
    let ls = dir.path().join("ls");
    ok(&ccsi(&[
        "landscape",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--cc",
        s(&cc.join("state.json")),
        "--mr",
        s(&plain.join("state.json")),
        "--out",
        s(&ls),
    ]));
    let l = Landscape::read_csv(&ls.join("landscape.csv")).unwrap();
    assert_eq!((l.beta1.len(), l.beta2.len()), (5, 5));
    assert_eq!(l.beta1, [-1.5, -0.75, 0.0, 0.75, 1.5]);
    // all-zero contrast at the origin
    assert!(l.value(2, 2).is_nan());
    assert_eq!(l.log10_cost.iter().filter(|v| v.is_finite()).count(), 24);
}

#[test]
fn validate_reports_passing_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccsi(&["validate", "--out", s(dir.path())]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text, std::fs::read_to_string(dir.path().join("validate.txt")).unwrap());
    assert!(text.lines().count() >= 7);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn unknown_variant_is_rejected_by_the_parser() {
    let o = ccsi(&["invert", "--variant", "fast"]);
    assert_eq!(o.status.code(), Some(2));
}
