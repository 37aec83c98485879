//! End-to-end runs of the `cardiac-si` binary on small configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const STRIP: &str = "\
[model]
kind = bidomain

[geometry]
extents = 0.5 0.1 0.025 mm
h = 0.025 mm

[stepping]
dt = 0.1 ms
t_end = 5 ms

[protocol]
s1_amplitude = 100 uA/uF
intervals = 200 210 ms
resolution = 50 uA/uF
electrode_origin = 0.0 0.0 0.0 mm
electrode_extents = 0.1 0.1 0.025 mm
resting_horizon = 15 ms
s2_horizon = 15 ms

[output]
snapshot_every = 1 ms
vtk = true
";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cardiac-si"));
    cmd.env_remove("CARDIAC_SI_OUT_DIR");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_passes() {
    let out = bin().arg("verify").output().unwrap();
    assert_ok(&out);
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn unknown_key_is_reported_as_json_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "[model]\nkind = bidomain\n\n[stepping]\nbogus = 1\n");
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["line"], 5);
    assert!(err["error"]["message"].as_str().unwrap().contains("bogus"));
}

#[test]
fn derive_chi_default_layout() {
    let out = bin().arg("derive-chi").output().unwrap();
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("154"), "{text}");
    assert!(text.contains("150"), "{text}");
}

#[test]
fn compare_identical_curves_has_zero_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = "# config-sha256: 00\ninterval_ms,threshold_uA_per_uF,normalized,mechanism\n\
               142,300,2.0,make\n150,200,1.3333,break\n157,150,1.0,break\n";
    let a = write(tmp.path(), "a.csv", csv);
    let b = write(tmp.path(), "b.csv", csv);
    let out = bin().arg("compare").arg(&a).arg(&b).arg("--out").arg(tmp.path()).output().unwrap();
    assert_ok(&out);
    assert!(stdout(&out).contains("max_abs_gap = 0"), "{}", stdout(&out));
    let svg = fs::read_to_string(tmp.path().join("compare.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(tmp.path().join("compare_gaps.csv").exists());
}

#[test]
fn simulate_writes_traces_vtk_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "strip.cfg", STRIP);
    let dir = tmp.path().join("run");
    let out = bin().args(["simulate", "--dump-matrix", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_ok(&out);
    let traces = fs::read_to_string(dir.join("traces.csv")).unwrap();
    let mut lines = traces.lines();
    assert!(lines.next().unwrap().starts_with("# config-sha256: "));
    assert_eq!(lines.next().unwrap(), "t_ms,probe1_mV,probe2_mV,probe3_mV,probe4_mV");
    assert_eq!(lines.count(), 51);
    let mesh = fs::read_to_string(dir.join("vtk/mesh.vtk")).unwrap();
    assert!(mesh.starts_with("# vtk DataFile Version"));
    assert!(mesh.contains("volume_tag") && mesh.contains("surface_tag"));
    assert!(dir.join("vtk/frames.vtk.series").exists());
    let mtx = fs::read_to_string(dir.join("system.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real"));
}

#[test]
fn output_dir_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "strip.cfg", &STRIP.replace("vtk = true", "vtk = false"));
    let dir = tmp.path().join("from_env");
    let out = bin().args(["simulate", "--config"]).arg(&cfg).env("CARDIAC_SI_OUT_DIR", &dir).output().unwrap();
    assert_ok(&out);
    assert!(dir.join("traces.csv").exists());
}

#[test]
fn measure_cv_reports_positive_velocity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "strip.cfg", &STRIP.replace("t_end = 5 ms", "t_end = 15 ms"));
    let out = bin().args(["measure-cv", "--direction", "x", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_ok(&out);
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("cv_x")).expect("cv_x line");
    let cv: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(cv > 0.0 && cv.is_finite(), "{line}");
}

#[test]
fn si_curve_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "strip.cfg", STRIP);
    let run = |name: &str, jobs: &str| {
        let dir = tmp.path().join(name);
        let out = bin().args(["si-curve", "--jobs", jobs, "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
        assert_ok(&out);
        fs::read(dir.join("si_curve.csv")).unwrap()
    };
    let first = run("a", "1");
    assert_eq!(first, run("b", "2"));
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 4);
}
