use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use obstacle_core::runner::{self, ExitStatus, ExperimentConfig, OUTPUT_ROOT_VAR};

fn lab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obstacle-lab"))
        .args(args)
        .env(OUTPUT_ROOT_VAR, root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cal.cfg",
        "experiment.kind = calibrate\nexperiment.output = cal\ncalibrate.radius = 1\nnumeric.h = 1/32\n",
    );
    let out = lab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("cal/results.csv"));
    assert_eq!(header, ["R", "h", "flux_error", "field_error", "converged"]);
    assert_eq!(rows.len(), 1);
    assert!(column(&header, &rows, "field_error")[0] < 1e-6);
    let manifest = fs::read_to_string(dir.path().join("cal/manifest.txt")).unwrap();
    assert!(manifest.contains("run.status = 0"));
    assert!(manifest.contains("calibrate.radius = 1\n"));
    assert!(manifest.contains("numeric.h = 1/32\n"));
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "experiment.kind = serrin\nnumeric.h == 1/64\n");
    let out = lab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = lab(dir.path(), &["run", &dir.path().join("absent.cfg").to_string_lossy()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn hypothesis_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // support radius √2 does not fit inside the unit ball
    let cfg = write_config(
        dir.path(),
        "wide.cfg",
        "experiment.kind = serrin\nobstacle.kind = cap\nobstacle.params = 1, 0.5\nnumeric.h = 1/32\n",
    );
    let out = lab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn flagged_non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "short.cfg",
        "experiment.kind = serrin\nnumeric.h = 1/32\nnumeric.max_sweeps = 3\n",
    );
    let out = lab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("serrin/results.csv").exists());
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cal.cfg", "experiment.kind = calibrate\n");
    let out = lab(dir.path(), &["sweep", &cfg, "--param", "numeric.h", "--values", ""]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("calibrate/sweep.csv")).unwrap();
    assert_eq!(text, "numeric.h,R,h,flux_error,field_error,converged\n");
}

#[test]
fn sweep_rejects_non_numeric_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cal.cfg", "experiment.kind = calibrate\n");
    let out = lab(dir.path(), &["sweep", &cfg, "--param", "domain.kind", "--values", "ball"]);
    assert_eq!(out.status.code(), Some(1));
    let out = lab(dir.path(), &["sweep", &cfg, "--param", "numeric.colour", "--values", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

fn without_timestamps(manifest: &str) -> String {
    manifest
        .lines()
        .filter(|l| !l.starts_with("run.started_unix") && !l.starts_with("run.elapsed_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment.kind = serrin\ndomain.kind = ellipse\ndomain.params = 1, 1.3\nnumeric.h = 1/32\nexperiment.seed = 7\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let a = runner::run(&cfg, &dir.path().join("a")).unwrap();
    let b = runner::run(&cfg, &dir.path().join("b")).unwrap();
    assert_eq!(a.status, ExitStatus::Success);
    assert_eq!(a.files.len(), b.files.len());
    for (fa, fb) in a.files.iter().zip(&b.files) {
        assert_eq!(fa.file_name(), fb.file_name());
        let (ta, tb) = (fs::read(fa).unwrap(), fs::read(fb).unwrap());
        if fa.ends_with("manifest.txt") {
            let (ma, mb) = (String::from_utf8(ta).unwrap(), String::from_utf8(tb).unwrap());
            assert_eq!(without_timestamps(&ma), without_timestamps(&mb));
        } else {
            assert_eq!(ta, tb, "{}", fa.display());
        }
    }
}

#[test]
fn stability_sweep_rows_are_satisfied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "experiment.kind = stability-sweep\ndomain.kind = perturbed-ball\ndomain.amplitudes = 0.02, 0.05, 0.1\n",
    )
    .unwrap();
    let out = runner::run(&cfg, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Success);
    let (header, rows) = csv_rows(&out.directory.join("results.csv"));
    assert_eq!(rows.len(), 3);
    let k = header.iter().position(|h| h == "satisfied").unwrap();
    assert!(rows.iter().all(|r| r[k] == "true"), "{rows:?}");
}

#[test]
fn refinement_sweep_shrinks_eps_on_the_ball() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("experiment.kind = serrin\ndomain.kind = ball\n").unwrap();
    let values = ["1/64", "1/128", "1/256"].map(String::from);
    let out = runner::sweep(&cfg, "numeric.h", &values, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Success);
    let (header, rows) = csv_rows(&out.files[0]);
    assert_eq!(header[0], "numeric.h");
    let eps = column(&header, &rows, "eps");
    assert_eq!(eps.len(), 3);
    assert!(eps[0] > eps[1] && eps[1] > eps[2], "{eps:?}");
}

#[test]
fn planar_probe_sweep_keeps_drifting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("experiment.kind = exterior-probe\nobstacle.dimension = 2\n").unwrap();
    let values = ["4", "8", "16"].map(String::from);
    let out = runner::sweep(&cfg, "probe.schedule", &values, dir.path()).unwrap();
    let (header, rows) = csv_rows(&out.files[0]);
    let d = column(&header, &rows, "d");
    assert_eq!(d.len(), 3);
    // d(L) keeps moving with L; the relative step shrinks like 1/log L, so
    // only the first doubling clears 10%.
    let steps: Vec<f64> = d.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).collect();
    assert!(steps[0] > 0.1, "{steps:?}");
    assert!(steps[1] > 0.05, "{steps:?}");
    assert!(d.windows(2).all(|w| w[1] < w[0]) || d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
}
