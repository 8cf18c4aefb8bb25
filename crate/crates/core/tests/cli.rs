use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
phantom.grid = 16
phantom.n_regions = 4
geometry.det_rows = 16
geometry.det_cols = 24
geometry.pixel_pitch_mm = 4
geometry.projections_per_rotation = 24
recon.lambda_delta = 10
recon.lambda_mu = 1000
recon.n_iterations = 2
recon.n_subsets = 2
";

fn dyrect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyrect")).args(args).output().unwrap()
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

fn run_in(dir: &Path, conf: &Path, out: &str, args: &[&str]) -> Output {
    let out = dir.join(out);
    let mut all = vec!["--config", conf.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    all.extend_from_slice(args);
    dyrect(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = dyrect(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly() {
    let o = dyrect(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["phantom", "simulate", "reconstruct", "analyze", "pipeline"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "recon.colour = blue\n");
    assert_eq!(run_in(dir.path(), &conf, "o", &["pipeline"]).status.code(), Some(1));
    let missing = dir.path().join("absent.conf");
    assert_eq!(run_in(dir.path(), &missing, "o", &["pipeline"]).status.code(), Some(1));
}

#[test]
fn analyze_without_inputs_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "");
    let o = run_in(dir.path(), &conf, "empty", &["analyze", "--metric", "mae"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn pipeline_writes_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "");
    let o = run_in(dir.path(), &conf, "out", &["pipeline"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("mae_rotations="));
    assert!(metrics.contains("mae_parallel="));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains(&format!("version={}", env!("CARGO_PKG_VERSION"))));
    assert!(manifest.contains("recon.n_iterations=2"));
    for f in [
        "phantom_tstar.raw",
        "projections.raw",
        "projections_views.csv",
        "recon_tstar.raw",
        "residuals.csv",
        "angles.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "");
    for out in ["a", "b"] {
        let o = run_in(dir.path(), &conf, out, &["--seed", "5", "--threads", "1", "pipeline"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (a, b) = (files(&dir.path().join("a")), files(&dir.path().join("b")));
    assert_eq!(a.len(), b.len());
    for ((na, da), (nb, db)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs");
    }
    let o = run_in(dir.path(), &conf, "c", &["--seed", "6", "phantom"]);
    assert_eq!(o.status.code(), Some(0));
    let c = fs::read(dir.path().join("c/phantom_tstar.raw")).unwrap();
    assert_ne!(c, fs::read(dir.path().join("a/phantom_tstar.raw")).unwrap());
}

#[test]
fn stages_run_separately() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config(dir.path(), "recon.window_views = 24\nrecon.stride_views = 24\nrecon.sirt_iterations = 2\n");
    for args in
        [&["phantom"][..], &["simulate"], &["reconstruct", "--method", "sirt"], &["reconstruct", "--method", "sliding"]]
    {
        let o = run_in(dir.path(), &conf, "s", args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    }
    let out = dir.path().join("s");
    assert!(out.join("recon_sirt.raw").exists());
    let frames = fs::read_to_string(out.join("frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + 3);
    let o = run_in(dir.path(), &conf, "s", &["analyze", "--metric", "diffsino"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("metrics.txt")).unwrap().contains("event_time_diffsino="));
}
