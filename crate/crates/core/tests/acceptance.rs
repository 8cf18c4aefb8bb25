//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any fails.
//!
//! The desk-scale runs dominate: a few minutes on a single core.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyrect::analysis::{
    angular_breakdown, difference_sinogram, event_time_from_difference, mae_transition, metric_mask, AngleCategory,
    MaskPolicy, MetricsReport,
};
use dyrect::baseline::{reconstruct_sirt_with, reconstruct_sliding_window, SirtOptions};
use dyrect::dyrect::{
    reconstruct_dyrect, transition_step, update_attenuations, update_transition_time, CorrectionSample,
    CovarianceAccumulator, ScanSpan, VoxelCorrectionStats,
};
use dyrect::grid::rmse;
use dyrect::io::RunConfig;
use dyrect::phantom::{
    build_film_rupture_phantom, build_flow_phantom, downsample_event_volume, random_flow_spec, BubbleParams,
};
use dyrect::projector::{forward_project, normalize_exterior, project_static};
use dyrect::{AcquisitionGeometry, Beam, EventVolume, ProjectionSet, ReconParams, ScalarField3, VoxelGrid3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn desk_config() -> RunConfig {
    RunConfig::load(&configs().join("desk.conf")).expect("bundled desk config")
}

fn flow_phantom(c: &RunConfig) -> EventVolume {
    let spec = random_flow_spec(c.generation_grid().unwrap(), &c.phantom.flow, c.seed).unwrap();
    downsample_event_volume(&build_flow_phantom(&spec).unwrap(), c.grid().unwrap()).unwrap()
}

fn mid_scan(g: &AcquisitionGeometry) -> f64 {
    0.5 * (g.scan_start() + g.scan_end())
}

/// Known attenuations, transition times started at mid-scan.
fn frozen_init(truth: &EventVolume, g: &AcquisitionGeometry) -> EventVolume {
    EventVolume::new(truth.mu0.clone(), truth.mu1.clone(), ScalarField3::filled(*truth.grid(), mid_scan(g))).unwrap()
}

struct DeskRun {
    truth: EventVolume,
    geometry: AcquisitionGeometry,
    measured: ProjectionSet,
    recon: EventVolume,
    mae: f64,
    seconds: f64,
}

fn desk_run(c: &RunConfig, truth: EventVolume) -> DeskRun {
    let clock = Instant::now();
    let geometry = c.geometry().unwrap();
    let measured = forward_project(&truth, &geometry, c.recon.params.ray_step, None);
    let recon = reconstruct_dyrect(&measured, &c.recon.params, &frozen_init(&truth, &geometry), None).unwrap().volume;
    let mae = mae_transition(&truth, &recon, MaskPolicy::default()).unwrap();
    DeskRun { truth, geometry, measured, recon, mae, seconds: clock.elapsed().as_secs_f64() }
}

fn criterion_1(run: &DeskRun) -> Outcome {
    let mask = metric_mask(&run.truth, MaskPolicy::default()).len();
    outcome(
        run.mae <= 0.15,
        format!(
            "MAE(t*) = {:.4} rotations over {mask} contrast voxels (limit 0.15); {:.0} s wall time",
            run.mae, run.seconds
        ),
    )
}

fn criterion_2(c: &RunConfig, truth: &EventVolume, measured: &ProjectionSet) -> Outcome {
    let g = measured.geometry();
    let params = ReconParams { fit_attenuations: true, n_iterations: 8, ..c.recon.params.clone() };
    let init = EventVolume::uniform(*truth.grid(), 0.0, 0.0, mid_scan(g));
    let rec = reconstruct_dyrect(measured, &params, &init, None).unwrap().volume;
    let mae = mae_transition(truth, &rec, MaskPolicy::default()).unwrap();
    let range = truth.mu0.max().max(truth.mu1.max()) - truth.mu0.min().min(truth.mu1.min());
    let r0 = rmse(&truth.mu0, &rec.mu0).unwrap() / range;
    let r1 = rmse(&truth.mu1, &rec.mu1).unwrap() / range;
    outcome(
        mae <= 0.25 && r0 <= 0.15 && r1 <= 0.15,
        format!(
            "MAE(t*) = {mae:.4} (limit 0.25); RMSE(mu0) = {:.1}%, RMSE(mu1) = {:.1}% of range (limit 15%)",
            100.0 * r0,
            100.0 * r1
        ),
    )
}

fn criterion_3(c: &RunConfig, base: &DeskRun) -> Outcome {
    let mut rotated = c.clone();
    rotated.geometry.start_angle_deg += 90.0;
    let run = desk_run(&rotated, base.truth.clone());
    let change = (run.mae - base.mae).abs() / base.mae;
    outcome(
        change <= 0.5,
        format!(
            "MAE {:.4} at 0 deg vs {:.4} at 90 deg: {:.1}% relative change (limit 50%)",
            base.mae,
            run.mae,
            100.0 * change
        ),
    )
}

fn criterion_4(run: &DeskRun) -> Outcome {
    let ab = angular_breakdown(&run.truth, &run.recon, &run.geometry, MaskPolicy::default()).unwrap();
    for line in ab.to_csv().lines() {
        println!("    {line}");
    }
    let p = ab.get(AngleCategory::Parallel);
    let o = ab.get(AngleCategory::Orthogonal);
    outcome(
        p.count > 0 && o.count > 0 && p.mae <= 0.2 && o.mae <= 0.2,
        format!("parallel MAE {:.4} (n={}), orthogonal MAE {:.4} (n={}) (limit 0.2)", p.mae, p.count, o.mae, o.count),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_5(params: &ReconParams) -> Outcome {
    let rupture = 1.4;
    let grid = VoxelGrid3::cube(40, 1.0).unwrap();
    let truth = build_film_rupture_phantom(grid, &BubbleParams::default(), rupture).unwrap();
    let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 40, 60, 1.0, 180, 540, 0.0).unwrap();
    let measured = forward_project(&truth, &g, params.ray_step, None);
    let rec = reconstruct_dyrect(&measured, params, &frozen_init(&truth, &g), None).unwrap().volume;
    let wall = metric_mask(&truth, MaskPolicy::Dynamic);
    let med = median(wall.iter().map(|&i| rec.tstar.values()[i]).collect());
    let diff = difference_sinogram(&measured).unwrap();
    let Some(est) = event_time_from_difference(&diff, 0.1) else {
        return outcome(false, "difference sinogram shows no event");
    };
    outcome(
        (med - rupture).abs() <= 0.25 && (est - med).abs() <= 0.25,
        format!(
            "median t* over {} wall voxels = {med:.3} (truth 1.4, tol 0.25); difference sinogram {est:.3} (tol 0.25 of median)",
            wall.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..300);
        let offset = rng.random_range(-50.0..50.0);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let c: Vec<f64> = t.iter().map(|&x| offset + 0.3 * x + rng.random_range(-1.0..1.0)).collect();
        let mut acc = CovarianceAccumulator::new();
        for (&a, &b) in t.iter().zip(&c) {
            acc.push(a, b);
        }
        let nf = n as f64;
        let (mt, mc) = (t.iter().sum::<f64>() / nf, c.iter().sum::<f64>() / nf);
        let two_pass = t.iter().zip(&c).map(|(a, b)| (a - mt) * (b - mc)).sum::<f64>() / nf;
        worst = worst.max((acc.covariance() - two_pass).abs() / two_pass.abs());
    }
    ok &= worst <= 1e-10;
    notes.push(format!("(a) covariance rel. err {worst:.1e}"));

    let grid = VoxelGrid3::cube(64, 1.0).unwrap();
    let (r, mu) = (20.0, 0.5);
    let cyl = ScalarField3::from_fn(grid, |x| {
        let mut inside = 0;
        for a in 0..8 {
            for b in 0..8 {
                let px = x.x + (a as f64 + 0.5) / 8.0 - 0.5;
                let py = x.y + (b as f64 + 0.5) / 8.0 - 0.5;
                inside += usize::from(px * px + py * py <= r * r);
            }
        }
        mu * inside as f64 / 64.0
    });
    let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 8, 9, 1.0, 8, 2, 0.0).unwrap();
    let chord = project_static(&cyl, &g, 0.25).get(0, 4, 4);
    let rel = (chord - 2.0 * r * mu / 10.0).abs() / (2.0 * r * mu / 10.0);
    ok &= rel <= 0.01;
    notes.push(format!("(b) chord err {:.2}%", 100.0 * rel));

    let small = VoxelGrid3::cube(16, 1.0).unwrap();
    let field = ScalarField3::from_fn(small, |x| (0.6 - 0.03 * x.norm()).max(0.0));
    let tstar = ScalarField3::from_fn(small, |x| 1.0 + 0.02 * x.y);
    let gs = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 16, 24, 1.0, 24, 72, 0.3).unwrap();
    let same = project_static(&field, &gs, 0.5).data()
        == forward_project(&EventVolume::new(field.clone(), field.clone(), tstar).unwrap(), &gs, 0.5, None).data();
    ok &= same;
    notes.push(format!("(c) static == dynamic: {same}"));

    let big = VoxelGrid3::cube(32, 1.0).unwrap();
    let crucible = |x: dyrect::Vec3| if (12.0..=14.0).contains(&x.x.hypot(x.y)) { 2.5 } else { 0.0 };
    let inner = |x: dyrect::Vec3| if x.norm() <= 6.0 { 0.7 } else { 0.0 };
    let gc = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 32, 46, 1.0, 20, 20, 0.0).unwrap();
    let measured = project_static(&ScalarField3::from_fn(big, |x| crucible(x) + inner(x)), &gc, 0.5);
    let expected = project_static(&ScalarField3::from_fn(big, inner), &gc, 0.5);
    let got = normalize_exterior(&measured, &ScalarField3::from_fn(big, crucible), 0.5).unwrap();
    let dev = got.data().iter().zip(expected.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= dev <= 1e-6;
    notes.push(format!("(d) crucible residual {dev:.1e}"));

    outcome(ok, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let span = ScanSpan { start: 0.0, end: 3.0 };
    let stats = |minus: f64, plus: f64| VoxelCorrectionStats {
        sigma_minus: minus,
        sigma_plus: plus,
        mean_minus: 0.0,
        mean_plus: 0.0,
        n_minus: 10,
        n_plus: 10,
    };
    let p = ReconParams { lambda_t: 0.5, ..ReconParams::default() };
    let balanced = update_transition_time(&stats(0.7, 0.7), 0.2, 1.1, &p, 1.3, span) == 1.3;
    let flat = transition_step(&stats(3.0, -1.0), 0.6, 0.6, 1.0, 1.0, 1e-4) == 0.0
        && update_transition_time(&stats(3.0, -1.0), 0.6, 0.6, &p, 1.3, span) == 1.3;
    let up = update_transition_time(&stats(0.0, 1e12), 0.2, 1.1, &p, 1.5, span) - 1.5;
    let down = update_transition_time(&stats(1e12, 0.0), 0.2, 1.1, &p, 1.5, span) - 1.5;
    let clip = up == 0.25 && down == -0.25;
    let samples: Vec<CorrectionSample> = (0..90)
        .map(|j| {
            let t = j as f64 / 30.0;
            CorrectionSample { t, c: 0.0, mu: if t < 1.7 { 0.37 } else { 1.13 } }
        })
        .collect();
    let fixed = update_attenuations(&samples, 1.7, 0.3, 0.3, 0.37, 1.13) == (0.37, 1.13);
    outcome(
        balanced && flat && clip && fixed,
        format!("balanced sigmas: {balanced}; zero dmu: {flat}; clip +/-{up}/{down}: {clip}; zero-correction fixed point: {fixed}"),
    )
}

fn criterion_8() -> Outcome {
    let grid = VoxelGrid3::cube(16, 1.0).unwrap();
    let truth = ScalarField3::from_fn(grid, |x| if x.x.hypot(x.y) <= 5.0 { 0.5 } else { 0.0 });
    let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 16, 24, 1.0, 40, 120, 0.0).unwrap();
    let measured = project_static(&truth, &g, 0.5);
    let all: Vec<usize> = (0..g.n_views()).collect();
    let opts = SirtOptions { n_iterations: 10, relax: 0.5, ..SirtOptions::default() };
    let res = reconstruct_sirt_with(&measured, &all, grid, &opts, None).unwrap().residuals;
    let monotone = res.windows(2).all(|w| w[1] <= w[0]);

    let g240 = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 16, 24, 1.0, 80, 240, 0.0).unwrap();
    let frames = reconstruct_sliding_window(&project_static(&truth, &g240, 0.5), 40, 40, grid, 3).unwrap();
    outcome(
        monotone && res.len() == 10 && frames.len() == 6,
        format!(
            "SIRT residual {:.3e} -> {:.3e} non-increasing: {monotone}; sliding window 240/40 gives {} frames",
            res[0],
            res[res.len() - 1],
            frames.len()
        ),
    )
}

fn pipeline(out: &Path, threads: &str) -> std::io::Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_dyrect"))
        .args(["--config", configs().join("quick.conf").to_str().unwrap()])
        .args(["--output-dir", out.to_str().unwrap(), "--seed", "11", "--threads", threads, "pipeline"])
        .stderr(std::process::Stdio::null())
        .status()?;
    assert!(status.success(), "pipeline failed: {status}");
    Ok(())
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    pipeline(&a, "1").unwrap();
    pipeline(&b, "1").unwrap();
    pipeline(&c, "4").unwrap();
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    let identical = fa.len() == fb.len() && fa.iter().zip(&fb).all(|(x, y)| x == y);

    let read = |d: &Path| MetricsReport::parse(&fs::read_to_string(d.join("metrics.txt")).unwrap()).unwrap();
    let (m1, m4) = (read(&a), read(&c));
    let mut worst = 0.0f64;
    let mut same_keys = m1.entries().len() == m4.entries().len();
    for ((k1, v1), (k4, v4)) in m1.entries().iter().zip(m4.entries()) {
        same_keys &= k1 == k4;
        match (v1.parse::<f64>(), v4.parse::<f64>()) {
            (Ok(x), Ok(y)) => worst = worst.max((x - y).abs()),
            _ => same_keys &= v1 == v4,
        }
    }
    outcome(
        identical && same_keys && worst <= 1e-9,
        format!(
            "{} output files bit-identical across reruns: {identical}; max metric difference 1 vs 4 threads {worst:.1e}",
            fa.len()
        ),
    )
}

fn main() {
    let clock = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(&mut *f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{name}]: {verdict}: {} ({:.1} s)", o.detail, started.elapsed().as_secs_f64());
        results.push((id, name, o));
    };

    record(6, "oracle equivalences", &mut criterion_6);
    record(7, "update-rule unit cases", &mut criterion_7);
    record(8, "baseline behavior", &mut criterion_8);
    record(9, "determinism", &mut criterion_9);

    let c = desk_config();
    let base = catch_unwind(AssertUnwindSafe(|| desk_run(&c, flow_phantom(&c))));
    match &base {
        Ok(run) => {
            record(1, "desk-scale transition times", &mut || criterion_1(run));
            record(4, "angular breakdown", &mut || criterion_4(run));
            record(3, "90 degree start angle", &mut || criterion_3(&c, run));
            record(2, "joint estimation", &mut || criterion_2(&c, &run.truth, &run.measured));
        }
        Err(_) => {
            for (id, name) in [
                (1, "desk-scale transition times"),
                (4, "angular breakdown"),
                (3, "90 degree start angle"),
                (2, "joint estimation"),
            ] {
                record(id, name, &mut || outcome(false, "desk-scale run failed"));
            }
        }
    }
    record(5, "film rupture", &mut || criterion_5(&c.recon.params));

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        clock.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
