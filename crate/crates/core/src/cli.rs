//! Command-line front end: `phantom`, `simulate`, `reconstruct`, `analyze`
//! and `pipeline` subcommands over a shared run configuration and output
//! directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{
    angular_breakdown, cooccurrence_hist, difference_sinogram, event_time_from_difference, mae_transition, metric_mask,
    MaskPolicy, MetricsReport,
};
use crate::baseline::{reconstruct_sirt_with, reconstruct_sliding_window_with, SirtOptions};
use crate::dyrect::{reconstruct_dyrect_with_progress, DyrectOutput};
use crate::error::Error;
use crate::grid::{rmse, ScalarField3};
use crate::io::{self, InitMode, Method, NoiseModel, PhantomKind, RunConfig};
use crate::phantom::{build_film_rupture_phantom, build_flow_phantom, downsample_event_volume, random_flow_spec};
use crate::projection::ProjectionSet;
use crate::projector::forward_project;
use crate::volume::EventVolume;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const NOISE_STREAM: u64 = 0x6e6f697365;

#[derive(Debug, Parser)]
#[command(name = "dyrect", version, about = "Event-based 4D CT reconstruction")]
struct Cli {
    /// Run configuration (key=value); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the ground-truth phantom.
    Phantom,
    /// Forward-project the phantom, optionally adding noise.
    Simulate,
    /// Reconstruct from the simulated projections.
    Reconstruct {
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Compare reconstruction and ground truth.
    Analyze {
        #[arg(long, value_enum, default_value_t = MetricArg::Mae)]
        metric: MetricArg,
    },
    /// Run every enabled stage.
    Pipeline,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Dyrect,
    Sirt,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Mae,
    Hist,
    Angles,
    Diffsino,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(Error::Numerical(_)) => EXIT_NUMERICAL,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Data(err) => eprintln!("error: {err}"),
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Command::Reconstruct { method: Some(m) } = cli.command {
        config.recon.method = match m {
            MethodArg::Dyrect => Method::Dyrect,
            MethodArg::Sirt => Method::Sirt,
            MethodArg::Sliding => Method::Sliding,
        };
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.threads)))?;
    let run = Run { config };
    pool.install(|| {
        let name = match &cli.command {
            Command::Phantom => "phantom",
            Command::Simulate => "simulate",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Analyze { .. } => "analyze",
            Command::Pipeline => "pipeline",
        };
        run.write_manifest(name)?;
        match cli.command {
            Command::Phantom => run.phantom().map(drop),
            Command::Simulate => run.simulate(None).map(drop),
            Command::Reconstruct { .. } => run.reconstruct(None, None).map(drop),
            Command::Analyze { metric } => run.analyze(&[metric], None),
            Command::Pipeline => run.pipeline(),
        }
    })
}

/// What a reconstruction stage produced.
enum Reconstruction {
    Event(DyrectOutput),
    Static(ScalarField3),
    Frames(Vec<crate::baseline::Frame>),
}

struct Run {
    config: RunConfig,
}

impl Run {
    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn write_manifest(&self, command: &str) -> CliResult<()> {
        let mut s = String::new();
        let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command={command}");
        // the output location is not part of the experiment
        for line in self.config.to_kv_string().lines().filter(|l| !l.starts_with("output_dir=")) {
            let _ = writeln!(s, "{line}");
        }
        io::write_text(&self.out("manifest.txt"), &s)?;
        Ok(())
    }

    fn phantom(&self) -> CliResult<EventVolume> {
        let c = &self.config;
        let grid = c.grid()?;
        let vol = match c.phantom.kind {
            PhantomKind::Flow => {
                let fine = c.generation_grid()?;
                let spec = random_flow_spec(fine, &c.phantom.flow, c.seed)?;
                let v = build_flow_phantom(&spec)?;
                if fine == grid {
                    v
                } else {
                    downsample_event_volume(&v, grid)?
                }
            }
            PhantomKind::Rupture => build_film_rupture_phantom(grid, &c.phantom.bubble, c.phantom.rupture_time)?,
        };
        io::write_event_volume(&self.out("phantom"), &vol)?;
        eprintln!("phantom: {} voxels, {} dynamic", grid.len(), vol.delta_mu().iter().filter(|d| **d != 0.0).count());
        Ok(vol)
    }

    fn load_phantom(&self, given: Option<EventVolume>) -> CliResult<EventVolume> {
        match given {
            Some(v) => Ok(v),
            None => Ok(io::read_event_volume(&self.out("phantom"))?),
        }
    }

    fn simulate(&self, phantom: Option<EventVolume>) -> CliResult<ProjectionSet> {
        let c = &self.config;
        let truth = self.load_phantom(phantom)?;
        let geometry = c.geometry()?;
        let mut proj = forward_project(&truth, &geometry, c.recon.params.ray_step, None);
        if let NoiseModel::Gaussian { sigma } = c.noise {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ NOISE_STREAM);
                for v in proj.data_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
        }
        io::write_projections(&self.out("projections.raw"), &proj)?;
        eprintln!("simulate: {} views of {}x{}", geometry.n_views(), geometry.det_rows, geometry.det_cols);
        Ok(proj)
    }

    fn reconstruct(&self, phantom: Option<EventVolume>, proj: Option<ProjectionSet>) -> CliResult<Reconstruction> {
        let c = &self.config;
        let measured = match proj {
            Some(p) => p,
            None => io::read_projections(&self.out("projections.raw"))?,
        };
        let grid = c.grid()?;
        let all: Vec<usize> = (0..measured.geometry().n_views()).collect();
        let sirt_opts = SirtOptions {
            n_iterations: c.recon.sirt_iterations,
            relax: c.recon.sirt_relax,
            ray_step: c.recon.params.ray_step,
            n_subsets: 1,
            rng_seed: c.seed,
        };
        match c.recon.method {
            Method::Dyrect => {
                let g = measured.geometry();
                let mid = 0.5 * (g.scan_start() + g.scan_end());
                let init = match c.recon.init {
                    InitMode::Truth => {
                        let truth = self.load_phantom(phantom)?;
                        truth.grid().check_same(&grid, "phantom and reconstruction grid")?;
                        EventVolume::new(truth.mu0, truth.mu1, ScalarField3::filled(grid, mid))?
                    }
                    InitMode::Zero => EventVolume::uniform(grid, 0.0, 0.0, mid),
                    InitMode::Sirt => {
                        let s = reconstruct_sirt_with(&measured, &all, grid, &sirt_opts, None)?.field;
                        EventVolume::new(s.clone(), s, ScalarField3::filled(grid, mid))?
                    }
                };
                let n_it = c.recon.params.n_iterations;
                let n_sub = c.recon.params.n_subsets;
                let out = reconstruct_dyrect_with_progress(&measured, &c.recon.params, &init, None, &mut |p| {
                    if p.subset + 1 == n_sub {
                        eprintln!("dyrect: iteration {}/{n_it} done", p.iteration + 1);
                    }
                })?;
                io::write_event_volume(&self.out("recon"), &out.volume)?;
                io::write_residuals(&self.out("residuals.csv"), &out.residuals)?;
                Ok(Reconstruction::Event(out))
            }
            Method::Sirt => {
                let out = reconstruct_sirt_with(&measured, &all, grid, &sirt_opts, None)?;
                io::write_volume(&self.out("recon_sirt.raw"), &out.field, "1/cm")?;
                io::write_residuals(&self.out("residuals.csv"), &out.residuals)?;
                Ok(Reconstruction::Static(out.field))
            }
            Method::Sliding => {
                let frames = reconstruct_sliding_window_with(
                    &measured,
                    c.recon.window_views,
                    c.recon.stride_views,
                    grid,
                    &sirt_opts,
                )?;
                let mut table = String::from("frame,time_rotations,first_view,n_views\n");
                for (i, f) in frames.iter().enumerate() {
                    io::write_volume(&self.out(&format!("frames/frame_{i:03}.raw")), &f.field, "1/cm")?;
                    let _ = writeln!(table, "{i},{},{},{}", f.time, f.first_view, f.n_views);
                }
                io::write_text(&self.out("frames.csv"), &table)?;
                Ok(Reconstruction::Frames(frames))
            }
        }
    }

    fn analyze(
        &self,
        metrics: &[MetricArg],
        given: Option<(EventVolume, Reconstruction, ProjectionSet)>,
    ) -> CliResult<()> {
        let c = &self.config;
        let (truth, recon, proj) = match given {
            Some(g) => (g.0, Some(g.1), Some(g.2)),
            None => (self.load_phantom(None)?, None, None),
        };
        let needs_proj = metrics.iter().any(|m| matches!(m, MetricArg::Angles | MetricArg::Diffsino));
        let proj = match proj {
            Some(p) => p,
            None if needs_proj => io::read_projections(&self.out("projections.raw"))?,
            None => ProjectionSet::zeros(c.geometry()?),
        };
        let rec = match recon {
            Some(Reconstruction::Event(o)) => Some(o.volume),
            Some(_) => None,
            None if metrics.iter().any(|m| *m != MetricArg::Diffsino) => {
                Some(io::read_event_volume(&self.out("recon"))?)
            }
            None => None,
        };
        let policy = MaskPolicy::default();
        let window = c.phantom.flow.dynamic_window;
        let window = match c.phantom.kind {
            PhantomKind::Flow => window,
            PhantomKind::Rupture => (c.phantom.rupture_time - 1.0, c.phantom.rupture_time + 1.0),
        };
        let mut report = MetricsReport::new();
        for metric in metrics {
            match (metric, &rec) {
                (MetricArg::Mae, Some(rec)) => {
                    let mask = metric_mask(&truth, policy);
                    report.push("mask_voxels", mask.len());
                    report.push("mae_rotations", mae_transition(&truth, rec, policy)?);
                    report.push("mae_rotations_all_dynamic", mae_transition(&truth, rec, MaskPolicy::Dynamic)?);
                    report.push("tstar_median_mask", median(mask.iter().map(|&i| rec.tstar.values()[i]).collect()));
                    let range = attenuation_range(&truth);
                    report.push("attenuation_range", range);
                    report.push("rmse_mu0", rmse(&truth.mu0, &rec.mu0)?);
                    report.push("rmse_mu1", rmse(&truth.mu1, &rec.mu1)?);
                }
                (MetricArg::Hist, Some(rec)) => {
                    let h = cooccurrence_hist(&truth, rec, c.analysis.n_bins, window, policy)?;
                    io::write_text(&self.out("cooccurrence.csv"), &h.to_csv())?;
                    report.push("cooccurrence_diagonal_fraction", h.diagonal_fraction(1));
                }
                (MetricArg::Angles, Some(rec)) => {
                    let ab = angular_breakdown(&truth, rec, proj.geometry(), policy)?;
                    io::write_text(&self.out("angles.csv"), &ab.to_csv())?;
                    for cat in crate::analysis::AngleCategory::ALL {
                        report.push(format!("mae_{}", cat.name()), ab.get(cat).mae);
                        report.push(format!("count_{}", cat.name()), ab.get(cat).count);
                    }
                    report.push("count_excluded_gradient", ab.excluded);
                }
                (MetricArg::Diffsino, _) => {
                    let d = difference_sinogram(&proj)?;
                    io::write_projections(&self.out("diffsino.raw"), &d)?;
                    match event_time_from_difference(&d, c.analysis.diff_fraction) {
                        Some(t) => report.push("event_time_diffsino", t),
                        None => report.push("event_time_diffsino", "none"),
                    }
                }
                (_, None) => {
                    return Err(CliError::Usage("transition-time metrics need an event reconstruction".into()));
                }
            }
        }
        io::write_text(&self.out("metrics.txt"), &report.to_kv_string())?;
        eprintln!("analyze: wrote {}", self.out("metrics.txt").display());
        Ok(())
    }

    fn pipeline(&self) -> CliResult<()> {
        let s = self.config.stages;
        let truth = if s.phantom { Some(self.phantom()?) } else { None };
        let proj = if s.simulate { Some(self.simulate(truth.clone())?) } else { None };
        if !s.reconstruct {
            return Ok(());
        }
        let recon = self.reconstruct(truth.clone(), proj.clone())?;
        if !s.analyze {
            return Ok(());
        }
        let truth = self.load_phantom(truth)?;
        let proj = match proj {
            Some(p) => p,
            None => io::read_projections(&self.out("projections.raw"))?,
        };
        match recon {
            Reconstruction::Event(_) => {
                let mut metrics = vec![MetricArg::Mae, MetricArg::Hist, MetricArg::Angles];
                if proj.geometry().n_views() >= 2 * proj.geometry().projections_per_rotation {
                    metrics.push(MetricArg::Diffsino);
                }
                self.analyze(&metrics, Some((truth, recon, proj)))
            }
            Reconstruction::Static(field) => {
                let mut report = MetricsReport::new();
                report.push("rmse_vs_mu0", rmse(&truth.mu0, &field)?);
                report.push("rmse_vs_mu1", rmse(&truth.mu1, &field)?);
                io::write_text(&self.out("metrics.txt"), &report.to_kv_string())?;
                Ok(())
            }
            Reconstruction::Frames(frames) => {
                let mut report = MetricsReport::new();
                report.push("frames", frames.len());
                let changes: Vec<f64> =
                    frames.windows(2).map(|w| rmse(&w[1].field, &w[0].field)).collect::<crate::error::Result<_>>()?;
                if let Some((i, _)) = changes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
                    report.push("largest_change_frame_time", frames[i + 1].time);
                }
                io::write_text(&self.out("metrics.txt"), &report.to_kv_string())?;
                Ok(())
            }
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn attenuation_range(vol: &EventVolume) -> f64 {
    vol.mu0.max().max(vol.mu1.max()) - vol.mu0.min().min(vol.mu1.min())
}
