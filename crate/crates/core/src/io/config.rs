//! Run configuration: flat `key=value` text with `phantom.`, `geometry.`,
//! `noise.`, `recon.`, `analysis.` and `pipeline.` prefixes. Unknown keys
//! are rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, Beam};
use crate::grid::VoxelGrid3;
use crate::params::ReconParams;
use crate::phantom::{BubbleParams, RandomFlowOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Flow,
    Rupture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dyrect,
    Sirt,
    Sliding,
}

/// Starting attenuations for the event reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Ground-truth `mu0`/`mu1` from the phantom.
    Truth,
    Zero,
    /// A SIRT reconstruction over all views for both phases.
    Sirt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Additive Gaussian noise on optical depth.
    Gaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub kind: PhantomKind,
    /// Reconstruction grid size (voxels per side).
    pub grid: usize,
    pub fov_mm: f64,
    /// Generation grid is `generation_factor` times finer.
    pub generation_factor: f64,
    pub flow: RandomFlowOptions,
    pub rupture_time: f64,
    pub bubble: BubbleParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub beam: Beam,
    pub origin_to_detector_mm: f64,
    pub det_rows: usize,
    pub det_cols: usize,
    pub pixel_pitch_mm: f64,
    pub projections_per_rotation: usize,
    pub rotations: usize,
    pub start_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub method: Method,
    pub init: InitMode,
    pub params: ReconParams,
    pub sirt_iterations: usize,
    pub sirt_relax: f64,
    pub window_views: usize,
    pub stride_views: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub n_bins: usize,
    /// Threshold for event detection in difference sinograms, as a fraction of the peak.
    pub diff_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub phantom: bool,
    pub simulate: bool,
    pub reconstruct: bool,
    pub analyze: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub phantom: PhantomConfig,
    pub geometry: GeometryConfig,
    pub noise: NoiseModel,
    pub recon: ReconConfig,
    pub analysis: AnalysisConfig,
    pub stages: Stages,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            phantom: PhantomConfig {
                kind: PhantomKind::Flow,
                grid: 64,
                fov_mm: 64.0,
                generation_factor: 1.5,
                flow: RandomFlowOptions::default(),
                rupture_time: 1.4,
                bubble: BubbleParams::default(),
            },
            geometry: GeometryConfig {
                beam: Beam::Parallel,
                origin_to_detector_mm: 0.0,
                det_rows: 64,
                det_cols: 96,
                pixel_pitch_mm: 1.0,
                projections_per_rotation: 180,
                rotations: 3,
                start_angle_deg: 0.0,
            },
            noise: NoiseModel::None,
            recon: ReconConfig {
                method: Method::Dyrect,
                init: InitMode::Truth,
                params: ReconParams::default(),
                sirt_iterations: 20,
                sirt_relax: 0.5,
                window_views: 90,
                stride_views: 90,
            },
            analysis: AnalysisConfig { n_bins: 10, diff_fraction: 0.1 },
            stages: Stages { phantom: true, simulate: true, reconstruct: true, analyze: true },
        }
    }
}

struct Entries {
    map: BTreeMap<String, String>,
    source: String,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn bad(&self, key: &str, value: &str, what: &str) -> Error {
        Error::invalid(format!("{}: `{key}={value}`: {what}", self.source))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = v.parse().map_err(|_| self.bad(key, &v, "cannot parse value"))?;
        }
        Ok(())
    }

    fn flag(&mut self, key: &str, slot: &mut bool) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = match v.as_str() {
                "true" | "yes" | "1" | "on" => true,
                "false" | "no" | "0" | "off" => false,
                _ => return Err(self.bad(key, &v, "expected true or false")),
            };
        }
        Ok(())
    }

    fn choice<T: Copy>(&mut self, key: &str, slot: &mut T, options: &[(&str, T)]) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.bad(key, &v, &format!("expected one of {}", names.join(", ")))
            })?;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_text(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses config text on top of the defaults. `source` labels error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("{source}:{}: expected key=value", n + 1)))?;
            if map.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
                return Err(Error::invalid(format!("{source}:{}: duplicate key `{}`", n + 1, k.trim())));
            }
        }
        let mut e = Entries { map, source: source.to_owned() };
        let mut c = RunConfig::default();

        e.parse("seed", &mut c.seed)?;
        if let Some(v) = e.take("output_dir") {
            c.output_dir = PathBuf::from(v);
        }

        let ph = &mut c.phantom;
        e.choice("phantom.kind", &mut ph.kind, &[("flow", PhantomKind::Flow), ("rupture", PhantomKind::Rupture)])?;
        e.parse("phantom.grid", &mut ph.grid)?;
        e.parse("phantom.fov_mm", &mut ph.fov_mm)?;
        e.parse("phantom.generation_factor", &mut ph.generation_factor)?;
        e.parse("phantom.n_regions", &mut ph.flow.n_regions)?;
        e.parse("phantom.radius_min", &mut ph.flow.radius_range.0)?;
        e.parse("phantom.radius_max", &mut ph.flow.radius_range.1)?;
        e.parse("phantom.matrix_mu", &mut ph.flow.matrix_mu)?;
        e.parse("phantom.fluid0_mu", &mut ph.flow.fluid0_mu)?;
        e.parse("phantom.fluid1_mu", &mut ph.flow.fluid1_mu)?;
        e.parse("phantom.dynamic_begin", &mut ph.flow.dynamic_window.0)?;
        e.parse("phantom.dynamic_end", &mut ph.flow.dynamic_window.1)?;
        e.parse("phantom.sample_fraction", &mut ph.flow.sample_fraction)?;
        e.parse("phantom.rupture_time", &mut ph.rupture_time)?;
        e.parse("phantom.bubble_radius_mm", &mut ph.bubble.radius)?;
        e.parse("phantom.wall_thickness_mm", &mut ph.bubble.wall_thickness)?;
        e.parse("phantom.film_radius_mm", &mut ph.bubble.film_radius)?;
        e.parse("phantom.slab_mu", &mut ph.bubble.slab_mu)?;
        e.parse("phantom.gas_mu", &mut ph.bubble.gas_mu)?;

        let g = &mut c.geometry;
        let mut beam = match g.beam {
            Beam::Parallel => "parallel".to_owned(),
            Beam::Cone { .. } => "cone".to_owned(),
        };
        let mut sod = match g.beam {
            Beam::Cone { source_to_origin } => source_to_origin,
            Beam::Parallel => 0.0,
        };
        e.parse("geometry.beam", &mut beam)?;
        e.parse("geometry.source_to_origin_mm", &mut sod)?;
        g.beam = match beam.as_str() {
            "parallel" => Beam::Parallel,
            "cone" => Beam::Cone { source_to_origin: sod },
            other => return Err(e.bad("geometry.beam", other, "expected parallel or cone")),
        };
        e.parse("geometry.origin_to_detector_mm", &mut g.origin_to_detector_mm)?;
        e.parse("geometry.det_rows", &mut g.det_rows)?;
        e.parse("geometry.det_cols", &mut g.det_cols)?;
        e.parse("geometry.pixel_pitch_mm", &mut g.pixel_pitch_mm)?;
        e.parse("geometry.projections_per_rotation", &mut g.projections_per_rotation)?;
        e.parse("geometry.rotations", &mut g.rotations)?;
        e.parse("geometry.start_angle_deg", &mut g.start_angle_deg)?;

        let mut noise = "none".to_owned();
        let mut sigma = 0.0;
        e.parse("noise.model", &mut noise)?;
        e.parse("noise.sigma", &mut sigma)?;
        c.noise = match noise.as_str() {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian { sigma },
            other => return Err(e.bad("noise.model", other, "expected none or gaussian")),
        };

        let r = &mut c.recon;
        e.choice(
            "recon.method",
            &mut r.method,
            &[("dyrect", Method::Dyrect), ("sirt", Method::Sirt), ("sliding", Method::Sliding)],
        )?;
        e.choice(
            "recon.init",
            &mut r.init,
            &[("truth", InitMode::Truth), ("zero", InitMode::Zero), ("sirt", InitMode::Sirt)],
        )?;
        let p = &mut r.params;
        e.parse("recon.lambda_t", &mut p.lambda_t)?;
        e.parse("recon.lambda_0", &mut p.lambda_0)?;
        e.parse("recon.lambda_1", &mut p.lambda_1)?;
        e.parse("recon.lambda_delta", &mut p.lambda_delta)?;
        e.parse("recon.lambda_mu", &mut p.lambda_mu)?;
        if let Some(v) = e.take("recon.epsilon") {
            p.epsilon = if v == "auto" {
                None
            } else {
                Some(v.parse().map_err(|_| e.bad("recon.epsilon", &v, "expected auto or a number"))?)
            };
        }
        e.parse("recon.n_iterations", &mut p.n_iterations)?;
        e.parse("recon.n_subsets", &mut p.n_subsets)?;
        e.flag("recon.use_weights", &mut p.use_weights)?;
        e.parse("recon.weight_floor", &mut p.weight_floor)?;
        e.parse("recon.ray_step", &mut p.ray_step)?;
        e.flag("recon.fit_attenuations", &mut p.fit_attenuations)?;
        e.parse("recon.sirt_iterations", &mut r.sirt_iterations)?;
        e.parse("recon.sirt_relax", &mut r.sirt_relax)?;
        e.parse("recon.window_views", &mut r.window_views)?;
        e.parse("recon.stride_views", &mut r.stride_views)?;

        e.parse("analysis.n_bins", &mut c.analysis.n_bins)?;
        e.parse("analysis.diff_fraction", &mut c.analysis.diff_fraction)?;

        e.flag("pipeline.phantom", &mut c.stages.phantom)?;
        e.flag("pipeline.simulate", &mut c.stages.simulate)?;
        e.flag("pipeline.reconstruct", &mut c.stages.reconstruct)?;
        e.flag("pipeline.analyze", &mut c.stages.analyze)?;

        if let Some(k) = e.map.keys().next() {
            return Err(Error::invalid(format!("{source}: unknown key `{k}`")));
        }
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    /// Uses `seed` for the phantom, subsets and noise.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.recon.params.rng_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let ph = &self.phantom;
        if ph.grid == 0 || !(ph.fov_mm > 0.0) {
            return Err(Error::invalid("phantom.grid and phantom.fov_mm must be positive"));
        }
        if !(ph.generation_factor >= 1.0) {
            return Err(Error::invalid("phantom.generation_factor must be >= 1"));
        }
        let g = &self.geometry;
        if g.rotations == 0 || g.projections_per_rotation == 0 {
            return Err(Error::invalid("geometry.rotations and geometry.projections_per_rotation must be >= 1"));
        }
        if let NoiseModel::Gaussian { sigma } = self.noise {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::invalid("noise.sigma must be >= 0"));
            }
        }
        if self.analysis.n_bins < 2 {
            return Err(Error::invalid("analysis.n_bins must be >= 2"));
        }
        if !(self.analysis.diff_fraction > 0.0 && self.analysis.diff_fraction < 1.0) {
            return Err(Error::invalid("analysis.diff_fraction must lie in (0, 1)"));
        }
        if self.recon.window_views == 0 || self.recon.stride_views == 0 {
            return Err(Error::invalid("recon.window_views and recon.stride_views must be >= 1"));
        }
        if !(self.recon.sirt_relax > 0.0 && self.recon.sirt_relax <= 1.0) {
            return Err(Error::invalid("recon.sirt_relax must lie in (0, 1]"));
        }
        self.recon.params.validate()?;
        self.geometry()?;
        self.grid()?;
        Ok(())
    }

    /// Reconstruction grid, centred on the rotation axis.
    pub fn grid(&self) -> Result<VoxelGrid3> {
        let n = self.phantom.grid;
        VoxelGrid3::cube(n, self.phantom.fov_mm / n as f64)
    }

    /// Phantom generation grid covering the same field of view.
    pub fn generation_grid(&self) -> Result<VoxelGrid3> {
        let n = (self.phantom.grid as f64 * self.phantom.generation_factor).round() as usize;
        VoxelGrid3::cube(n, self.phantom.fov_mm / n as f64)
    }

    pub fn geometry(&self) -> Result<AcquisitionGeometry> {
        let g = &self.geometry;
        AcquisitionGeometry::circular(
            g.beam,
            g.origin_to_detector_mm,
            g.det_rows,
            g.det_cols,
            g.pixel_pitch_mm,
            g.projections_per_rotation,
            g.projections_per_rotation * g.rotations,
            g.start_angle_deg * PI / 180.0,
        )
    }

    /// Every setting as sorted `key=value` lines, defaults included.
    pub fn to_kv_string(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        let ph = &self.phantom;
        let g = &self.geometry;
        let r = &self.recon;
        let p = &r.params;
        m.insert("seed", self.seed.to_string());
        m.insert("output_dir", self.output_dir.display().to_string());
        m.insert(
            "phantom.kind",
            match ph.kind {
                PhantomKind::Flow => "flow",
                PhantomKind::Rupture => "rupture",
            }
            .into(),
        );
        m.insert("phantom.grid", ph.grid.to_string());
        m.insert("phantom.fov_mm", ph.fov_mm.to_string());
        m.insert("phantom.generation_factor", ph.generation_factor.to_string());
        m.insert("phantom.n_regions", ph.flow.n_regions.to_string());
        m.insert("phantom.radius_min", ph.flow.radius_range.0.to_string());
        m.insert("phantom.radius_max", ph.flow.radius_range.1.to_string());
        m.insert("phantom.matrix_mu", ph.flow.matrix_mu.to_string());
        m.insert("phantom.fluid0_mu", ph.flow.fluid0_mu.to_string());
        m.insert("phantom.fluid1_mu", ph.flow.fluid1_mu.to_string());
        m.insert("phantom.dynamic_begin", ph.flow.dynamic_window.0.to_string());
        m.insert("phantom.dynamic_end", ph.flow.dynamic_window.1.to_string());
        m.insert("phantom.sample_fraction", ph.flow.sample_fraction.to_string());
        m.insert("phantom.rupture_time", ph.rupture_time.to_string());
        m.insert("phantom.bubble_radius_mm", ph.bubble.radius.to_string());
        m.insert("phantom.wall_thickness_mm", ph.bubble.wall_thickness.to_string());
        m.insert("phantom.film_radius_mm", ph.bubble.film_radius.to_string());
        m.insert("phantom.slab_mu", ph.bubble.slab_mu.to_string());
        m.insert("phantom.gas_mu", ph.bubble.gas_mu.to_string());
        match g.beam {
            Beam::Parallel => {
                m.insert("geometry.beam", "parallel".into());
            }
            Beam::Cone { source_to_origin } => {
                m.insert("geometry.beam", "cone".into());
                m.insert("geometry.source_to_origin_mm", source_to_origin.to_string());
            }
        }
        m.insert("geometry.origin_to_detector_mm", g.origin_to_detector_mm.to_string());
        m.insert("geometry.det_rows", g.det_rows.to_string());
        m.insert("geometry.det_cols", g.det_cols.to_string());
        m.insert("geometry.pixel_pitch_mm", g.pixel_pitch_mm.to_string());
        m.insert("geometry.projections_per_rotation", g.projections_per_rotation.to_string());
        m.insert("geometry.rotations", g.rotations.to_string());
        m.insert("geometry.start_angle_deg", g.start_angle_deg.to_string());
        match self.noise {
            NoiseModel::None => {
                m.insert("noise.model", "none".into());
            }
            NoiseModel::Gaussian { sigma } => {
                m.insert("noise.model", "gaussian".into());
                m.insert("noise.sigma", sigma.to_string());
            }
        }
        m.insert(
            "recon.method",
            match r.method {
                Method::Dyrect => "dyrect",
                Method::Sirt => "sirt",
                Method::Sliding => "sliding",
            }
            .into(),
        );
        m.insert(
            "recon.init",
            match r.init {
                InitMode::Truth => "truth",
                InitMode::Zero => "zero",
                InitMode::Sirt => "sirt",
            }
            .into(),
        );
        m.insert("recon.lambda_t", p.lambda_t.to_string());
        m.insert("recon.lambda_0", p.lambda_0.to_string());
        m.insert("recon.lambda_1", p.lambda_1.to_string());
        m.insert("recon.lambda_delta", p.lambda_delta.to_string());
        m.insert("recon.lambda_mu", p.lambda_mu.to_string());
        m.insert("recon.epsilon", p.epsilon.map_or("auto".into(), |e| e.to_string()));
        m.insert("recon.n_iterations", p.n_iterations.to_string());
        m.insert("recon.n_subsets", p.n_subsets.to_string());
        m.insert("recon.use_weights", p.use_weights.to_string());
        m.insert("recon.weight_floor", p.weight_floor.to_string());
        m.insert("recon.ray_step", p.ray_step.to_string());
        m.insert("recon.fit_attenuations", p.fit_attenuations.to_string());
        m.insert("recon.sirt_iterations", r.sirt_iterations.to_string());
        m.insert("recon.sirt_relax", r.sirt_relax.to_string());
        m.insert("recon.window_views", r.window_views.to_string());
        m.insert("recon.stride_views", r.stride_views.to_string());
        m.insert("analysis.n_bins", self.analysis.n_bins.to_string());
        m.insert("analysis.diff_fraction", self.analysis.diff_fraction.to_string());
        m.insert("pipeline.phantom", self.stages.phantom.to_string());
        m.insert("pipeline.simulate", self.stages.simulate.to_string());
        m.insert("pipeline.reconstruct", self.stages.reconstruct.to_string());
        m.insert("pipeline.analyze", self.stages.analyze.to_string());
        m.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
