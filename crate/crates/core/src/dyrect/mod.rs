//! Event-based iterative reconstruction.
//!
//! One iteration visits every ordered subset of views. For each subset the
//! current event volume is forward projected at the subset's timestamps,
//! the projection mismatch is turned into length-normalized correction
//! terms, and every voxel then
//!
//! 1. samples the corrections at its detector position in each subset view,
//! 2. compares the time/correction covariance in the rotation before and
//!    after its current transition time and shifts the transition time
//!    toward balance,
//! 3. averages the corrected attenuation on either side of the new
//!    transition time to update `mu0` and `mu1`.
//!
//! Voxels are independent within a subset; subsets and iterations run
//! strictly in sequence.

mod stats;
mod subsets;

pub use stats::{
    transition_step, update_attenuations, update_transition_time, window_stats, CorrectionSample,
    CovarianceAccumulator, ScanSpan, VoxelCorrectionStats,
};
pub(crate) use subsets::split_views;
pub use subsets::{make_subsets, SubsetPlan, MIN_SUBSET_SPAN, MIN_SUBSET_VIEWS};

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, ViewFrame, ROTATION_PERIOD};
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};
use crate::params::ReconParams;
use crate::projection::{bilinear, ProjectionSet};
use crate::projector::{forward_project_views, intersection_lengths, transform_point, AffineMotionModel};
use crate::volume::{step, EventVolume, WeightVolume};

/// Minimum acquired duration for the one-rotation covariance windows.
pub const MIN_SCAN_ROTATIONS: f64 = 3.0;

/// `C = (P - P_hat) / L` per pixel, 0 where the ray misses the grid.
pub fn correction_terms(
    measured: &ProjectionSet,
    estimated: &ProjectionSet,
    lengths: &ProjectionSet,
) -> Result<ProjectionSet> {
    measured.geometry().check_same(estimated.geometry(), "correction terms")?;
    measured.geometry().check_same(lengths.geometry(), "correction terms")?;
    let data = measured
        .data()
        .iter()
        .zip(estimated.data())
        .zip(lengths.data())
        .map(|((p, e), l)| correction(*p, *e, *l))
        .collect();
    ProjectionSet::from_data(measured.geometry().clone(), data)
}

#[inline]
fn correction(p: f64, est: f64, len: f64) -> f64 {
    if len > 0.0 {
        (p - est) / len
    } else {
        0.0
    }
}

/// Dynamic-region weights `floor + |mu1 - mu0|`, rescaled to unit mean.
pub fn compute_weights(vol: &EventVolume, floor: f64) -> WeightVolume {
    let grid = *vol.grid();
    let raw: Vec<f64> = vol.delta_mu().iter().map(|d| floor.max(0.0) + d.abs()).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(mean > 0.0) {
        return WeightVolume::ones(grid);
    }
    let values = raw.into_iter().map(|w| w / mean).collect();
    WeightVolume { values: ScalarField3::from_values(grid, values).expect("finite weights") }
}

/// Correction images of one subset and what is needed to sample them at
/// arbitrary voxel positions.
pub(crate) struct SubsetCorrections<'a> {
    geometry: &'a AcquisitionGeometry,
    frames: Vec<ViewFrame>,
    times: Vec<f64>,
    inverse_motion: Option<Vec<Matrix4<f64>>>,
    images: Vec<f64>,
}

impl<'a> SubsetCorrections<'a> {
    pub(crate) fn new(
        geometry: &'a AcquisitionGeometry,
        views: &[usize],
        images: Vec<f64>,
        motion: Option<&AffineMotionModel>,
    ) -> Self {
        let times: Vec<f64> = views.iter().map(|&v| geometry.views()[v].time).collect();
        Self {
            geometry,
            frames: views.iter().map(|&v| geometry.frame(v)).collect(),
            inverse_motion: motion.map(|m| times.iter().map(|&t| m.inverse_matrix_at(t)).collect()),
            times,
            images,
        }
    }

    /// Correction values seen by a voxel at `x`, one per view whose detector
    /// covers its projection: `(view time, C)`.
    #[inline]
    pub(crate) fn sample(&self, x: Vec3, mut emit: impl FnMut(f64, f64)) {
        let g = self.geometry;
        let n = g.pixels_per_view();
        for (slot, frame) in self.frames.iter().enumerate() {
            let p = match &self.inverse_motion {
                None => x,
                Some(m) => transform_point(&m[slot], x),
            };
            if let Some((r, c)) = g.project_point(frame, p) {
                let img = &self.images[slot * n..(slot + 1) * n];
                if let Some(v) = bilinear(img, g.det_rows, g.det_cols, r, c) {
                    emit(self.times[slot], v);
                }
            }
        }
    }
}

/// Mismatch of one subset: correction images and per-view squared error sums.
pub(crate) fn subset_mismatch(
    measured: &ProjectionSet,
    estimated: &[f64],
    lengths: &ProjectionSet,
    views: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let n = measured.geometry().pixels_per_view();
    let mut corr = vec![0.0; estimated.len()];
    let sse: Vec<f64> = corr
        .par_chunks_mut(n)
        .zip(estimated.par_chunks(n))
        .zip(views.par_iter())
        .map(|((c_img, est), &v)| {
            let meas = measured.image(v);
            let len = lengths.image(v);
            let mut sse = 0.0;
            for i in 0..n {
                let r = meas[i] - est[i];
                sse += r * r;
                c_img[i] = correction(meas[i], est[i], len[i]);
            }
            sse
        })
        .collect();
    (corr, sse)
}

/// Progress report emitted after every subset update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub subset: usize,
    /// Mean squared projection error of this subset before its update.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyrectOutput {
    pub volume: EventVolume,
    /// Mean squared projection mismatch over all views, one entry per
    /// iteration, measured before that iteration's updates.
    pub residuals: Vec<f64>,
}

/// Starting volume with the transition time at mid-scan everywhere.
pub fn initial_volume(grid: VoxelGrid3, geometry: &AcquisitionGeometry, mu0: f64, mu1: f64) -> EventVolume {
    let mid = 0.5 * (geometry.scan_start() + geometry.scan_end());
    EventVolume::uniform(grid, mu0, mu1, mid)
}

pub fn reconstruct_dyrect(
    measured: &ProjectionSet,
    params: &ReconParams,
    init: &EventVolume,
    motion: Option<&AffineMotionModel>,
) -> Result<DyrectOutput> {
    reconstruct_dyrect_with_progress(measured, params, init, motion, &mut |_| {})
}

pub fn reconstruct_dyrect_with_progress(
    measured: &ProjectionSet,
    params: &ReconParams,
    init: &EventVolume,
    motion: Option<&AffineMotionModel>,
    progress: &mut dyn FnMut(Progress),
) -> Result<DyrectOutput> {
    params.validate()?;
    let geometry = measured.geometry();
    if geometry.duration() < MIN_SCAN_ROTATIONS * ROTATION_PERIOD - 1e-9 {
        return Err(Error::invalid(format!(
            "event reconstruction needs at least {MIN_SCAN_ROTATIONS} rotations, scan covers {:.3}",
            geometry.duration()
        )));
    }
    let grid = *init.grid();
    let lengths = intersection_lengths(geometry, &grid);
    let plan = make_subsets(geometry, params.n_subsets, params.rng_seed)?;
    let span = ScanSpan { start: geometry.scan_start(), end: geometry.scan_end() };
    let epsilon = params.epsilon.unwrap_or_else(|| 1e-4 * attenuation_range(init, measured, &lengths));
    let factors = Factors {
        lambda_t: params.lambda_t,
        lambda_0: params.lambda_0,
        lambda_1: params.lambda_1,
        lambda_delta: params.lambda_delta,
        lambda_mu: params.lambda_mu,
        epsilon,
        fit_attenuations: params.fit_attenuations,
    };

    let total_pixels = (geometry.n_views() * geometry.pixels_per_view()) as f64;
    let mut vol = init.clone();
    let mut residuals = Vec::with_capacity(params.n_iterations);
    for iteration in 0..params.n_iterations {
        let weights = params.use_weights.then(|| compute_weights(&vol, params.weight_floor));
        let mut sse = 0.0;
        for (subset_idx, views) in plan.subsets.iter().enumerate() {
            let est = forward_project_views(&vol, geometry, views, params.ray_step, motion);
            let (corr, view_sse) = subset_mismatch(measured, &est, &lengths, views);
            let subset_sse: f64 = view_sse.iter().sum();
            sse += subset_sse;
            let subset_residual = subset_sse / (views.len() * geometry.pixels_per_view()) as f64;
            if !subset_residual.is_finite() {
                return Err(Error::Numerical(format!(
                    "residual became non-finite in iteration {iteration}, subset {subset_idx}"
                )));
            }
            let ctx = SubsetCorrections::new(geometry, views, corr, motion);
            vol = update_volume(&vol, &ctx, weights.as_ref(), &factors, span);
            progress(Progress { iteration, subset: subset_idx, residual: subset_residual });
        }
        let residual = sse / total_pixels;
        if !residual.is_finite() {
            return Err(Error::Numerical(format!("residual became non-finite in iteration {iteration}")));
        }
        residuals.push(residual);
    }
    Ok(DyrectOutput { volume: vol, residuals })
}

struct Factors {
    lambda_t: f64,
    lambda_0: f64,
    lambda_1: f64,
    lambda_delta: f64,
    lambda_mu: f64,
    epsilon: f64,
    fit_attenuations: bool,
}

fn update_volume(
    vol: &EventVolume,
    ctx: &SubsetCorrections<'_>,
    weights: Option<&WeightVolume>,
    f: &Factors,
    span: ScanSpan,
) -> EventVolume {
    let grid = *vol.grid();
    let (mu0, mu1, tstar) = (vol.mu0.values(), vol.mu1.values(), vol.tstar.values());
    let updated: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map_init(Vec::new, |samples: &mut Vec<CorrectionSample>, idx| {
            let (m0, m1, tp) = (mu0[idx], mu1[idx], tstar[idx]);
            if !f.fit_attenuations && m0 == m1 {
                return [m0, m1, tp];
            }
            samples.clear();
            ctx.sample(grid.voxel_center_of(idx), |t, c| {
                samples.push(CorrectionSample { t, c, mu: step(m0, m1, tp, t) });
            });
            let w = weights.map_or(1.0, |w| w.get(idx));
            let st = window_stats(samples, tp, span);
            let dt = transition_step(&st, m0, m1, f.lambda_delta, f.lambda_mu, f.epsilon);
            let t_new = span.clamp_tstar(tp + (f.lambda_t * w).min(1.0) * dt);
            if f.fit_attenuations {
                let (a, b) =
                    update_attenuations(samples, t_new, (f.lambda_0 * w).min(1.0), (f.lambda_1 * w).min(1.0), m0, m1);
                [a, b, t_new]
            } else {
                [m0, m1, t_new]
            }
        })
        .collect();
    let unzip = |c: usize| {
        ScalarField3::from_values(grid, updated.iter().map(|v| v[c]).collect()).expect("updates stay finite")
    };
    EventVolume { mu0: unzip(0), mu1: unzip(1), tstar: unzip(2) }
}

/// Attenuation scale used for the default epsilon guard: the spread of the
/// initial attenuations, or failing that the largest mean attenuation along
/// any measured ray.
fn attenuation_range(init: &EventVolume, measured: &ProjectionSet, lengths: &ProjectionSet) -> f64 {
    let lo = init.mu0.min().min(init.mu1.min());
    let hi = init.mu0.max().max(init.mu1.max());
    let mut range = hi - lo;
    if !(range > 0.0) {
        range = measured
            .data()
            .iter()
            .zip(lengths.data())
            .filter(|(_, l)| **l > 0.0)
            .map(|(p, l)| (p / l).abs())
            .fold(0.0, f64::max);
    }
    if range > 0.0 {
        range
    } else {
        1.0
    }
}
