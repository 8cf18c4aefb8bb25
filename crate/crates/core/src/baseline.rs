//! Frame-based reference reconstructions: static SIRT over a set of views
//! and sliding-window sequences of such reconstructions.

use rayon::prelude::*;

use crate::dyrect::{split_views, SubsetCorrections};
use crate::error::{Error, Result};
use crate::grid::{ScalarField3, VoxelGrid3};
use crate::projection::ProjectionSet;
use crate::projector::{intersection_lengths, project_static_views};

#[derive(Debug, Clone, PartialEq)]
pub struct SirtOptions {
    pub n_iterations: usize,
    pub relax: f64,
    pub ray_step: f64,
    /// 1 gives plain SIRT; more subsets give an ordered-subsets (SART-like) schedule.
    pub n_subsets: usize,
    pub rng_seed: u64,
}

impl Default for SirtOptions {
    fn default() -> Self {
        Self { n_iterations: 20, relax: 0.5, ray_step: 0.5, n_subsets: 1, rng_seed: 0 }
    }
}

impl SirtOptions {
    /// Ordered-subsets preset with one subset per `views_per_subset` views.
    pub fn sart(n_iterations: usize, n_views: usize, views_per_subset: usize) -> Self {
        Self { n_iterations, relax: 0.5, n_subsets: (n_views / views_per_subset.max(1)).max(1), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirtOutput {
    pub field: ScalarField3,
    /// Mean squared projection error over the used views, before each iteration.
    pub residuals: Vec<f64>,
}

/// Reconstructs a static field from `views` with default ray sampling.
pub fn reconstruct_sirt(
    measured: &ProjectionSet,
    views: &[usize],
    grid: VoxelGrid3,
    n_iterations: usize,
    relax: f64,
) -> Result<ScalarField3> {
    let opts = SirtOptions { n_iterations, relax, ..SirtOptions::default() };
    Ok(reconstruct_sirt_with(measured, views, grid, &opts, None)?.field)
}

/// SIRT with explicit options and an optional starting field.
pub fn reconstruct_sirt_with(
    measured: &ProjectionSet,
    views: &[usize],
    grid: VoxelGrid3,
    opts: &SirtOptions,
    init: Option<&ScalarField3>,
) -> Result<SirtOutput> {
    let geometry = measured.geometry();
    if views.is_empty() {
        return Err(Error::invalid("SIRT needs at least one view"));
    }
    if let Some(&v) = views.iter().find(|&&v| v >= geometry.n_views()) {
        return Err(Error::invalid(format!("view {v} out of range")));
    }
    if !(opts.relax > 0.0 && opts.relax <= 1.0) {
        return Err(Error::invalid("relax must lie in (0, 1]"));
    }
    if !(opts.ray_step > 0.0 && opts.ray_step <= 1.0) {
        return Err(Error::invalid("ray_step must lie in (0, 1]"));
    }
    let mut field = match init {
        Some(f) => {
            f.grid().check_same(&grid, "SIRT start field")?;
            f.clone()
        }
        None => ScalarField3::zeros(grid),
    };
    let lengths = intersection_lengths(geometry, &grid);
    let subsets = split_views(views, opts.n_subsets, opts.rng_seed);
    let pixels = (views.len() * geometry.pixels_per_view()) as f64;
    let mut residuals = Vec::with_capacity(opts.n_iterations);
    for _ in 0..opts.n_iterations {
        let mut sse = 0.0;
        for subset in &subsets {
            let est = project_static_views(&field, geometry, subset, opts.ray_step);
            let (corr, view_sse) = crate::dyrect::subset_mismatch(measured, &est, &lengths, subset);
            sse += view_sse.iter().sum::<f64>();
            let ctx = SubsetCorrections::new(geometry, subset, corr, None);
            let values: Vec<f64> = field
                .values()
                .par_iter()
                .enumerate()
                .map(|(idx, &mu)| {
                    let (mut sum, mut n) = (0.0, 0usize);
                    ctx.sample(grid.voxel_center_of(idx), |_, c| {
                        sum += c;
                        n += 1;
                    });
                    if n == 0 {
                        mu
                    } else {
                        (mu + opts.relax * sum / n as f64).max(0.0)
                    }
                })
                .collect();
            field = ScalarField3::from_values(grid, values)?;
        }
        let residual = sse / pixels;
        if !residual.is_finite() {
            return Err(Error::Numerical("SIRT residual became non-finite".into()));
        }
        residuals.push(residual);
    }
    Ok(SirtOutput { field, residuals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub field: ScalarField3,
    /// Midpoint between the first and last view time of the window.
    pub time: f64,
    pub first_view: usize,
    pub n_views: usize,
}

/// One reconstruction per window of `window_views` consecutive views,
/// advancing by `stride_views`.
pub fn reconstruct_sliding_window(
    measured: &ProjectionSet,
    window_views: usize,
    stride_views: usize,
    grid: VoxelGrid3,
    n_iterations: usize,
) -> Result<Vec<Frame>> {
    let opts = SirtOptions { n_iterations, ..SirtOptions::default() };
    reconstruct_sliding_window_with(measured, window_views, stride_views, grid, &opts)
}

pub fn reconstruct_sliding_window_with(
    measured: &ProjectionSet,
    window_views: usize,
    stride_views: usize,
    grid: VoxelGrid3,
    opts: &SirtOptions,
) -> Result<Vec<Frame>> {
    let geometry = measured.geometry();
    let n = geometry.n_views();
    if window_views == 0 || window_views > n {
        return Err(Error::invalid(format!("window of {window_views} views does not fit {n} views")));
    }
    if stride_views == 0 {
        return Err(Error::invalid("stride must be at least one view"));
    }
    let mut frames = Vec::new();
    let mut start = 0;
    while start + window_views <= n {
        let views: Vec<usize> = (start..start + window_views).collect();
        let field = reconstruct_sirt_with(measured, &views, grid, opts, None)?.field;
        let t = |v: usize| geometry.views()[v].time;
        frames.push(Frame {
            field,
            time: 0.5 * (t(start) + t(start + window_views - 1)),
            first_view: start,
            n_views: window_views,
        });
        start += stride_views;
    }
    Ok(frames)
}
