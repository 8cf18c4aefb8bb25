//! Time-resolved forward projection by equidistant ray sampling.
//!
//! Every detector value is a single center-ray quadrature: the ray segment
//! inside the grid's bounding box is split into `n = ceil(len / step)`
//! equal intervals and the (trilinearly sampled) attenuation is evaluated at
//! each interval midpoint. Lengths are in mm, attenuation in 1/cm, so sums
//! are scaled by 0.1 to give dimensionless optical depth.

mod motion;

pub(crate) use motion::transform_point;
pub use motion::{apply_affine_motion, AffineMotionModel};

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{slab_intersect, AcquisitionGeometry, ViewFrame};
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};
use crate::projection::ProjectionSet;
use crate::volume::{step, EventVolume};

pub(crate) const MM_PER_CM: f64 = 10.0;

/// Line segment to integrate along, parametrized by acquisition-space arc length.
struct Segment {
    origin: Vec3,
    dir: Vec3,
    entry: f64,
    exit: f64,
}

#[inline]
fn segment(
    geometry: &AcquisitionGeometry,
    frame: &ViewFrame,
    grid: &VoxelGrid3,
    row: usize,
    col: usize,
    motion: Option<&Matrix4<f64>>,
) -> Segment {
    let ray = geometry.trace_ray_in(frame, grid, row, col);
    match motion {
        None => Segment { origin: ray.origin, dir: ray.direction, entry: ray.entry, exit: ray.exit },
        Some(m) => {
            // an affine map keeps the ray straight; intersect its image with the box
            let origin = motion::transform_point(m, ray.origin);
            let dir = motion::transform_vector(m, ray.direction);
            let (lo, hi) = grid.bounds();
            let (entry, exit) = slab_intersect(origin, dir, lo, hi);
            let entry = if frame.source.is_some() { entry.max(0.0) } else { entry };
            Segment { origin, dir, entry, exit }
        }
    }
}

#[inline]
fn integrate<const C: usize>(
    grid: &VoxelGrid3,
    seg: &Segment,
    step_mm: f64,
    fetch: impl Fn(usize) -> [f64; C],
    eval: impl Fn([f64; C]) -> f64,
) -> f64 {
    let len = seg.exit - seg.entry;
    if !(len > 0.0) {
        return 0.0;
    }
    let n = (len / step_mm).ceil().max(1.0) as usize;
    let ds = len / n as f64;
    let inv = 1.0 / grid.voxel_size;
    let start = (seg.origin + seg.dir * (seg.entry + 0.5 * ds) - grid.origin) * inv;
    let delta = seg.dir * (ds * inv);
    let mut sum = 0.0;
    for k in 0..n {
        let f = start + delta * k as f64;
        if let Some(v) = grid.trilinear(f, &fetch) {
            sum += eval(v);
        }
    }
    sum * ds / MM_PER_CM
}

fn motion_matrices(
    geometry: &AcquisitionGeometry,
    views: &[usize],
    motion: Option<&AffineMotionModel>,
) -> Option<Vec<Matrix4<f64>>> {
    motion.map(|m| views.iter().map(|&v| m.matrix_at(geometry.views()[v].time)).collect())
}

/// Projects `views` of `geometry`; images are concatenated in the order given.
fn project_views<const C: usize>(
    grid: &VoxelGrid3,
    geometry: &AcquisitionGeometry,
    views: &[usize],
    ray_step: f64,
    motion: Option<&AffineMotionModel>,
    fetch: impl Fn(usize) -> [f64; C] + Sync,
    eval: impl Fn([f64; C], f64) -> f64 + Sync,
) -> Vec<f64> {
    let (rows, cols) = (geometry.det_rows, geometry.det_cols);
    let step_mm = ray_step * grid.voxel_size;
    let mats = motion_matrices(geometry, views, motion);
    let frames: Vec<ViewFrame> = views.iter().map(|&v| geometry.frame(v)).collect();
    let mut out = vec![0.0; views.len() * rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(line, buf)| {
        let (slot, row) = (line / rows, line % rows);
        let t = geometry.views()[views[slot]].time;
        let m = mats.as_ref().map(|m| &m[slot]);
        for (col, px) in buf.iter_mut().enumerate() {
            let seg = segment(geometry, &frames[slot], grid, row, col, m);
            *px = integrate(grid, &seg, step_mm, &fetch, |v| eval(v, t));
        }
    });
    out
}

/// Simulated projections of a dynamic volume at the given views.
pub fn forward_project_views(
    vol: &EventVolume,
    geometry: &AcquisitionGeometry,
    views: &[usize],
    ray_step: f64,
    motion: Option<&AffineMotionModel>,
) -> Vec<f64> {
    let packed = vol.packed();
    project_views(vol.grid(), geometry, views, ray_step, motion, |i| packed[i], |[m0, m1, ts], t| step(m0, m1, ts, t))
}

/// Each view `i` sees the volume as it is at the view's timestamp `t_i`.
pub fn forward_project(
    vol: &EventVolume,
    geometry: &AcquisitionGeometry,
    ray_step: f64,
    motion: Option<&AffineMotionModel>,
) -> ProjectionSet {
    let all: Vec<usize> = (0..geometry.n_views()).collect();
    let data = forward_project_views(vol, geometry, &all, ray_step, motion);
    ProjectionSet::from_data(geometry.clone(), data).expect("projector output matches geometry")
}

pub fn project_static_views(
    field: &ScalarField3,
    geometry: &AcquisitionGeometry,
    views: &[usize],
    ray_step: f64,
) -> Vec<f64> {
    let values = field.values();
    project_views(field.grid(), geometry, views, ray_step, None, |i| [values[i]], |[v], _| v)
}

/// Time-independent projection of a single attenuation field.
pub fn project_static(field: &ScalarField3, geometry: &AcquisitionGeometry, ray_step: f64) -> ProjectionSet {
    let all: Vec<usize> = (0..geometry.n_views()).collect();
    let data = project_static_views(field, geometry, &all, ray_step);
    ProjectionSet::from_data(geometry.clone(), data).expect("projector output matches geometry")
}

/// Chord length (cm) of every pixel ray through the grid's bounding box.
pub fn intersection_lengths(geometry: &AcquisitionGeometry, grid: &VoxelGrid3) -> ProjectionSet {
    let (rows, cols) = (geometry.det_rows, geometry.det_cols);
    let mut out = vec![0.0; geometry.n_views() * rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(line, buf)| {
        let (view, row) = (line / rows, line % rows);
        let frame = geometry.frame(view);
        for (col, px) in buf.iter_mut().enumerate() {
            *px = geometry.trace_ray_in(&frame, grid, row, col).length() / MM_PER_CM;
        }
    });
    ProjectionSet::from_data(geometry.clone(), out).expect("length stack matches geometry")
}

/// Removes the projected contribution of mass outside the reconstruction
/// region (e.g. a container only partly inside the field of view).
pub fn normalize_exterior(measured: &ProjectionSet, exterior: &ScalarField3, ray_step: f64) -> Result<ProjectionSet> {
    if !(ray_step > 0.0 && ray_step <= 1.0) {
        return Err(Error::invalid("ray_step must lie in (0, 1]"));
    }
    let ext = project_static(exterior, measured.geometry(), ray_step);
    measured.difference(&ext)
}
