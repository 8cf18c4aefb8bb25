//! Circular-trajectory acquisition geometry.
//!
//! The sample rotates about the world z axis, which passes through the
//! world origin. At view angle `theta` the beam travels along
//! `d = (cos theta, sin theta, 0)`; detector columns run along
//! `u = (-sin theta, cos theta, 0)` and rows along `+z`. Time is measured in
//! rotation periods, so one full turn takes 1.0.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::grid::{Vec3, VoxelGrid3};

pub const ROTATION_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beam {
    Parallel,
    Cone { source_to_origin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    /// radians
    pub angle: f64,
    /// rotation periods
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    pub beam: Beam,
    pub origin_to_detector: f64,
    pub det_rows: usize,
    pub det_cols: usize,
    pub pixel_pitch: f64,
    pub projections_per_rotation: usize,
    views: Vec<View>,
}

/// Orientation of one view: beam direction, detector axes, optional point source.
#[derive(Debug, Clone, Copy)]
pub struct ViewFrame {
    pub beam_dir: Vec3,
    pub u_axis: Vec3,
    pub source: Option<Vec3>,
}

/// A pixel ray. `entry..exit` is the parametric interval (mm along
/// `direction` from `origin`) inside the grid's bounding box; a miss has
/// `exit < entry`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub entry: f64,
    pub exit: f64,
}

impl Ray {
    pub fn hits(&self) -> bool {
        self.exit > self.entry
    }

    pub fn length(&self) -> f64 {
        (self.exit - self.entry).max(0.0)
    }

    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + self.direction * s
    }
}

impl AcquisitionGeometry {
    pub fn new(
        beam: Beam,
        origin_to_detector: f64,
        det_rows: usize,
        det_cols: usize,
        pixel_pitch: f64,
        projections_per_rotation: usize,
        views: Vec<View>,
    ) -> Result<Self> {
        if det_rows == 0 || det_cols == 0 {
            return Err(Error::invalid("detector must have at least one row and column"));
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(Error::invalid("pixel pitch must be > 0"));
        }
        if !(origin_to_detector >= 0.0 && origin_to_detector.is_finite()) {
            return Err(Error::invalid("origin-to-detector distance must be >= 0"));
        }
        if let Beam::Cone { source_to_origin } = beam {
            if !(source_to_origin > 0.0 && source_to_origin.is_finite()) {
                return Err(Error::invalid("cone beam needs source-to-origin > 0"));
            }
        }
        if projections_per_rotation == 0 {
            return Err(Error::invalid("projections per rotation must be >= 1"));
        }
        if views.is_empty() {
            return Err(Error::invalid("geometry has no views"));
        }
        if views.iter().any(|v| !v.angle.is_finite() || !v.time.is_finite()) {
            return Err(Error::invalid("view angles and times must be finite"));
        }
        if views.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::invalid("view times must be strictly increasing"));
        }
        if views.len() > 2 {
            let step = views[1].angle - views[0].angle;
            let tol = 1e-9 * (1.0 + views.iter().map(|v| v.angle.abs()).fold(0.0, f64::max));
            if views.windows(2).any(|w| ((w[1].angle - w[0].angle) - step).abs() > tol) {
                return Err(Error::invalid("angular step must be constant (continuous circular scan)"));
            }
        }
        Ok(Self { beam, origin_to_detector, det_rows, det_cols, pixel_pitch, projections_per_rotation, views })
    }

    /// Continuous circular scan: view `i` is acquired at `i / ppr` rotations
    /// and angle `start_angle + 2 pi i / ppr`.
    pub fn circular(
        beam: Beam,
        origin_to_detector: f64,
        det_rows: usize,
        det_cols: usize,
        pixel_pitch: f64,
        projections_per_rotation: usize,
        n_views: usize,
        start_angle: f64,
    ) -> Result<Self> {
        let ppr = projections_per_rotation.max(1) as f64;
        let views =
            (0..n_views).map(|i| View { angle: start_angle + TAU * i as f64 / ppr, time: i as f64 / ppr }).collect();
        Self::new(beam, origin_to_detector, det_rows, det_cols, pixel_pitch, projections_per_rotation, views)
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn pixels_per_view(&self) -> usize {
        self.det_rows * self.det_cols
    }

    /// Time between consecutive projections.
    pub fn view_interval(&self) -> f64 {
        ROTATION_PERIOD / self.projections_per_rotation as f64
    }

    pub fn scan_start(&self) -> f64 {
        self.views[0].time
    }

    /// End of the acquisition: last view time plus one projection interval.
    pub fn scan_end(&self) -> f64 {
        self.views[self.views.len() - 1].time + self.view_interval()
    }

    /// Acquired duration in rotation periods (`n_views / ppr` for a
    /// continuous scan).
    pub fn duration(&self) -> f64 {
        self.scan_end() - self.scan_start()
    }

    pub fn frame(&self, view: usize) -> ViewFrame {
        let (s, c) = self.views[view].angle.sin_cos();
        let beam_dir = Vec3::new(c, s, 0.0);
        let source = match self.beam {
            Beam::Parallel => None,
            Beam::Cone { source_to_origin } => Some(-source_to_origin * beam_dir),
        };
        ViewFrame { beam_dir, u_axis: Vec3::new(-s, c, 0.0), source }
    }

    /// Detector coordinates (mm) of a pixel center relative to the detector center.
    #[inline]
    pub fn pixel_uv(&self, row: usize, col: usize) -> (f64, f64) {
        let u = (col as f64 - 0.5 * (self.det_cols as f64 - 1.0)) * self.pixel_pitch;
        let v = (row as f64 - 0.5 * (self.det_rows as f64 - 1.0)) * self.pixel_pitch;
        (u, v)
    }

    /// Ray through pixel `(row, col)` of `view`, clipped to `grid`'s bounding box.
    pub fn trace_ray(&self, grid: &VoxelGrid3, view: usize, row: usize, col: usize) -> Ray {
        let frame = self.frame(view);
        self.trace_ray_in(&frame, grid, row, col)
    }

    #[inline]
    pub(crate) fn trace_ray_in(&self, frame: &ViewFrame, grid: &VoxelGrid3, row: usize, col: usize) -> Ray {
        let (u, v) = self.pixel_uv(row, col);
        let on_plane = u * frame.u_axis + Vec3::new(0.0, 0.0, v);
        let (origin, direction, min_s) = match frame.source {
            None => (on_plane, frame.beam_dir, f64::NEG_INFINITY),
            Some(src) => {
                let pixel = self.origin_to_detector * frame.beam_dir + on_plane;
                (src, (pixel - src).normalize(), 0.0)
            }
        };
        let (lo, hi) = grid.bounds();
        let (entry, exit) = slab_intersect(origin, direction, lo, hi);
        Ray { origin, direction, entry: entry.max(min_s), exit }
    }

    /// Fractional detector `(row, col)` where the point `x` projects in a view.
    /// `None` when the point lies behind a cone-beam source.
    #[inline]
    pub fn project_point(&self, frame: &ViewFrame, x: Vec3) -> Option<(f64, f64)> {
        let mut u = x.dot(&frame.u_axis);
        let mut v = x.z;
        if let Beam::Cone { source_to_origin } = self.beam {
            let depth = source_to_origin + x.dot(&frame.beam_dir);
            if depth <= 0.0 {
                return None;
            }
            let m = (source_to_origin + self.origin_to_detector) / depth;
            u *= m;
            v *= m;
        }
        let col = u / self.pixel_pitch + 0.5 * (self.det_cols as f64 - 1.0);
        let row = v / self.pixel_pitch + 0.5 * (self.det_rows as f64 - 1.0);
        Some((row, col))
    }

    /// Direction of the X-ray travelling through `x` in a view.
    pub fn beam_direction_at(&self, view: usize, x: Vec3) -> Vec3 {
        let frame = self.frame(view);
        match frame.source {
            None => frame.beam_dir,
            Some(src) => {
                let d = x - src;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    frame.beam_dir
                }
            }
        }
    }

    /// Index of the view whose timestamp is nearest to `t` (earlier view wins ties).
    pub fn nearest_view(&self, t: f64) -> usize {
        let idx = self.views.partition_point(|v| v.time < t);
        if idx == 0 {
            0
        } else if idx == self.views.len() {
            idx - 1
        } else if (self.views[idx].time - t) < (t - self.views[idx - 1].time) {
            idx
        } else {
            idx - 1
        }
    }

    pub fn check_same(&self, other: &AcquisitionGeometry, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::mismatch(format!("{what}: acquisition geometries differ")))
        }
    }
}

/// Parametric interval of a line inside an axis-aligned box.
pub(crate) fn slab_intersect(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> (f64, f64) {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return (0.0, -1.0);
            }
        } else {
            let inv = 1.0 / dir[a];
            let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    if t1 < t0 {
        (0.0, -1.0)
    } else {
        (t0, t1)
    }
}
