//! Ground-truth dynamic phantoms: a static porous matrix whose pore space
//! is flooded by a moving fluid front, and a two-bubble film rupture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};
use crate::volume::EventVolume;

/// Transition time given to voxels without an event, relative to the end
/// of the dynamic window. Far outside any scan.
pub const NO_EVENT_OFFSET: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PoreShape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Capsule around the segment `start..end`.
    Channel {
        start: Vec3,
        end: Vec3,
        radius: f64,
    },
    BlobUnion {
        centers: Vec<Vec3>,
        radii: Vec<f64>,
    },
}

impl PoreShape {
    pub fn contains(&self, x: Vec3) -> bool {
        match self {
            PoreShape::Sphere { center, radius } => (x - center).norm_squared() <= radius * radius,
            PoreShape::Channel { start, end, radius } => {
                let d = end - start;
                let len2 = d.norm_squared();
                let s = if len2 > 0.0 { ((x - start).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (x - (start + d * s)).norm_squared() <= radius * radius
            }
            PoreShape::BlobUnion { centers, radii } => {
                centers.iter().zip(radii).any(|(c, r)| (x - c).norm_squared() <= r * r)
            }
        }
    }

    /// Axis-aligned box enclosing the shape.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let ball = |c: &Vec3, r: f64| (c - Vec3::repeat(r), c + Vec3::repeat(r));
        let join = |a: (Vec3, Vec3), b: (Vec3, Vec3)| (a.0.inf(&b.0), a.1.sup(&b.1));
        match self {
            PoreShape::Sphere { center, radius } => ball(center, *radius),
            PoreShape::Channel { start, end, radius } => join(ball(start, *radius), ball(end, *radius)),
            PoreShape::BlobUnion { centers, radii } => centers
                .iter()
                .zip(radii)
                .map(|(c, r)| ball(c, *r))
                .reduce(join)
                .unwrap_or((Vec3::zeros(), Vec3::zeros())),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_r = |r: f64| r.is_finite() && r > 0.0;
        match self {
            PoreShape::Sphere { radius, .. } | PoreShape::Channel { radius, .. } if !ok_r(*radius) => {
                Err(Error::invalid("pore radius must be positive"))
            }
            PoreShape::BlobUnion { centers, radii } if centers.is_empty() || centers.len() != radii.len() => {
                Err(Error::invalid("blob union needs matching, non-empty centers and radii"))
            }
            PoreShape::BlobUnion { radii, .. } if !radii.iter().all(|r| ok_r(*r)) => {
                Err(Error::invalid("blob radii must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontKind {
    /// Flat front moving along `front_direction`.
    Planar,
    /// Spherical front expanding from the anchor.
    Radial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoreRegion {
    pub shape: PoreShape,
    pub front: FrontKind,
    /// Point the front passes at `front_start_time` (centre of a radial front).
    pub anchor: Vec3,
    pub front_direction: Vec3,
    /// mm per rotation period.
    pub front_speed: f64,
    pub front_start_time: f64,
}

impl PoreRegion {
    /// Unclamped arrival time of the front at `x`.
    pub fn arrival_time(&self, x: Vec3) -> f64 {
        let dist = match self.front {
            FrontKind::Planar => (x - self.anchor).dot(&self.front_direction),
            FrontKind::Radial => (x - self.anchor).norm(),
        };
        self.front_start_time + dist / self.front_speed
    }

    fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.front_speed > 0.0 && self.front_speed.is_finite()) {
            return Err(Error::invalid("front speed must be positive"));
        }
        if !self.front_start_time.is_finite() || self.anchor.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("front anchor and start time must be finite"));
        }
        if self.front == FrontKind::Planar && (self.front_direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("front direction must be a unit vector"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub grid: VoxelGrid3,
    pub matrix_mu: f64,
    pub fluid0_mu: f64,
    pub fluid1_mu: f64,
    /// Radius of the cylindrical sample around the z axis; `None` fills the grid.
    pub sample_radius: Option<f64>,
    pub pore_regions: Vec<PoreRegion>,
    pub dynamic_window: (f64, f64),
    pub rng_seed: u64,
}

impl FlowSpec {
    pub fn no_event_time(&self) -> f64 {
        self.dynamic_window.1 + NO_EVENT_OFFSET
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.dynamic_window;
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("dynamic window must satisfy t_begin < t_end"));
        }
        for mu in [self.matrix_mu, self.fluid0_mu, self.fluid1_mu] {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::invalid("attenuations must be finite and non-negative"));
            }
        }
        if let Some(r) = self.sample_radius {
            if !(r > 0.0) {
                return Err(Error::invalid("sample radius must be positive"));
            }
        }
        let (lo, hi) = self.grid.bounds();
        for (i, region) in self.pore_regions.iter().enumerate() {
            region.validate()?;
            let (a, b) = region.shape.bounds();
            let tol = 1e-9;
            if (0..3).any(|k| a[k] < lo[k] - tol || b[k] > hi[k] + tol) {
                return Err(Error::invalid(format!("pore region {i} extends outside the grid")));
            }
        }
        Ok(())
    }

    fn in_sample(&self, x: Vec3) -> bool {
        self.sample_radius.is_none_or(|r| x.x * x.x + x.y * x.y <= r * r)
    }
}

/// Voxelizes the flow phantom at voxel centres.
///
/// Matrix and vacuum voxels are static with `tstar = t_end + 10`. Pore
/// voxels switch from `fluid0_mu` to `fluid1_mu` when their region's front
/// arrives, clamped to the dynamic window. A voxel inside two regions must
/// get the same transition time from both.
pub fn build_flow_phantom(spec: &FlowSpec) -> Result<EventVolume> {
    spec.validate()?;
    let grid = spec.grid;
    let (t0, t1) = spec.dynamic_window;
    let sentinel = spec.no_event_time();
    let cells: Vec<Result<[f64; 3]>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.voxel_center_of(idx);
            let mut arrival: Option<f64> = None;
            for (i, region) in spec.pore_regions.iter().enumerate() {
                if !region.shape.contains(x) {
                    continue;
                }
                let t = region.arrival_time(x).clamp(t0, t1);
                match arrival {
                    Some(prev) if (prev - t).abs() > 1e-9 => {
                        return Err(Error::invalid(format!(
                            "pore region {i} overlaps another region with a different fluid state at {x:?}"
                        )))
                    }
                    _ => arrival = Some(t),
                }
            }
            Ok(match arrival {
                Some(t) => [spec.fluid0_mu, spec.fluid1_mu, t],
                None if spec.in_sample(x) => [spec.matrix_mu, spec.matrix_mu, sentinel],
                None => [0.0, 0.0, sentinel],
            })
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    assemble(grid, &cells)
}

fn assemble(grid: VoxelGrid3, cells: &[[f64; 3]]) -> Result<EventVolume> {
    let field = |c: usize| ScalarField3::from_values(grid, cells.iter().map(|v| v[c]).collect());
    EventVolume::new(field(0)?, field(1)?, field(2)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFlowOptions {
    pub n_regions: usize,
    /// Pore radius range in mm.
    pub radius_range: (f64, f64),
    pub matrix_mu: f64,
    pub fluid0_mu: f64,
    pub fluid1_mu: f64,
    pub dynamic_window: (f64, f64),
    /// Fraction of the grid half-width used as the sample cylinder radius.
    pub sample_fraction: f64,
}

impl Default for RandomFlowOptions {
    fn default() -> Self {
        Self {
            n_regions: 8,
            radius_range: (0.08, 0.16),
            matrix_mu: 0.8,
            fluid0_mu: 0.2,
            fluid1_mu: 1.4,
            dynamic_window: (1.0, 2.0),
            sample_fraction: 0.9,
        }
    }
}

/// Random non-overlapping pore regions inside a cylindrical sample.
///
/// `radius_range` is given as a fraction of the grid's smallest extent. Each
/// front starts at the region edge when the dynamic window opens and
/// finishes crossing it when the window closes.
pub fn random_flow_spec(grid: VoxelGrid3, opts: &RandomFlowOptions, rng_seed: u64) -> Result<FlowSpec> {
    let (lo, hi) = grid.bounds();
    let extent = (hi - lo).min();
    let center = grid.center();
    let (r_min, r_max) = (opts.radius_range.0 * extent, opts.radius_range.1 * extent);
    if !(r_min > 0.0 && r_min <= r_max) {
        return Err(Error::invalid("radius range must be positive and ordered"));
    }
    let sample_radius = opts.sample_fraction * 0.5 * (hi.x - lo.x).min(hi.y - lo.y);
    let (t0, t1) = opts.dynamic_window;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut regions: Vec<PoreRegion> = Vec::with_capacity(opts.n_regions);
    let mut placed: Vec<(Vec3, f64)> = Vec::new();
    let mut attempts = 0;
    while regions.len() < opts.n_regions {
        attempts += 1;
        if attempts > 1000 * opts.n_regions.max(1) {
            return Err(Error::invalid(format!(
                "could not place {} non-overlapping pores in the sample",
                opts.n_regions
            )));
        }
        let kind = regions.len() % 3;
        let r = rng.random_range(r_min..=r_max);
        let dir = unit(&mut rng);
        let c = Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
        let shape = match kind {
            0 => PoreShape::Sphere { center: c, radius: r },
            1 => {
                let half = dir * (1.5 * r);
                PoreShape::Channel { start: c - half, end: c + half, radius: 0.6 * r }
            }
            _ => {
                let offset = unit(&mut rng) * (0.6 * r);
                PoreShape::BlobUnion { centers: vec![c - offset, c + offset], radii: vec![0.8 * r, 0.7 * r] }
            }
        };
        let (a, b) = shape.bounds();
        let reach = ((b - a) * 0.5).max();
        let mid = (a + b) * 0.5;
        let radial = ((mid.x - center.x).powi(2) + (mid.y - center.y).powi(2)).sqrt();
        let inside = radial + reach <= sample_radius && (0..3).all(|k| a[k] >= lo[k] && b[k] <= hi[k]);
        let clear = placed.iter().all(|(m, q)| (m - mid).norm() > q + reach + 1.0 * grid.voxel_size);
        if !inside || !clear {
            continue;
        }
        placed.push((mid, reach));
        let radial_front = regions.len() % 4 == 3;
        let (front, anchor, speed) = if radial_front {
            (FrontKind::Radial, mid, reach / (t1 - t0))
        } else {
            (FrontKind::Planar, mid - dir * reach, 2.0 * reach / (t1 - t0))
        };
        regions.push(PoreRegion {
            shape,
            front,
            anchor,
            front_direction: dir,
            front_speed: speed,
            front_start_time: t0,
        });
    }
    Ok(FlowSpec {
        grid,
        matrix_mu: opts.matrix_mu,
        fluid0_mu: opts.fluid0_mu,
        fluid1_mu: opts.fluid1_mu,
        sample_radius: Some(sample_radius),
        pore_regions: regions,
        dynamic_window: opts.dynamic_window,
        rng_seed,
    })
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(v[0], v[1], v[2])
}

/// 1D overlap of coarse cell `i` with the fine cells, as `(fine index, length fraction)`.
fn axis_overlaps(
    coarse_lo: f64,
    coarse_vs: f64,
    nc: usize,
    fine_lo: f64,
    fine_vs: f64,
    nf: usize,
) -> Vec<Vec<(usize, f64)>> {
    (0..nc)
        .map(|i| {
            let a = coarse_lo + i as f64 * coarse_vs;
            let b = a + coarse_vs;
            let first = (((a - fine_lo) / fine_vs).floor().max(0.0)) as usize;
            let last = (((b - fine_lo) / fine_vs).ceil().max(0.0) as usize).min(nf);
            (first..last)
                .filter_map(|j| {
                    let fa = fine_lo + j as f64 * fine_vs;
                    let w = (b.min(fa + fine_vs) - a.max(fa)) / coarse_vs;
                    (w > 1e-12).then_some((j, w))
                })
                .collect()
        })
        .collect()
}

/// Averages a fine-grid phantom onto a coarser grid by voxel overlap.
///
/// Attenuations are overlap-weighted means. The transition time of a
/// coarse voxel is the overlap-weighted mean over its dynamic fine voxels;
/// voxels with no dynamic content keep the fine grid's latest transition
/// time (the no-event sentinel).
pub fn downsample_event_volume(fine: &EventVolume, coarse: VoxelGrid3) -> Result<EventVolume> {
    let fg = *fine.grid();
    let (flo, fhi) = fg.bounds();
    let (clo, chi) = coarse.bounds();
    if (0..3).any(|k| clo[k] < flo[k] - 1e-9 || chi[k] > fhi[k] + 1e-9) {
        return Err(Error::mismatch("coarse grid must lie within the fine grid"));
    }
    let ax = |k: usize, nc: usize, nf: usize| axis_overlaps(clo[k], coarse.voxel_size, nc, flo[k], fg.voxel_size, nf);
    let (ox, oy, oz) = (ax(0, coarse.nx, fg.nx), ax(1, coarse.ny, fg.ny), ax(2, coarse.nz, fg.nz));
    let (m0, m1, ts) = (fine.mu0.values(), fine.mu1.values(), fine.tstar.values());
    let sentinel = fine.tstar.max();
    let cells: Vec<[f64; 3]> = (0..coarse.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = coarse.coords(idx);
            let (mut w_sum, mut a0, mut a1, mut wt, mut tt) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(fk, wk) in &oz[k] {
                for &(fj, wj) in &oy[j] {
                    for &(fi, wi) in &ox[i] {
                        let w = wi * wj * wk;
                        let f = fg.index(fi, fj, fk);
                        w_sum += w;
                        a0 += w * m0[f];
                        a1 += w * m1[f];
                        if m0[f] != m1[f] {
                            wt += w;
                            tt += w * ts[f];
                        }
                    }
                }
            }
            let t = if wt > 0.0 { tt / wt } else { sentinel };
            [a0 / w_sum, a1 / w_sum, t]
        })
        .collect();
    assemble(coarse, &cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleParams {
    /// Bubble radius in mm.
    pub radius: f64,
    /// Thickness of the film between the bubbles in mm.
    pub wall_thickness: f64,
    /// Radius of the film disc in mm.
    pub film_radius: f64,
    pub slab_mu: f64,
    pub gas_mu: f64,
}

impl Default for BubbleParams {
    fn default() -> Self {
        Self { radius: 8.0, wall_thickness: 2.0, film_radius: 6.0, slab_mu: 1.0, gas_mu: 0.05 }
    }
}

/// Two gas bubbles along x inside a dense slab, separated by a film that
/// turns to gas at `rupture_time`.
///
/// The slab fills the grid; bubble centres sit at `x = +-(w/2 + r)` so the
/// film occupies `|x| < w/2` within `film_radius` of the x axis.
pub fn build_film_rupture_phantom(grid: VoxelGrid3, params: &BubbleParams, rupture_time: f64) -> Result<EventVolume> {
    let BubbleParams { radius, wall_thickness: w, film_radius, slab_mu, gas_mu } = *params;
    if !(w >= grid.voxel_size) {
        return Err(Error::invalid("film must be at least one voxel thick"));
    }
    if !(radius > 0.0 && film_radius > 0.0 && film_radius <= radius) {
        return Err(Error::invalid("bubble and film radii must be positive with film_radius <= radius"));
    }
    if !rupture_time.is_finite() || slab_mu < 0.0 || gas_mu < 0.0 {
        return Err(Error::invalid("rupture time must be finite and attenuations non-negative"));
    }
    let c = grid.center();
    let offset = 0.5 * w + radius;
    let sentinel = rupture_time + NO_EVENT_OFFSET;
    let cells: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.voxel_center_of(idx) - c;
            let in_bubble = |sx: f64| (p - Vec3::new(sx * offset, 0.0, 0.0)).norm_squared() <= radius * radius;
            let in_film = p.x.abs() < 0.5 * w && p.y * p.y + p.z * p.z <= film_radius * film_radius;
            if in_film {
                [slab_mu, gas_mu, rupture_time]
            } else if in_bubble(1.0) || in_bubble(-1.0) {
                [gas_mu, gas_mu, sentinel]
            } else {
                [slab_mu, slab_mu, sentinel]
            }
        })
        .collect();
    assemble(grid, &cells)
}
