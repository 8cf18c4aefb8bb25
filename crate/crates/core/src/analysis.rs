//! Validation metrics for reconstructed transition times: error over the
//! dynamic region, co-occurrence histograms, error by flow/beam angle,
//! difference sinograms and flow directions.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::AcquisitionGeometry;
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};
use crate::projection::ProjectionSet;
use crate::volume::EventVolume;

/// Which ground-truth voxels count as dynamic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskPolicy {
    /// Every voxel with `mu1 != mu0`.
    Dynamic,
    /// Dynamic voxels with `|mu1 - mu0| >= fraction * max |mu1 - mu0|`.
    Contrast { fraction: f64 },
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy::Contrast { fraction: 0.5 }
    }
}

/// Indices of the voxels selected by `policy`, in ascending order.
pub fn metric_mask(gt: &EventVolume, policy: MaskPolicy) -> Vec<usize> {
    let dmu = gt.delta_mu();
    let threshold = match policy {
        MaskPolicy::Dynamic => 0.0,
        MaskPolicy::Contrast { fraction } => fraction * dmu.iter().fold(0.0f64, |m, d| m.max(d.abs())),
    };
    (0..dmu.len()).filter(|&i| dmu[i] != 0.0 && dmu[i].abs() >= threshold).collect()
}

fn checked_mask(gt: &EventVolume, rec: &EventVolume, policy: MaskPolicy) -> Result<Vec<usize>> {
    gt.grid().check_same(rec.grid(), "ground truth and reconstruction")?;
    let mask = metric_mask(gt, policy);
    if mask.is_empty() {
        return Err(Error::invalid("metric mask is empty: ground truth has no dynamic voxels"));
    }
    Ok(mask)
}

/// Mean absolute transition-time error over the mask, in rotation periods.
pub fn mae_transition(gt: &EventVolume, rec: &EventVolume, policy: MaskPolicy) -> Result<f64> {
    let mask = checked_mask(gt, rec, policy)?;
    let (a, b) = (gt.tstar.values(), rec.tstar.values());
    Ok(mask.iter().map(|&i| (a[i] - b[i]).abs()).sum::<f64>() / mask.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceHistogram {
    /// Bin edges along the ground-truth axis, `n_bins + 1` values.
    pub bins_gt: Vec<f64>,
    pub bins_rec: Vec<f64>,
    /// `counts[i][j]`: voxels with ground truth in bin `i` and reconstruction in bin `j`.
    pub counts: Vec<Vec<u64>>,
}

impl CooccurrenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Share of voxels whose bins differ by at most `band`.
    pub fn diagonal_fraction(&self, band: usize) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let near: u64 = self
            .counts
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| i.abs_diff(*j) <= band).map(|(_, c)| *c))
            .sum();
        near as f64 / total as f64
    }

    /// One row per ground-truth bin: lower and upper edge, then the counts.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gt_lo,gt_hi");
        for j in 0..self.counts.len() {
            let _ = write!(s, ",rec_{:.4}_{:.4}", self.bins_rec[j], self.bins_rec[j + 1]);
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{},{}", self.bins_gt[i], self.bins_gt[i + 1]);
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

/// 2D histogram of ground-truth vs. reconstructed transition time over
/// `window`. Values outside the window fall into the edge bins.
pub fn cooccurrence_hist(
    gt: &EventVolume,
    rec: &EventVolume,
    n_bins: usize,
    window: (f64, f64),
    policy: MaskPolicy,
) -> Result<CooccurrenceHistogram> {
    if n_bins < 2 {
        return Err(Error::invalid("co-occurrence histogram needs at least 2 bins"));
    }
    if !(window.0 < window.1) {
        return Err(Error::invalid("histogram window must be increasing"));
    }
    let mask = checked_mask(gt, rec, policy)?;
    let width = (window.1 - window.0) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| window.0 + i as f64 * width).collect();
    let bin = |t: f64| (((t - window.0) / width).floor().max(0.0) as usize).min(n_bins - 1);
    let mut counts = vec![vec![0u64; n_bins]; n_bins];
    for &i in &mask {
        counts[bin(gt.tstar.values()[i])][bin(rec.tstar.values()[i])] += 1;
    }
    Ok(CooccurrenceHistogram { bins_gt: edges.clone(), bins_rec: edges, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngleCategory {
    Parallel,
    Mid,
    Orthogonal,
}

impl AngleCategory {
    pub const ALL: [AngleCategory; 3] = [AngleCategory::Parallel, AngleCategory::Mid, AngleCategory::Orthogonal];

    /// Category of an angle in degrees within `[0, 180]`.
    pub fn of_degrees(angle: f64) -> Self {
        if angle <= 20.0 || angle >= 160.0 {
            AngleCategory::Parallel
        } else if (80.0..=100.0).contains(&angle) {
            AngleCategory::Orthogonal
        } else {
            AngleCategory::Mid
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AngleCategory::Parallel => "parallel",
            AngleCategory::Mid => "mid",
            AngleCategory::Orthogonal => "orthogonal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryStats {
    pub count: usize,
    /// 0 for an empty category.
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AngularBreakdown {
    pub parallel: CategoryStats,
    pub mid: CategoryStats,
    pub orthogonal: CategoryStats,
    /// Masked voxels skipped because their ground-truth gradient vanishes.
    pub excluded: usize,
}

impl AngularBreakdown {
    pub fn get(&self, c: AngleCategory) -> CategoryStats {
        match c {
            AngleCategory::Parallel => self.parallel,
            AngleCategory::Mid => self.mid,
            AngleCategory::Orthogonal => self.orthogonal,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,count,mae_rotations\n");
        for c in AngleCategory::ALL {
            let st = self.get(c);
            let _ = writeln!(s, "{},{},{}", c.name(), st.count, st.mae);
        }
        let _ = writeln!(s, "excluded,{},", self.excluded);
        s
    }
}

/// Gradient of `t` at voxel `idx` using only voxels where `inside` holds:
/// central differences where both neighbours qualify, one-sided otherwise.
fn masked_gradient(grid: &VoxelGrid3, t: &[f64], inside: &[bool], idx: usize) -> Vec3 {
    let (i, j, k) = grid.coords(idx);
    let pos = [i, j, k];
    let dims = grid.dims();
    let mut g = Vec3::zeros();
    for axis in 0..3 {
        let neighbour = |delta: isize| -> Option<f64> {
            let p = pos[axis] as isize + delta;
            if p < 0 || p >= dims[axis] as isize {
                return None;
            }
            let mut q = pos;
            q[axis] = p as usize;
            let n = grid.index(q[0], q[1], q[2]);
            inside[n].then(|| t[n])
        };
        let here = t[idx];
        g[axis] = match (neighbour(-1), neighbour(1)) {
            (Some(a), Some(b)) => (b - a) / (2.0 * grid.voxel_size),
            (None, Some(b)) => (b - here) / grid.voxel_size,
            (Some(a), None) => (here - a) / grid.voxel_size,
            (None, None) => 0.0,
        };
    }
    g
}

/// Transition-time error split by the angle between the ground-truth flow
/// direction and the beam direction at the moment of transition.
pub fn angular_breakdown(
    gt: &EventVolume,
    rec: &EventVolume,
    geometry: &AcquisitionGeometry,
    policy: MaskPolicy,
) -> Result<AngularBreakdown> {
    let mask = checked_mask(gt, rec, policy)?;
    let grid = *gt.grid();
    let dynamic: Vec<bool> = gt.delta_mu().iter().map(|d| *d != 0.0).collect();
    let (tg, tr) = (gt.tstar.values(), rec.tstar.values());
    let per_voxel: Vec<Option<(AngleCategory, f64)>> = mask
        .par_iter()
        .map(|&idx| {
            let g = masked_gradient(&grid, tg, &dynamic, idx);
            let n = g.norm();
            if !(n > 0.0) {
                return None;
            }
            let x = grid.voxel_center_of(idx);
            let beam = geometry.beam_direction_at(geometry.nearest_view(tg[idx]), x);
            let angle = (g / n).dot(&beam).clamp(-1.0, 1.0).acos().to_degrees();
            Some((AngleCategory::of_degrees(angle), (tg[idx] - tr[idx]).abs()))
        })
        .collect();
    let mut out = AngularBreakdown::default();
    let mut sums = [0.0; 3];
    for v in per_voxel {
        match v {
            None => out.excluded += 1,
            Some((c, err)) => {
                let slot = match c {
                    AngleCategory::Parallel => 0,
                    AngleCategory::Mid => 1,
                    AngleCategory::Orthogonal => 2,
                };
                sums[slot] += err;
                match c {
                    AngleCategory::Parallel => out.parallel.count += 1,
                    AngleCategory::Mid => out.mid.count += 1,
                    AngleCategory::Orthogonal => out.orthogonal.count += 1,
                }
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    out.parallel.mae = mean(sums[0], out.parallel.count);
    out.mid.mae = mean(sums[1], out.mid.count);
    out.orthogonal.mae = mean(sums[2], out.orthogonal.count);
    Ok(out)
}

/// Each view minus the same angle one rotation earlier; the first
/// rotation maps to zero.
pub fn difference_sinogram(measured: &ProjectionSet) -> Result<ProjectionSet> {
    let g = measured.geometry();
    let k = g.projections_per_rotation;
    if g.n_views() < 2 * k {
        return Err(Error::invalid("difference sinogram needs at least two rotations of views"));
    }
    let n = g.pixels_per_view();
    let src = measured.data();
    let mut out = vec![0.0; src.len()];
    out[k * n..].par_chunks_mut(n).enumerate().for_each(|(v, img)| {
        let cur = &src[(v + k) * n..(v + k + 1) * n];
        let prev = &src[v * n..(v + 1) * n];
        for ((o, a), b) in img.iter_mut().zip(cur).zip(prev) {
            *o = a - b;
        }
    });
    ProjectionSet::from_data(g.clone(), out)
}

/// Time of the earliest view whose difference image exceeds
/// `fraction * max |difference|` anywhere; `None` for a static scan.
pub fn event_time_from_difference(diff: &ProjectionSet, fraction: f64) -> Option<f64> {
    let peak = diff.max_abs();
    if !(peak > 0.0) {
        return None;
    }
    let threshold = fraction * peak;
    (0..diff.geometry().n_views())
        .find(|&v| diff.image(v).iter().any(|x| x.abs() > threshold))
        .map(|v| diff.geometry().views()[v].time)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    /// Unit flow directions; zero where `valid` is false.
    pub directions: Vec<Vec3>,
    /// Inside the mask with a non-zero gradient.
    pub valid: Vec<bool>,
}

/// Unit gradient of the transition time inside `mask`, by masked central differences.
pub fn flow_direction(tstar: &ScalarField3, mask: &[bool]) -> Result<FlowField> {
    let grid = *tstar.grid();
    if mask.len() != grid.len() {
        return Err(Error::mismatch(format!("mask has {} entries, grid has {}", mask.len(), grid.len())));
    }
    let t = tstar.values();
    let (directions, valid): (Vec<Vec3>, Vec<bool>) = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !mask[idx] {
                return (Vec3::zeros(), false);
            }
            let g = masked_gradient(&grid, t, mask, idx);
            let n = g.norm();
            if n > 0.0 {
                (g / n, true)
            } else {
                (Vec3::zeros(), false)
            }
        })
        .unzip();
    Ok(FlowField { directions, valid })
}

/// Line-oriented `key=value` summary of a validation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_kv_string(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("metrics line {}: expected key=value", n + 1)))?;
            out.push(k.trim(), v.trim());
        }
        Ok(out)
    }

    /// Adds the standard transition-time metrics for a reconstruction.
    pub fn add_transition_metrics(
        &mut self,
        gt: &EventVolume,
        rec: &EventVolume,
        geometry: &AcquisitionGeometry,
        window: (f64, f64),
        n_bins: usize,
    ) -> Result<(CooccurrenceHistogram, AngularBreakdown)> {
        let policy = MaskPolicy::default();
        self.push("mask_voxels", metric_mask(gt, policy).len());
        self.push("mae_rotations", mae_transition(gt, rec, policy)?);
        self.push("mae_rotations_all_dynamic", mae_transition(gt, rec, MaskPolicy::Dynamic)?);
        let hist = cooccurrence_hist(gt, rec, n_bins, window, policy)?;
        self.push("cooccurrence_diagonal_fraction", hist.diagonal_fraction(1));
        let ab = angular_breakdown(gt, rec, geometry, policy)?;
        for c in AngleCategory::ALL {
            let st = ab.get(c);
            self.push(format!("mae_{}", c.name()), st.mae);
            self.push(format!("count_{}", c.name()), st.count);
        }
        self.push("count_excluded_gradient", ab.excluded);
        Ok((hist, ab))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Beam;

    fn shifted(gt: &EventVolume, f: impl Fn(usize, f64) -> f64) -> EventVolume {
        let mut rec = gt.clone();
        let t: Vec<f64> = gt.tstar.values().iter().enumerate().map(|(i, &t)| f(i, t)).collect();
        rec.tstar = ScalarField3::from_values(*gt.grid(), t).unwrap();
        rec
    }

    fn ramp(n: usize) -> EventVolume {
        // dynamic slab in the middle with t* increasing along x over [1, 2]
        let grid = VoxelGrid3::cube(n, 1.0).unwrap();
        let mut mu1 = vec![0.5; grid.len()];
        let mut ts = vec![12.0; grid.len()];
        for idx in 0..grid.len() {
            let (i, j, _) = grid.coords(idx);
            if j >= n / 4 && j < 3 * n / 4 {
                mu1[idx] = 1.5;
                ts[idx] = 1.0 + i as f64 / (n - 1) as f64;
            }
        }
        EventVolume::new(
            ScalarField3::filled(grid, 0.5),
            ScalarField3::from_values(grid, mu1).unwrap(),
            ScalarField3::from_values(grid, ts).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mae_identity_and_shift() {
        let gt = ramp(8);
        assert_eq!(mae_transition(&gt, &gt, MaskPolicy::default()).unwrap(), 0.0);
        let rec = shifted(&gt, |_, t| t + 0.1);
        assert!((mae_transition(&gt, &rec, MaskPolicy::Dynamic).unwrap() - 0.1).abs() < 1e-12);
        // static voxels do not matter
        let relabeled = shifted(&gt, |i, t| if gt.delta_mu()[i] == 0.0 { -5.0 } else { t });
        assert_eq!(mae_transition(&gt, &relabeled, MaskPolicy::default()).unwrap(), 0.0);
        let stat = EventVolume::uniform(*gt.grid(), 0.3, 0.3, 1.0);
        assert!(mae_transition(&stat, &stat, MaskPolicy::Dynamic).is_err());
    }

    #[test]
    fn contrast_mask_drops_weak_voxels() {
        let grid = VoxelGrid3::cube(2, 1.0).unwrap();
        let gt = EventVolume::new(
            ScalarField3::zeros(grid),
            ScalarField3::from_values(grid, vec![1.0, 0.4, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
            ScalarField3::filled(grid, 1.0),
        )
        .unwrap();
        assert_eq!(metric_mask(&gt, MaskPolicy::Dynamic), vec![0, 1, 2]);
        assert_eq!(metric_mask(&gt, MaskPolicy::default()), vec![0, 2]);
    }

    #[test]
    fn cooccurrence_diagonal_and_antidiagonal() {
        let gt = ramp(10);
        let h = cooccurrence_hist(&gt, &gt, 5, (1.0, 2.0), MaskPolicy::Dynamic).unwrap();
        assert_eq!(h.total() as usize, metric_mask(&gt, MaskPolicy::Dynamic).len());
        assert_eq!(h.diagonal_fraction(0), 1.0);
        let rev = shifted(&gt, |_, t| 3.0 - t);
        let h = cooccurrence_hist(&gt, &rev, 5, (1.0, 2.0), MaskPolicy::Dynamic).unwrap();
        for (i, row) in h.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i + j != 4 {
                    assert_eq!(*c, 0, "({i},{j})");
                }
            }
        }
        assert!(cooccurrence_hist(&gt, &gt, 1, (1.0, 2.0), MaskPolicy::Dynamic).is_err());
        assert!(h.to_csv().lines().count() == 6);
    }

    #[test]
    fn axial_front_is_orthogonal() {
        let grid = VoxelGrid3::cube(6, 1.0).unwrap();
        let ts: Vec<f64> = (0..grid.len()).map(|i| 1.0 + 0.1 * grid.coords(i).2 as f64).collect();
        let gt = EventVolume::new(
            ScalarField3::zeros(grid),
            ScalarField3::filled(grid, 1.0),
            ScalarField3::from_values(grid, ts).unwrap(),
        )
        .unwrap();
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 6, 6, 1.0, 36, 108, 0.3).unwrap();
        let ab = angular_breakdown(&gt, &gt, &g, MaskPolicy::Dynamic).unwrap();
        assert_eq!(ab.orthogonal.count, grid.len());
        assert_eq!(ab.parallel.count + ab.mid.count + ab.excluded, 0);
    }

    #[test]
    fn three_voxel_toy_angles() {
        // front along +x crossing at t = 0, 1/8, 1/4 with 8 views per rotation:
        // beam at 0, 45 and 90 degrees respectively
        let grid = VoxelGrid3::centered(3, 1, 1, 1.0).unwrap();
        let gt = EventVolume::new(
            ScalarField3::zeros(grid),
            ScalarField3::filled(grid, 1.0),
            ScalarField3::from_values(grid, vec![0.0, 0.125, 0.25]).unwrap(),
        )
        .unwrap();
        let rec = shifted(&gt, |i, t| t + [0.1, 0.2, 0.3][i]);
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 3, 1.0, 8, 24, 0.0).unwrap();
        let ab = angular_breakdown(&gt, &rec, &g, MaskPolicy::Dynamic).unwrap();
        assert_eq!((ab.parallel.count, ab.mid.count, ab.orthogonal.count), (1, 1, 1));
        assert!((ab.parallel.mae - 0.1).abs() < 1e-12);
        assert!((ab.mid.mae - 0.2).abs() < 1e-12);
        assert!((ab.orthogonal.mae - 0.3).abs() < 1e-12);
    }

    #[test]
    fn flat_ground_truth_is_excluded() {
        let grid = VoxelGrid3::cube(3, 1.0).unwrap();
        let gt = EventVolume::uniform(grid, 0.0, 1.0, 1.5);
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 3, 3, 1.0, 8, 24, 0.0).unwrap();
        let ab = angular_breakdown(&gt, &gt, &g, MaskPolicy::Dynamic).unwrap();
        assert_eq!(ab.excluded, grid.len());
    }

    #[test]
    fn difference_sinogram_static_and_event() {
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 2, 1.0, 4, 12, 0.0).unwrap();
        let p = ProjectionSet::from_data(g.clone(), vec![0.7; 24]).unwrap();
        assert_eq!(difference_sinogram(&p).unwrap().max_abs(), 0.0);
        assert_eq!(event_time_from_difference(&difference_sinogram(&p).unwrap(), 0.1), None);

        // step at view 6: differences only in views 6..10
        let data: Vec<f64> = (0..24).map(|i| if i / 2 >= 6 { 1.0 } else { 0.5 }).collect();
        let d = difference_sinogram(&ProjectionSet::from_data(g.clone(), data).unwrap()).unwrap();
        for v in 0..12 {
            let nonzero = d.image(v).iter().any(|x| *x != 0.0);
            assert_eq!(nonzero, (6..10).contains(&v), "view {v}");
        }
        assert_eq!(event_time_from_difference(&d, 0.5), Some(g.views()[6].time));
        let short = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 2, 1.0, 4, 6, 0.0).unwrap();
        assert!(difference_sinogram(&ProjectionSet::zeros(short)).is_err());
    }

    #[test]
    fn difference_telescopes() {
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 1, 1.0, 3, 12, 0.0).unwrap();
        let data: Vec<f64> = (0..12).map(|i| ((i * i) % 7) as f64).collect();
        let p = ProjectionSet::from_data(g, data.clone()).unwrap();
        let dd = difference_sinogram(&difference_sinogram(&p).unwrap()).unwrap();
        for i in 6..12 {
            assert_eq!(dd.data()[i], data[i] - 2.0 * data[i - 3] + data[i - 6]);
        }
    }

    #[test]
    fn flow_direction_planar_and_radial() {
        let grid = VoxelGrid3::cube(11, 1.0).unwrap();
        let planar = ScalarField3::from_fn(grid, |x| 1.0 + 0.05 * x.x);
        let mask = vec![true; grid.len()];
        let f = flow_direction(&planar, &mask).unwrap();
        assert!(f.directions.iter().all(|d| (d - Vec3::x()).norm() < 1e-12));

        let radial = ScalarField3::from_fn(grid, |x| x.norm());
        let f = flow_direction(&radial, &mask).unwrap();
        let mut checked = 0;
        for idx in 0..grid.len() {
            let x = grid.voxel_center_of(idx);
            if x.norm() < 2.0 || !f.valid[idx] {
                continue;
            }
            let cos = f.directions[idx].dot(&x.normalize());
            assert!(cos >= 5f64.to_radians().cos(), "{x:?}");
            checked += 1;
        }
        assert!(checked > 500);

        let mut partial = vec![false; grid.len()];
        partial[0] = true;
        let f = flow_direction(&planar, &partial).unwrap();
        assert_eq!(f.valid.iter().filter(|v| **v).count(), 0);
    }

    #[test]
    fn report_round_trip() {
        let mut r = MetricsReport::new();
        r.push("mae_rotations", 0.125);
        r.push("count_mid", 7);
        let text = r.to_kv_string();
        assert_eq!(text, "mae_rotations=0.125\ncount_mid=7\n");
        let back = MetricsReport::parse(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("count_mid"), Some("7"));
        assert!(MetricsReport::parse("nonsense").is_err());
    }
}
