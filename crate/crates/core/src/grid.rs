//! Regular voxel grids and dense scalar fields defined on them.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Isotropic voxel lattice. `origin` is the world position (mm) of the
/// center of voxel (0, 0, 0); x is the fastest-varying index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl VoxelGrid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, voxel_size: f64, origin: Vec3) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!("grid dimensions must be positive, got {nx}x{ny}x{nz}")));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_size}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(Self { nx, ny, nz, voxel_size, origin })
    }

    /// Grid whose bounding box is centered on the world origin (the rotation axis
    /// passes through its center).
    pub fn centered(nx: usize, ny: usize, nz: usize, voxel_size: f64) -> Result<Self> {
        let origin = Vec3::new(
            -0.5 * (nx as f64 - 1.0) * voxel_size,
            -0.5 * (ny as f64 - 1.0) * voxel_size,
            -0.5 * (nz as f64 - 1.0) * voxel_size,
        );
        Self::new(nx, ny, nz, voxel_size, origin)
    }

    pub fn cube(n: usize, voxel_size: f64) -> Result<Self> {
        Self::centered(n, n, n, voxel_size)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    /// Fractional voxel index of a world point. Out-of-range results are legal.
    #[inline]
    pub fn world_to_index(&self, x: Vec3) -> Vec3 {
        (x - self.origin) / self.voxel_size
    }

    #[inline]
    pub fn index_to_world(&self, f: Vec3) -> Vec3 {
        self.origin + f * self.voxel_size
    }

    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.index_to_world(Vec3::new(i as f64, j as f64, k as f64))
    }

    pub fn voxel_center_of(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.coords(idx);
        self.voxel_center(i, j, k)
    }

    /// Outer faces of the voxel lattice, (min corner, max corner), in mm.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let half = Vec3::repeat(0.5 * self.voxel_size);
        let last = self.voxel_center(self.nx - 1, self.ny - 1, self.nz - 1);
        (self.origin - half, last + half)
    }

    pub fn center(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        0.5 * (lo + hi)
    }

    pub fn check_same(&self, other: &VoxelGrid3, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::mismatch(format!("{what}: grids differ ({self:?} vs {other:?})")))
        }
    }

    /// Trilinear interpolation at fractional index `f`. Points inside the
    /// outer faces but beyond the outermost voxel centers take the edge value;
    /// points outside the bounding box yield `None`.
    #[inline]
    pub(crate) fn trilinear<const C: usize>(&self, f: Vec3, fetch: impl Fn(usize) -> [f64; C]) -> Option<[f64; C]> {
        let (x0, x1, wx) = axis_weights(f.x, self.nx)?;
        let (y0, y1, wy) = axis_weights(f.y, self.ny)?;
        let (z0, z1, wz) = axis_weights(f.z, self.nz)?;
        let c000 = fetch(self.index(x0, y0, z0));
        let c100 = fetch(self.index(x1, y0, z0));
        let c010 = fetch(self.index(x0, y1, z0));
        let c110 = fetch(self.index(x1, y1, z0));
        let c001 = fetch(self.index(x0, y0, z1));
        let c101 = fetch(self.index(x1, y0, z1));
        let c011 = fetch(self.index(x0, y1, z1));
        let c111 = fetch(self.index(x1, y1, z1));
        let mut out = [0.0; C];
        for c in 0..C {
            let a = c000[c] + wx * (c100[c] - c000[c]);
            let b = c010[c] + wx * (c110[c] - c010[c]);
            let d = c001[c] + wx * (c101[c] - c001[c]);
            let e = c011[c] + wx * (c111[c] - c011[c]);
            let lo = a + wy * (b - a);
            let hi = d + wy * (e - d);
            out[c] = lo + wz * (hi - lo);
        }
        Some(out)
    }
}

#[inline]
fn axis_weights(f: f64, n: usize) -> Option<(usize, usize, f64)> {
    let upper = n as f64 - 0.5;
    if !(f >= -0.5 && f <= upper) {
        return None;
    }
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    let fc = f.clamp(0.0, (n - 1) as f64);
    let i0 = (fc.floor() as usize).min(n - 2);
    Some((i0, i0 + 1, fc - i0 as f64))
}

/// Dense real field on a [`VoxelGrid3`], x-index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: VoxelGrid3,
    values: Vec<f64>,
}

impl ScalarField3 {
    pub fn zeros(grid: VoxelGrid3) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: VoxelGrid3, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: VoxelGrid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!("field has {} values, grid needs {}", values.len(), grid.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite field value at index {pos}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: VoxelGrid3, mut f: impl FnMut(Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.voxel_center_of(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &VoxelGrid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| a * v).collect() }
    }

    /// Trilinear sample at a world position; 0 outside the grid.
    pub fn sample(&self, x: Vec3) -> f64 {
        let f = self.grid.world_to_index(x);
        self.grid.trilinear(f, |i| [self.values[i]]).map_or(0.0, |[v]| v)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Root-mean-square difference of two fields on the same grid.
pub fn rmse(a: &ScalarField3, b: &ScalarField3) -> Result<f64> {
    a.grid().check_same(b.grid(), "rmse")?;
    let n = a.values().len() as f64;
    let ss: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / n).sqrt())
}
