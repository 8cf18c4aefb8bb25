//! The three-parameter event representation of a dynamic sample.

use crate::error::{Error, Result};
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};

/// Per-voxel single-step evolution: attenuation `mu0` (1/cm) before the
/// transition time `tstar` (rotation periods), `mu1` from `tstar` onward.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVolume {
    pub mu0: ScalarField3,
    pub mu1: ScalarField3,
    pub tstar: ScalarField3,
}

impl EventVolume {
    pub fn new(mu0: ScalarField3, mu1: ScalarField3, tstar: ScalarField3) -> Result<Self> {
        mu0.grid().check_same(mu1.grid(), "event volume mu1")?;
        mu0.grid().check_same(tstar.grid(), "event volume tstar")?;
        if mu0.values().iter().chain(mu1.values()).any(|&v| v < 0.0) {
            return Err(Error::invalid("attenuation must be non-negative"));
        }
        Ok(Self { mu0, mu1, tstar })
    }

    /// Time-invariant volume: `mu0 = mu1 = field`, with `tstar` set to `tstar`.
    pub fn from_static(field: ScalarField3, tstar: f64) -> Self {
        let grid = *field.grid();
        Self { mu1: field.clone(), mu0: field, tstar: ScalarField3::filled(grid, tstar) }
    }

    pub fn uniform(grid: VoxelGrid3, mu0: f64, mu1: f64, tstar: f64) -> Self {
        Self {
            mu0: ScalarField3::filled(grid, mu0),
            mu1: ScalarField3::filled(grid, mu1),
            tstar: ScalarField3::filled(grid, tstar),
        }
    }

    pub fn grid(&self) -> &VoxelGrid3 {
        self.mu0.grid()
    }

    /// `mu1 - mu0` per voxel.
    pub fn delta_mu(&self) -> Vec<f64> {
        self.mu1.values().iter().zip(self.mu0.values()).map(|(a, b)| a - b).collect()
    }

    /// Attenuation of voxel `idx` at time `t` (no interpolation).
    #[inline]
    pub fn voxel_mu(&self, idx: usize, t: f64) -> f64 {
        step(self.mu0.values()[idx], self.mu1.values()[idx], self.tstar.values()[idx], t)
    }

    /// Interleaved `[mu0, mu1, tstar]` per voxel, the layout the ray marcher reads.
    pub(crate) fn packed(&self) -> Vec<[f64; 3]> {
        self.mu0
            .values()
            .iter()
            .zip(self.mu1.values())
            .zip(self.tstar.values())
            .map(|((&a, &b), &t)| [a, b, t])
            .collect()
    }
}

/// Half-open step: `mu1` on `[tstar, inf)`, `mu0` before.
#[inline]
pub fn step(mu0: f64, mu1: f64, tstar: f64, t: f64) -> f64 {
    if t < tstar {
        mu0
    } else {
        mu1
    }
}

/// Attenuation at world point `x` and time `t`. The three parameter fields
/// are interpolated independently and the step is applied afterwards;
/// outside the grid the result is 0.
pub fn sample_event_volume(vol: &EventVolume, x: Vec3, t: f64) -> f64 {
    let grid = vol.grid();
    let (a, b, ts) = (vol.mu0.values(), vol.mu1.values(), vol.tstar.values());
    grid.trilinear(grid.world_to_index(x), |i| [a[i], b[i], ts[i]])
        .map_or(0.0, |[m0, m1, tstar]| step(m0, m1, tstar, t))
}

/// Non-negative per-voxel weights with unit mean.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVolume {
    pub values: ScalarField3,
}

impl WeightVolume {
    pub fn ones(grid: VoxelGrid3) -> Self {
        Self { values: ScalarField3::filled(grid, 1.0) }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values.values()[idx]
    }
}
