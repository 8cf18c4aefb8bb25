//! Per-voxel correction statistics and the single-voxel update rules.

use crate::geometry::ROTATION_PERIOD;
use crate::params::ReconParams;

/// Running co-moment of `(t, c)` pairs, updated one sample at a time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CovarianceAccumulator {
    n: usize,
    mean_t: f64,
    mean_c: f64,
    comoment: f64,
}

impl CovarianceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, t: f64, c: f64) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let dt = t - self.mean_t;
        self.mean_t += dt * inv;
        self.mean_c += (c - self.mean_c) * inv;
        self.comoment += dt * (c - self.mean_c);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean_c(&self) -> f64 {
        self.mean_c
    }

    /// Population covariance; 0 with fewer than two samples.
    pub fn covariance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.comoment / self.n as f64
        }
    }
}

/// Covariance of time and correction over the rotation before and the
/// rotation after the current transition-time estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoxelCorrectionStats {
    /// time x attenuation (rotations / cm)
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    /// 1/cm
    pub mean_minus: f64,
    pub mean_plus: f64,
    pub n_minus: usize,
    pub n_plus: usize,
}

/// First and last acquisition instants; window and clamp limits derive from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpan {
    pub start: f64,
    pub end: f64,
}

impl ScanSpan {
    /// Split point of the two one-rotation windows: `t_prev`, pushed inward
    /// so that `[mid - 1, mid)` and `[mid, mid + 1)` both lie in the scan.
    pub fn window_center(&self, t_prev: f64) -> f64 {
        let lo = self.start + ROTATION_PERIOD;
        let hi = self.end - ROTATION_PERIOD;
        if hi < lo {
            0.5 * (self.start + self.end)
        } else {
            t_prev.clamp(lo, hi)
        }
    }

    /// Legal transition times: the scan extended by one rotation each side.
    pub fn clamp_tstar(&self, t: f64) -> f64 {
        t.clamp(self.start - ROTATION_PERIOD, self.end + ROTATION_PERIOD)
    }
}

/// One backprojected correction: view time, sampled correction `C`, and the
/// voxel's modelled attenuation at that time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSample {
    pub t: f64,
    pub c: f64,
    pub mu: f64,
}

/// Window statistics in one pass over the samples.
pub fn window_stats(samples: &[CorrectionSample], t_prev: f64, span: ScanSpan) -> VoxelCorrectionStats {
    let mid = span.window_center(t_prev);
    let (lo, hi) = (mid - ROTATION_PERIOD, mid + ROTATION_PERIOD);
    debug_assert!((mid - lo - ROTATION_PERIOD).abs() < 1e-12 && (hi - mid - ROTATION_PERIOD).abs() < 1e-12);
    let mut minus = CovarianceAccumulator::new();
    let mut plus = CovarianceAccumulator::new();
    for s in samples {
        if s.t >= lo && s.t < mid {
            minus.push(s.t, s.c);
        } else if s.t >= mid && s.t < hi {
            plus.push(s.t, s.c);
        }
    }
    VoxelCorrectionStats {
        sigma_minus: minus.covariance(),
        sigma_plus: plus.covariance(),
        mean_minus: minus.mean_c(),
        mean_plus: plus.mean_c(),
        n_minus: minus.count(),
        n_plus: plus.count(),
    }
}

#[inline]
fn sign_nonzero(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Transition-time step before relaxation, clipped to half a rotation.
///
/// `sigma` carries time x attenuation; the factor `min(..)/(dmu + eps)` is
/// 1/attenuation, so the step is a time.
pub fn transition_step(
    stats: &VoxelCorrectionStats,
    mu0: f64,
    mu1: f64,
    lambda_delta: f64,
    lambda_mu: f64,
    epsilon: f64,
) -> f64 {
    let dmu = mu1 - mu0;
    let confidence = (lambda_delta * dmu.abs()).min(lambda_mu);
    let raw = (stats.sigma_plus - stats.sigma_minus) * confidence / (dmu + sign_nonzero(dmu) * epsilon);
    let half = 0.5 * ROTATION_PERIOD;
    raw.clamp(-half, half)
}

pub(crate) fn resolved_epsilon(params: &ReconParams) -> f64 {
    params.epsilon.unwrap_or(1e-4)
}

/// Relaxed transition-time update with unit voxel weight.
pub fn update_transition_time(
    stats: &VoxelCorrectionStats,
    mu0: f64,
    mu1: f64,
    params: &ReconParams,
    t_prev: f64,
    span: ScanSpan,
) -> f64 {
    let dt = transition_step(stats, mu0, mu1, params.lambda_delta, params.lambda_mu, resolved_epsilon(params));
    span.clamp_tstar(t_prev + params.lambda_t * dt)
}

/// Averages the corrected attenuation `mu + C` on each side of `t_new` and
/// relaxes toward it. A side without samples keeps its previous value.
pub fn update_attenuations(
    samples: &[CorrectionSample],
    t_new: f64,
    lambda_0: f64,
    lambda_1: f64,
    mu0_prev: f64,
    mu1_prev: f64,
) -> (f64, f64) {
    // offsets from the previous values keep zero corrections an exact fixed point
    let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for s in samples {
        if s.t < t_new {
            s0 += s.mu - mu0_prev + s.c;
            n0 += 1;
        } else {
            s1 += s.mu - mu1_prev + s.c;
            n1 += 1;
        }
    }
    let relax = |prev: f64, sum: f64, n: usize, lambda: f64| {
        if n == 0 {
            prev
        } else {
            (prev + lambda * (sum / n as f64)).max(0.0)
        }
    };
    (relax(mu0_prev, s0, n0, lambda_0), relax(mu1_prev, s1, n1, lambda_1))
}
