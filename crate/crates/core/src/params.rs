use crate::error::{Error, Result};

/// Relaxation factors, subset plan and weighting options for the
/// event-based reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconParams {
    /// Relaxation of the transition-time step, in (0, 1].
    pub lambda_t: f64,
    /// Relaxation of the initial-phase attenuation update, in (0, 1].
    pub lambda_0: f64,
    /// Relaxation of the final-phase attenuation update, in (0, 1].
    pub lambda_1: f64,
    /// Scales `|mu1 - mu0|` in the confidence factor of the time step.
    pub lambda_delta: f64,
    /// Cap on the confidence factor numerator.
    pub lambda_mu: f64,
    /// Guard added to `mu1 - mu0` in the time-step denominator (1/cm). `None`
    /// resolves to `1e-4` times the attenuation range estimated at start-up.
    pub epsilon: Option<f64>,
    pub n_iterations: usize,
    pub n_subsets: usize,
    pub rng_seed: u64,
    pub use_weights: bool,
    pub weight_floor: f64,
    /// Ray sampling step as a fraction of the voxel size.
    pub ray_step: f64,
    /// When false, `mu0`/`mu1` stay at their initial values and only the
    /// transition times are estimated.
    pub fit_attenuations: bool,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            lambda_t: 0.5,
            lambda_0: 0.3,
            lambda_1: 0.3,
            lambda_delta: 1.0,
            lambda_mu: 1.0,
            epsilon: None,
            n_iterations: 10,
            n_subsets: 4,
            rng_seed: 0,
            use_weights: false,
            weight_floor: 0.01,
            ray_step: 0.5,
            fit_attenuations: true,
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_t", self.lambda_t), ("lambda_0", self.lambda_0), ("lambda_1", self.lambda_1)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.lambda_delta >= 0.0 && self.lambda_delta.is_finite()) {
            return Err(Error::invalid("lambda_delta must be finite and >= 0"));
        }
        if !(self.lambda_mu >= 0.0 && self.lambda_mu.is_finite()) {
            return Err(Error::invalid("lambda_mu must be finite and >= 0"));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!("epsilon must be > 0, got {eps}")));
            }
        }
        if self.n_iterations == 0 || self.n_subsets == 0 {
            return Err(Error::invalid("iteration and subset counts must be >= 1"));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::invalid("weight floor must be >= 0"));
        }
        if !(self.ray_step > 0.0 && self.ray_step <= 1.0) {
            return Err(Error::invalid(format!("ray_step must lie in (0, 1], got {}", self.ray_step)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ReconParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_relaxation() {
        let p = ReconParams { lambda_t: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ReconParams { lambda_1: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ReconParams { ray_step: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ReconParams { epsilon: Some(0.0), ..Default::default() };
        assert!(p.validate().is_err());
    }
}
