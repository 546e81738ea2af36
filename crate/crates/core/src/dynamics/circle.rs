use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, RngCore};

use super::MapModel;

/// Angular component of the solenoid as a standalone circle map,
/// `x' = 2x + (s₂/4) sin(2πx) mod 1` in the normalized angle `x = θ / period`.
///
/// Expanding (and so uniformly hyperbolic with `m = n = 1`) for `|s₂| < 2/π`.
#[derive(Debug, Clone)]
pub struct CircleDoubling {
    period: f64,
    periods: [Option<f64>; 1],
}

impl CircleDoubling {
    pub fn with_period(period: f64) -> Self {
        assert!(period > 0.0 && period.is_finite());
        CircleDoubling {
            period,
            periods: [Some(period)],
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    #[inline]
    fn omega(&self) -> f64 {
        TAU / self.period
    }
}

impl Default for CircleDoubling {
    fn default() -> Self {
        CircleDoubling::with_period(TAU)
    }
}

impl MapModel for CircleDoubling {
    fn id(&self) -> &'static str {
        "circle_doubling"
    }

    fn dim(&self) -> usize {
        1
    }

    fn n_params(&self) -> usize {
        1
    }

    fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    fn default_params(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn map(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * u[0] + self.period * s[0] / 4.0 * (self.omega() * u[0]).sin();
    }

    fn jacobian(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        out[0] = 2.0 + FRAC_PI_2 * s[0] * (self.omega() * u[0]).cos();
    }

    fn param_jacobian(&self, u: &[f64], _s: &[f64], out: &mut [f64]) {
        out[0] = self.period / 4.0 * (self.omega() * u[0]).sin();
    }

    fn jacobian_det(&self, u: &[f64], s: &[f64]) -> f64 {
        2.0 + FRAC_PI_2 * s[0] * (self.omega() * u[0]).cos()
    }

    fn det_gradient(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        let w = self.omega();
        out[0] = -FRAC_PI_2 * s[0] * w * (w * u[0]).sin();
    }

    fn sample_state(&self, _s: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = rng.random_range(0.0..self.period);
    }
}
