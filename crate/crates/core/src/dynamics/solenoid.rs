use std::f64::consts::TAU;

use rand::{Rng, RngCore};

use super::MapModel;

/// Solenoid map on the solid torus, state `[r, θ, z]`, parameters `[s₁, s₂]`.
///
/// With `x = θ / period` the normalized angle, one step is
///
/// ```text
/// r' = s₁ + (r − s₁)/4 + cos(2πx)/2
/// x' = 2x + (s₂/4) sin(2πx)            (mod 1)
/// z' = z/4 + sin(2πx)/2
/// ```
///
/// The angle is stored in units of `period`. Radians (period 2π) is the
/// default: with period 1 every floating-point orbit of the exact doubling at
/// `s₂ = 0` collapses onto 0 within 53 steps, whereas reduction modulo 2π keeps
/// injecting round-off and the orbit stays chaotic.
#[derive(Debug, Clone)]
pub struct Solenoid {
    period: f64,
    periods: [Option<f64>; 3],
}

impl Solenoid {
    pub fn with_period(period: f64) -> Self {
        assert!(period > 0.0 && period.is_finite());
        Solenoid {
            period,
            periods: [None, Some(period), None],
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

impl Default for Solenoid {
    fn default() -> Self {
        Solenoid::with_period(TAU)
    }
}

impl MapModel for Solenoid {
    fn id(&self) -> &'static str {
        "solenoid"
    }

    fn dim(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        2
    }

    fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    fn default_params(&self) -> Vec<f64> {
        vec![1.4, 0.0]
    }

    fn map(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        let (r, th, z) = (u[0], u[1], u[2]);
        let (sn, cs) = (self.omega() * th).sin_cos();
        out[0] = s[0] + (r - s[0]) / 4.0 + cs / 2.0;
        out[1] = 2.0 * th + self.period * s[1] / 4.0 * sn;
        out[2] = z / 4.0 + sn / 2.0;
    }

    fn jacobian(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        let w = self.omega();
        let (sn, cs) = (w * u[1]).sin_cos();
        out.fill(0.0);
        // column r
        out[0] = 0.25;
        // column θ
        out[3] = -0.5 * w * sn;
        out[4] = 2.0 + std::f64::consts::FRAC_PI_2 * s[1] * cs;
        out[5] = 0.5 * w * cs;
        // column z
        out[8] = 0.25;
    }

    fn param_jacobian(&self, u: &[f64], _s: &[f64], out: &mut [f64]) {
        let sn = (self.omega() * u[1]).sin();
        out.fill(0.0);
        out[0] = 0.75;
        out[4] = self.period / 4.0 * sn;
    }

    fn jacobian_det(&self, u: &[f64], s: &[f64]) -> f64 {
        let cs = (self.omega() * u[1]).cos();
        (2.0 + std::f64::consts::FRAC_PI_2 * s[1] * cs) / 16.0
    }

    fn det_gradient(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        let w = self.omega();
        let sn = (w * u[1]).sin();
        out.fill(0.0);
        out[1] = -std::f64::consts::FRAC_PI_2 * s[1] * w * sn / 16.0;
    }

    fn sample_state(&self, s: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = s[0] + rng.random_range(-0.5..0.5);
        out[1] = rng.random_range(0.0..self.period);
        out[2] = rng.random_range(-0.5..0.5);
    }
}
