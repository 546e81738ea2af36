use rand::{Rng, RngCore};

use super::MapModel;

/// `u' = u/2 + s`: a globally attracting fixed point at `u* = 2s`, so
/// `d⟨u⟩/ds = 2` and the unstable subspace is empty.
#[derive(Debug, Clone, Default)]
pub struct Contracting;

impl MapModel for Contracting {
    fn id(&self) -> &'static str {
        "contracting"
    }

    fn dim(&self) -> usize {
        1
    }

    fn n_params(&self) -> usize {
        1
    }

    fn periods(&self) -> &[Option<f64>] {
        &[None]
    }

    fn default_params(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn map(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        out[0] = 0.5 * u[0] + s[0];
    }

    fn jacobian(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
        out[0] = 0.5;
    }

    fn param_jacobian(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn jacobian_det(&self, _u: &[f64], _s: &[f64]) -> f64 {
        0.5
    }

    fn det_gradient(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn sample_state(&self, _s: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = rng.random_range(-1.0..1.0);
    }
}
