use std::f64::consts::TAU;

use rand::{Rng, RngCore};

use super::MapModel;

/// Area-preserving hyperbolic map of the unit torus: a shear
/// `y ↦ y + (s / 2π) sin(2πx)` followed by the cat map `[[2, 1], [1, 1]]`.
///
/// Both factors have unit determinant, so `det Dφ ≡ 1` and its gradient is
/// identically zero.
#[derive(Debug, Clone)]
pub struct AreaPreserving {
    periods: [Option<f64>; 2],
}

impl Default for AreaPreserving {
    fn default() -> Self {
        AreaPreserving {
            periods: [Some(1.0), Some(1.0)],
        }
    }
}

impl MapModel for AreaPreserving {
    fn id(&self) -> &'static str {
        "area_preserving"
    }

    fn dim(&self) -> usize {
        2
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
        let y1 = u[1] + s[0] / TAU * (TAU * u[0]).sin();
        out[0] = 2.0 * u[0] + y1;
        out[1] = u[0] + y1;
    }

    fn jacobian(&self, u: &[f64], s: &[f64], out: &mut [f64]) {
        let c = s[0] * (TAU * u[0]).cos();
        out[0] = 2.0 + c;
        out[1] = 1.0 + c;
        out[2] = 1.0;
        out[3] = 1.0;
    }

    fn param_jacobian(&self, u: &[f64], _s: &[f64], out: &mut [f64]) {
        let g = (TAU * u[0]).sin() / TAU;
        out[0] = g;
        out[1] = g;
    }

    fn jacobian_det(&self, _u: &[f64], _s: &[f64]) -> f64 {
        1.0
    }

    fn det_gradient(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn sample_state(&self, _s: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = rng.random_range(0.0..1.0);
        out[1] = rng.random_range(0.0..1.0);
    }
}
