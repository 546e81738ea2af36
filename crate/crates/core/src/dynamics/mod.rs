//! Parameterized maps, stored orbits and objective functions.

mod circle;
mod contracting;
pub mod objectives;
mod solenoid;
mod torus;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

pub use circle::CircleDoubling;
pub use contracting::Contracting;
pub use solenoid::Solenoid;
pub use torus::AreaPreserving;

/// A discrete-time map `u ↦ φˢ(u)` with analytic derivatives.
///
/// Matrices are column-major. `map` returns the raw image; wrapping periodic
/// coordinates is done by [`wrap`], since tangent quantities must never be
/// wrapped.
pub trait MapModel: Send + Sync {
    fn id(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn n_params(&self) -> usize;

    /// Period of each coordinate, `None` where the coordinate is not an angle.
    fn periods(&self) -> &[Option<f64>];

    fn default_params(&self) -> Vec<f64>;

    fn map(&self, u: &[f64], s: &[f64], out: &mut [f64]);

    /// `Dφ(u)`, `n × n`.
    fn jacobian(&self, u: &[f64], s: &[f64], out: &mut [f64]);

    /// `∂φ/∂s(u)`, `n × p`; column `k` is the derivative with respect to `s_k`.
    fn param_jacobian(&self, u: &[f64], s: &[f64], out: &mut [f64]);

    fn jacobian_det(&self, u: &[f64], s: &[f64]) -> f64 {
        let n = self.dim();
        let mut jac = vec![0.0; n * n];
        self.jacobian(u, s, &mut jac);
        linalg::det(&jac, n)
    }

    /// Gradient of `det Dφ` with respect to the state.
    fn det_gradient(&self, u: &[f64], s: &[f64], out: &mut [f64]);

    /// Draws an initial condition in the basin of the attractor.
    fn sample_state(&self, s: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);
}

/// Looks up a built-in model by its string id.
pub fn model_by_id(id: &str) -> Option<Box<dyn MapModel>> {
    match id {
        "solenoid" => Some(Box::new(Solenoid::default())),
        "circle_doubling" => Some(Box::new(CircleDoubling::default())),
        "area_preserving" => Some(Box::new(AreaPreserving::default())),
        "contracting" => Some(Box::new(Contracting)),
        _ => None,
    }
}

pub const MODEL_IDS: [&str; 4] = ["solenoid", "circle_doubling", "area_preserving", "contracting"];

/// Wraps periodic coordinates into `[0, period)`.
pub fn wrap(model: &dyn MapModel, u: &mut [f64]) {
    for (x, p) in u.iter_mut().zip(model.periods()) {
        if let Some(p) = p {
            *x = x.rem_euclid(*p);
            // rem_euclid can round up to exactly `p` for tiny negative inputs
            if *x >= *p {
                *x -= *p;
            }
        }
    }
}

/// `a ⊖ b`: componentwise difference with periodic coordinates reduced to the
/// minimal image in `[-p/2, p/2)`.
pub fn difference(model: &dyn MapModel, a: &[f64], b: &[f64], out: &mut [f64]) {
    for (k, p) in model.periods().iter().enumerate() {
        let d = a[k] - b[k];
        out[k] = match p {
            Some(p) => d - p * (d / p).round(),
            None => d,
        };
    }
}

pub(crate) fn check_dims(model: &dyn MapModel, state: &[f64], params: &[f64]) -> Result<()> {
    if state.len() != model.dim() {
        return Err(Error::dims("state", model.dim(), state.len()));
    }
    if params.len() != model.n_params() {
        return Err(Error::dims("parameters", model.n_params(), params.len()));
    }
    Ok(())
}

/// `φˢ(u)` with periodic coordinates wrapped into their fundamental domain.
pub fn advance(model: &dyn MapModel, state: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    check_dims(model, state, params)?;
    let mut out = vec![0.0; model.dim()];
    model.map(state, params, &mut out);
    wrap(model, &mut out);
    Ok(out)
}

/// A stored orbit `u₋₁, u₀, …, u_K` with the per-step derivatives the
/// sensitivity pipeline consumes.
///
/// The extra state `u₋₁` makes the perturbation field `X(u₀) = ∂φ/∂s(u₋₁)`
/// available without inverting the map.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    n_params: usize,
    params: Vec<f64>,
    states: Vec<f64>,
    jacobians: Vec<f64>,
    param_jacobians: Vec<f64>,
    dets: Vec<f64>,
    det_grads: Vec<f64>,
}

impl Trajectory {
    /// Number of steps `K`; valid indices are `0..=K`.
    pub fn steps(&self) -> usize {
        self.dets.len() - 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    #[inline]
    fn slot(i: usize) -> usize {
        i + 1
    }

    /// `u_i` for `i` in `0..=K`.
    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.dim;
        let k = Self::slot(i);
        &self.states[k * n..(k + 1) * n]
    }

    /// `u₋₁`.
    pub fn pre_state(&self) -> &[f64] {
        &self.states[..self.dim]
    }

    #[inline]
    pub fn jacobian(&self, i: usize) -> &[f64] {
        let nn = self.dim * self.dim;
        let k = Self::slot(i);
        &self.jacobians[k * nn..(k + 1) * nn]
    }

    #[inline]
    pub fn param_jacobian(&self, i: usize) -> &[f64] {
        let np = self.dim * self.n_params;
        let k = Self::slot(i);
        &self.param_jacobians[k * np..(k + 1) * np]
    }

    #[inline]
    pub fn det(&self, i: usize) -> f64 {
        self.dets[Self::slot(i)]
    }

    #[inline]
    pub fn det_gradient(&self, i: usize) -> &[f64] {
        let n = self.dim;
        let k = Self::slot(i);
        &self.det_grads[k * n..(k + 1) * n]
    }

    /// `X_i = ∂φ/∂s_param(u_{i−1})`.
    #[inline]
    pub fn perturbation(&self, i: usize, param: usize) -> &[f64] {
        let n = self.dim;
        let np = n * self.n_params;
        // slot of u_{i-1} is i
        &self.param_jacobians[i * np + param * n..i * np + (param + 1) * n]
    }
}

/// Discards `burn_in` steps from `u0`, then records `u₋₁ … u_K`.
pub fn evolve(
    model: &dyn MapModel,
    u0: &[f64],
    params: &[f64],
    burn_in: usize,
    steps: usize,
) -> Result<Trajectory> {
    check_dims(model, u0, params)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one step".into()));
    }
    let n = model.dim();
    let p = model.n_params();
    let mut u = u0.to_vec();
    wrap(model, &mut u);
    let mut next = vec![0.0; n];
    for step in 0..burn_in {
        model.map(&u, params, &mut next);
        wrap(model, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: step + 1 });
        }
        std::mem::swap(&mut u, &mut next);
    }

    let len = steps + 2;
    let mut traj = Trajectory {
        dim: n,
        n_params: p,
        params: params.to_vec(),
        states: Vec::with_capacity(len * n),
        jacobians: vec![0.0; len * n * n],
        param_jacobians: vec![0.0; len * n * p],
        dets: vec![0.0; len],
        det_grads: vec![0.0; len * n],
    };
    for k in 0..len {
        if k > 0 {
            model.map(&u, params, &mut next);
            wrap(model, &mut next);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence { step: burn_in + k });
            }
            std::mem::swap(&mut u, &mut next);
        }
        traj.states.extend_from_slice(&u);
        model.jacobian(&u, params, &mut traj.jacobians[k * n * n..(k + 1) * n * n]);
        model.param_jacobian(&u, params, &mut traj.param_jacobians[k * n * p..(k + 1) * n * p]);
        traj.dets[k] = model.jacobian_det(&u, params);
        model.det_gradient(&u, params, &mut traj.det_grads[k * n..(k + 1) * n]);
    }
    Ok(traj)
}

/// Draws an initial condition from `seed` and evolves it.
pub fn evolve_from_seed(
    model: &dyn MapModel,
    params: &[f64],
    seed: u64,
    burn_in: usize,
    steps: usize,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u0 = vec![0.0; model.dim()];
    model.sample_state(params, &mut rng, &mut u0);
    evolve(model, &u0, params, burn_in, steps)
}

/// Maximum relative errors of the analytic derivatives against central finite
/// differences of the map. Errors are scaled by `max(|reference|, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub samples: usize,
    pub jacobian: f64,
    pub determinant: f64,
    pub det_gradient: f64,
    pub param_jacobian: f64,
    /// Largest `|∂ det/∂u_k|` seen; exactly zero for volume-preserving maps.
    pub det_gradient_max_abs: f64,
    pub tolerance: f64,
}

impl ConsistencyReport {
    pub const DEFAULT_TOLERANCE: f64 = 1e-6;

    pub fn passed(&self) -> bool {
        self.jacobian < self.tolerance
            && self.determinant < self.tolerance
            && self.det_gradient < self.tolerance
            && self.param_jacobian < self.tolerance
    }

    pub fn rows(&self) -> [(&'static str, f64); 4] {
        [
            ("jacobian", self.jacobian),
            ("determinant", self.determinant),
            ("det_gradient", self.det_gradient),
            ("param_jacobian", self.param_jacobian),
        ]
    }
}

/// Cross-checks the analytic Jacobian, determinant, determinant gradient and
/// parameter derivative of `model` at `n_samples` random states.
pub fn check_model(model: &dyn MapModel, params: &[f64], n_samples: usize, seed: u64) -> Result<ConsistencyReport> {
    let n = model.dim();
    let p = model.n_params();
    check_dims(model, &vec![0.0; n], params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);

    let mut report = ConsistencyReport {
        samples: n_samples,
        jacobian: 0.0,
        determinant: 0.0,
        det_gradient: 0.0,
        param_jacobian: 0.0,
        det_gradient_max_abs: 0.0,
        tolerance: ConsistencyReport::DEFAULT_TOLERANCE,
    };
    let mut u = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    let mut pjac = vec![0.0; n * p];
    let mut grad = vec![0.0; n];
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..n_samples {
        model.sample_state(params, &mut rng, &mut u);
        model.jacobian(&u, params, &mut jac);
        model.param_jacobian(&u, params, &mut pjac);
        model.det_gradient(&u, params, &mut grad);
        let det = model.jacobian_det(&u, params);
        report.determinant = report.determinant.max(rel(det, linalg::det(&jac, n)));
        for g in &grad {
            report.det_gradient_max_abs = report.det_gradient_max_abs.max(g.abs());
        }

        for col in 0..n {
            let h = 1e-6 * u[col].abs().max(1.0);
            let mut up = u.clone();
            let mut um = u.clone();
            up[col] += h;
            um[col] -= h;
            model.map(&up, params, &mut fp);
            model.map(&um, params, &mut fm);
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                report.jacobian = report.jacobian.max(rel(jac[row + col * n], fd));
            }
            let dfd = (model.jacobian_det(&up, params) - model.jacobian_det(&um, params)) / (2.0 * h);
            report.det_gradient = report.det_gradient.max(rel(grad[col], dfd));
        }
        for k in 0..p {
            let h = 1e-6 * params[k].abs().max(1.0);
            let mut sp = params.to_vec();
            let mut sm = params.to_vec();
            sp[k] += h;
            sm[k] -= h;
            model.map(&u, &sp, &mut fp);
            model.map(&u, &sm, &mut fm);
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                report.param_jacobian = report.param_jacobian.max(rel(pjac[row + k * n], fd));
            }
        }
    }
    Ok(report)
}
