//! Oblique splitting of the parameter perturbation `X = Xᵘ + Xˢ` and the
//! auxiliary fields the unstable contribution needs.
//!
//! `Xᵘ` lies in the span of the tangent unstable frame `Q` and `Xˢ` is
//! orthogonal to the adjoint unstable frame `P`. This is a direct sum, not an
//! orthogonal decomposition. `div Xᵘ` is estimated by central differences of
//! the whole splitting pipeline around each trajectory point, and `Y` is the
//! unstable projection of the pushed-forward log-determinant gradient.

use rayon::prelude::*;

use crate::dynamics::{difference, MapModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::subspaces::SubspaceFrames;

/// Smallest `|det(PᵀQ)|` accepted before the frames count as tangent.
pub const TANGENCY_TOL: f64 = 1e-10;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_RECONVERGE_STEPS: usize = 20;

/// Result of splitting one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub unstable: Vec<f64>,
    pub stable: Vec<f64>,
    /// Coefficients of `Xᵘ` in the columns of `Q`.
    pub coefficients: Vec<f64>,
}

/// Solves `(x − Q a)·p_j = 0` for all columns `p_j` of `P`, i.e.
/// `(PᵀQ) a = Pᵀx`, and returns `Xᵘ = Q a`, `Xˢ = x − Xᵘ`.
///
/// On tangency the error carries step 0; callers working along a trajectory
/// replace it with their own index.
pub fn split(x: &[f64], q: &[f64], p: &[f64], n: usize, m: usize) -> Result<Split> {
    let mut unstable = vec![0.0; n];
    let mut coefficients = vec![0.0; m];
    split_into(x, q, p, n, m, &mut unstable, &mut coefficients).map_err(|det| Error::Tangency { step: 0, det })?;
    let stable = x.iter().zip(&unstable).map(|(a, b)| a - b).collect();
    Ok(Split {
        unstable,
        stable,
        coefficients,
    })
}

/// Allocation-light core of [`split`]; returns `det(PᵀQ)` on tangency.
pub(crate) fn split_into(
    x: &[f64],
    q: &[f64],
    p: &[f64],
    n: usize,
    m: usize,
    unstable: &mut [f64],
    coefficients: &mut [f64],
) -> std::result::Result<(), f64> {
    unstable[..n].fill(0.0);
    if m == 0 {
        return Ok(());
    }
    if m == 1 {
        let g = linalg::dot(p, q);
        if g.abs() < TANGENCY_TOL {
            return Err(g);
        }
        coefficients[0] = linalg::dot(p, x) / g;
    } else {
        // H = PᵀQ, b = Pᵀx
        let mut h = vec![0.0; m * m];
        for c in 0..m {
            for r in 0..m {
                h[r + c * m] = linalg::dot(&p[r * n..(r + 1) * n], &q[c * n..(c + 1) * n]);
            }
        }
        let det = linalg::det(&h, m);
        if det.abs() < TANGENCY_TOL {
            return Err(det);
        }
        let b: Vec<f64> = (0..m).map(|r| linalg::dot(&p[r * n..(r + 1) * n], x)).collect();
        let a = linalg::solve(&h, m, &b).ok_or(det)?;
        coefficients[..m].copy_from_slice(&a);
    }
    linalg::mat_vec(q, n, &coefficients[..m], unstable);
    Ok(())
}

/// `Y = Q Qᵀ [Dφ(u_i)⁻ᵀ ∇det Dφ(u_i) / det Dφ(u_i)]`.
///
/// The covector `∇ ln det` at `u_i` is carried to `u_{i+1}` by `Dφ⁻ᵀ`, so the
/// driver passes the frame at `i + 1` as `q`.
pub fn compute_y(traj: &Trajectory, i: usize, q: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = traj.dim();
    let mut y = vec![0.0; n];
    compute_y_into(traj, i, q, m, &mut y)?;
    Ok(y)
}

fn compute_y_into(traj: &Trajectory, i: usize, q: &[f64], m: usize, out: &mut [f64]) -> Result<()> {
    let n = traj.dim();
    out.fill(0.0);
    if m == 0 {
        return Ok(());
    }
    let grad = traj.det_gradient(i);
    if grad.iter().all(|&g| g == 0.0) {
        return Ok(());
    }
    let det = traj.det(i);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularJacobian { step: i });
    }
    let w = linalg::solve_transpose(traj.jacobian(i), n, grad).ok_or(Error::SingularJacobian { step: i })?;
    let w: Vec<f64> = w.iter().map(|x| x / det).collect();
    if m == n {
        out.copy_from_slice(&w);
    } else {
        linalg::project(q, n, m, &w, out);
    }
    Ok(())
}

/// Settings for [`SplitField::compute`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Relative central-difference step for `div Xᵘ`.
    pub fd_step: f64,
    /// Steps of forward/backward QR used to re-converge frames at perturbed
    /// points.
    pub reconverge_steps: usize,
    /// Skip `div Xᵘ` (it dominates the cost) when only the stable part is
    /// wanted.
    pub divergence: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            fd_step: DEFAULT_FD_STEP,
            reconverge_steps: DEFAULT_RECONVERGE_STEPS,
            divergence: true,
        }
    }
}

/// The unstable/stable geometry around a stored trajectory.
pub struct Geometry<'a> {
    pub model: &'a dyn MapModel,
    pub traj: &'a Trajectory,
    pub q: &'a SubspaceFrames,
    pub p: &'a SubspaceFrames,
    pub param: usize,
}

impl Geometry<'_> {
    fn dim(&self) -> usize {
        self.traj.dim()
    }

    fn rank(&self) -> usize {
        self.q.rank()
    }

    /// Steps needed on each side of `i` to evaluate `div Xᵘ` at `i`.
    pub fn stencil_reach(&self, opts: &SplitOptions) -> usize {
        let (n, m) = (self.dim(), self.rank());
        if m == 0 || m == n {
            1
        } else {
            opts.reconverge_steps.max(1)
        }
    }

    /// Preimage of `target` near `u_{j}`, where `φ(u_j) = u_{j+1}` and
    /// `target` is close to `u_{j+1}`. `j = None` stands for `u₋₁`.
    fn preimage(&self, j: Option<usize>, target: &[f64], step: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        let s = self.traj.params();
        let (base, jac, image) = match j {
            Some(j) => (self.traj.state(j), self.traj.jacobian(j), self.traj.state(j + 1)),
            None => (self.traj.pre_state(), &self.traj_pre_jacobian()[..], self.traj.state(0)),
        };
        let mut r = vec![0.0; n];
        difference(self.model, target, image, &mut r);
        let dx = linalg::solve(jac, n, &r).ok_or(Error::SingularJacobian { step })?;
        let mut w: Vec<f64> = base.iter().zip(&dx).map(|(b, d)| b + d).collect();
        let mut img = vec![0.0; n];
        let mut jw = vec![0.0; n * n];
        let scale = target.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for _ in 0..12 {
            self.model.map(&w, s, &mut img);
            difference(self.model, &img, target, &mut r);
            if !r.iter().all(|x| x.is_finite()) {
                return Err(Error::Domain { step });
            }
            if linalg::norm(&r) <= 4.0 * f64::EPSILON * scale {
                return Ok(w);
            }
            self.model.jacobian(&w, s, &mut jw);
            let dx = linalg::solve(&jw, n, &r).ok_or(Error::SingularJacobian { step })?;
            for (x, d) in w.iter_mut().zip(&dx) {
                *x -= d;
            }
        }
        // Newton stalls at round-off; accept if the residual is tiny
        self.model.map(&w, s, &mut img);
        difference(self.model, &img, target, &mut r);
        if linalg::norm(&r) <= 1e-12 * scale {
            Ok(w)
        } else {
            Err(Error::Domain { step })
        }
    }

    fn traj_pre_jacobian(&self) -> Vec<f64> {
        let n = self.dim();
        let mut jac = vec![0.0; n * n];
        self.model.jacobian(self.traj.pre_state(), self.traj.params(), &mut jac);
        jac
    }

    /// `Xᵘ` at a point `w` near `u_i`, with the frames re-converged along the
    /// perturbed orbit through `w`.
    pub fn unstable_at(&self, i: usize, w: &[f64], opts: &SplitOptions) -> Result<Vec<f64>> {
        let (n, m) = (self.dim(), self.rank());
        let s = self.traj.params();
        if m == 0 {
            return Ok(vec![0.0; n]);
        }
        let prev = i.checked_sub(1);
        let pre = self.preimage(prev, w, i)?;
        let mut pj = vec![0.0; n * self.traj.n_params()];
        self.model.param_jacobian(&pre, s, &mut pj);
        let x = &pj[self.param * n..(self.param + 1) * n];
        if m == n {
            return Ok(x.to_vec());
        }

        let reach = opts.reconverge_steps.max(1);
        if i < reach || !self.q.covers(i - reach) || !self.p.covers(i + reach) {
            return Err(Error::InsufficientData(format!(
                "step {i} is within {reach} steps of the retained frame range"
            )));
        }
        // backward chain w_{-1} … w_{-reach}
        let mut chain = Vec::with_capacity(reach);
        chain.push(pre);
        for k in 2..=reach {
            let next = self.preimage(Some(i - k), &chain[k - 2], i)?;
            chain.push(next);
        }
        let mut jac = vec![0.0; n * n];
        let mut q = self.q.at(i - reach).to_vec();
        let mut tmp = vec![0.0; n * m];
        let mut rdiag = vec![0.0; m];
        for point in chain.iter().rev() {
            self.model.jacobian(point, s, &mut jac);
            linalg::mat_mat(&jac, n, &q, m, &mut tmp);
            linalg::orthonormalize(&mut tmp, n, m, &mut rdiag).map_err(|j| Error::DegenerateBasis {
                step: i,
                value: rdiag[j],
            })?;
            std::mem::swap(&mut q, &mut tmp);
        }

        // forward chain w_0 … w_{reach-1}
        let mut forward = Vec::with_capacity(reach);
        forward.push(w.to_vec());
        let mut img = vec![0.0; n];
        for k in 1..reach {
            self.model.map(&forward[k - 1], s, &mut img);
            if !img.iter().all(|x| x.is_finite()) {
                return Err(Error::Domain { step: i });
            }
            forward.push(img.clone());
        }
        let mut p = self.p.at(i + reach).to_vec();
        for point in forward.iter().rev() {
            self.model.jacobian(point, s, &mut jac);
            linalg::mat_t_mat(&jac, n, &p, m, &mut tmp);
            linalg::orthonormalize(&mut tmp, n, m, &mut rdiag).map_err(|j| Error::DegenerateBasis {
                step: i,
                value: rdiag[j],
            })?;
            std::mem::swap(&mut p, &mut tmp);
        }

        let mut xu = vec![0.0; n];
        let mut a = vec![0.0; m];
        split_into(x, &q, &p, n, m, &mut xu, &mut a).map_err(|det| Error::Tangency { step: i, det })?;
        Ok(xu)
    }

    /// `div Xᵘ` at `u_i` by central differences with step
    /// `h · max(1, |u_ℓ|)` along each coordinate.
    pub fn unstable_divergence(&self, i: usize, opts: &SplitOptions) -> Result<f64> {
        let n = self.dim();
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let u = self.traj.state(i);
        let mut div = 0.0;
        for l in 0..n {
            let h = opts.fd_step * u[l].abs().max(1.0);
            let mut w = u.to_vec();
            w[l] = u[l] + h;
            let plus = self.unstable_at(i, &w, opts)?[l];
            w[l] = u[l] - h;
            let minus = self.unstable_at(i, &w, opts)?[l];
            div += (plus - minus) / (2.0 * h);
        }
        Ok(div)
    }
}

/// Per-step split of the perturbation over an index range `start..=end`.
#[derive(Debug, Clone)]
pub struct SplitField {
    dim: usize,
    rank: usize,
    start: usize,
    x: Vec<f64>,
    unstable: Vec<f64>,
    stable: Vec<f64>,
    coefficients: Vec<f64>,
    divergence: Vec<f64>,
    y: Vec<f64>,
}

const CHUNK: usize = 2048;

impl SplitField {
    /// Splits `X_i` for every `i` in `start..=end`, with `Y_i` and (if
    /// requested) `div Xᵘ_i`.
    pub fn compute(geometry: &Geometry<'_>, start: usize, end: usize, opts: &SplitOptions) -> Result<SplitField> {
        let traj = geometry.traj;
        let (n, m) = (traj.dim(), geometry.rank());
        if geometry.param >= traj.n_params() {
            return Err(Error::InvalidArgument(format!(
                "parameter index {} out of range for {} parameters",
                geometry.param,
                traj.n_params()
            )));
        }
        if end < start || end >= traj.steps() {
            return Err(Error::InvalidArgument(format!("split range {start}..={end} invalid")));
        }
        let frames_ok = m == 0 || (geometry.q.covers(start) && geometry.p.covers(end) && geometry.q.covers(end + 1));
        if !frames_ok {
            return Err(Error::InsufficientData(format!(
                "frames do not cover split range {start}..={end}"
            )));
        }

        let chunks: Vec<(usize, usize)> = (start..=end)
            .step_by(CHUNK)
            .map(|a| (a, (a + CHUNK - 1).min(end)))
            .collect();
        let parts: Vec<SplitField> = chunks
            .into_par_iter()
            .map(|(a, b)| Self::compute_chunk(geometry, a, b, opts))
            .collect::<Result<_>>()?;

        let len = end - start + 1;
        let mut field = SplitField {
            dim: n,
            rank: m,
            start,
            x: Vec::with_capacity(len * n),
            unstable: Vec::with_capacity(len * n),
            stable: Vec::with_capacity(len * n),
            coefficients: Vec::with_capacity(len * m),
            divergence: Vec::with_capacity(len),
            y: Vec::with_capacity(len * n),
        };
        for part in parts {
            field.x.extend(part.x);
            field.unstable.extend(part.unstable);
            field.stable.extend(part.stable);
            field.coefficients.extend(part.coefficients);
            field.divergence.extend(part.divergence);
            field.y.extend(part.y);
        }
        Ok(field)
    }

    fn compute_chunk(geometry: &Geometry<'_>, a: usize, b: usize, opts: &SplitOptions) -> Result<SplitField> {
        let traj = geometry.traj;
        let (n, m) = (traj.dim(), geometry.rank());
        let len = b - a + 1;
        let mut f = SplitField {
            dim: n,
            rank: m,
            start: a,
            x: Vec::with_capacity(len * n),
            unstable: vec![0.0; len * n],
            stable: Vec::with_capacity(len * n),
            coefficients: vec![0.0; len * m],
            divergence: vec![0.0; len],
            y: vec![0.0; len * n],
        };
        for (k, i) in (a..=b).enumerate() {
            let x = traj.perturbation(i, geometry.param);
            f.x.extend_from_slice(x);
            let xu = &mut f.unstable[k * n..(k + 1) * n];
            if m == n {
                xu.copy_from_slice(x);
                f.coefficients[k * m..(k + 1) * m].copy_from_slice(&linalg_coeffs(geometry.q.at(i), x, n));
            } else if m > 0 {
                split_into(
                    x,
                    geometry.q.at(i),
                    geometry.p.at(i),
                    n,
                    m,
                    xu,
                    &mut f.coefficients[k * m..(k + 1) * m],
                )
                .map_err(|det| Error::Tangency { step: i, det })?;
            }
            for l in 0..n {
                f.stable.push(x[l] - f.unstable[k * n + l]);
            }
            let q_next = if m == 0 { &[][..] } else { geometry.q.at(i + 1) };
            compute_y_into(traj, i, q_next, m, &mut f.y[k * n..(k + 1) * n])?;
            if opts.divergence {
                f.divergence[k] = geometry.unstable_divergence(i, opts)?;
            }
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.divergence.len() - 1
    }

    #[inline]
    fn block(&self, v: &[f64], i: usize) -> std::ops::Range<usize> {
        let _ = v;
        let k = i - self.start;
        k * self.dim..(k + 1) * self.dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[self.block(&self.x, i)]
    }

    pub fn unstable(&self, i: usize) -> &[f64] {
        &self.unstable[self.block(&self.unstable, i)]
    }

    pub fn stable(&self, i: usize) -> &[f64] {
        &self.stable[self.block(&self.stable, i)]
    }

    pub fn coefficients(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.coefficients[k * self.rank..(k + 1) * self.rank]
    }

    pub fn divergence(&self, i: usize) -> f64 {
        self.divergence[i - self.start]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[self.block(&self.y, i)]
    }
}

/// Coefficients of `x` in an orthonormal basis of the whole space.
fn linalg_coeffs(q: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    linalg::mat_t_vec(q, n, x, &mut a);
    a
}
