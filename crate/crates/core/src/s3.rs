//! Space-split sensitivity estimator.
//!
//! `d⟨J⟩/ds` is the sum of a stable part, a time average of `DJ·v` along a
//! tangent solution driven only by `Xˢ`, and an unstable part, a truncated
//! sum of lagged correlations between `J` and `g = ψ·Xᵘ + div Xᵘ`. The
//! covector `ψ` follows a projected adjoint recursion driven by the log of the
//! Jacobian determinant.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::objectives::ObjectiveSet;
use crate::dynamics::{evolve_from_seed, MapModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::splitting::{split_into, Geometry, SplitField, SplitOptions, DEFAULT_FD_STEP, DEFAULT_RECONVERGE_STEPS};
use crate::subspaces::{
    backward_adjoint_frames, classify, forward_unstable_frames, LyapunovSpectrum, DEFAULT_EXPONENT_TOL,
    DEFAULT_WARM_UP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S3Config {
    /// Trajectory length `K`.
    pub steps: usize,
    /// Steps discarded before the stable and unstable sums start.
    pub psi_warm_up: usize,
    /// Largest correlation lag `L`.
    pub lags: usize,
    /// Relative step for the `div Xᵘ` central differences.
    pub fd_step: f64,
    /// QR warm-up at each end of the trajectory.
    pub frame_warm_up: usize,
    pub reconverge_steps: usize,
    /// Map iterations discarded before recording the trajectory.
    pub burn_in: usize,
    pub seed: u64,
    pub param_index: usize,
    /// Number of unstable directions; detected from the spectrum when unset.
    pub unstable_dim: Option<usize>,
    pub exponent_tol: f64,
    /// Independent trajectories averaged together.
    pub replicates: usize,
}

impl Default for S3Config {
    fn default() -> Self {
        S3Config {
            steps: 1_000_000,
            psi_warm_up: 500,
            lags: 50,
            fd_step: DEFAULT_FD_STEP,
            frame_warm_up: DEFAULT_WARM_UP,
            reconverge_steps: DEFAULT_RECONVERGE_STEPS,
            burn_in: 1_000,
            seed: 0,
            param_index: 0,
            unstable_dim: None,
            exponent_tol: DEFAULT_EXPONENT_TOL,
            replicates: 1,
        }
    }
}

impl S3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::InvalidArgument(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if !(self.exponent_tol > 0.0 && self.exponent_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "exponent_tol must be positive, got {}",
                self.exponent_tol
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.reconverge_steps == 0 {
            return Err(Error::InvalidArgument("reconverge_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// First and last step at which the split and its divergence exist.
    fn split_range(&self) -> Result<(usize, usize)> {
        let margin = self.frame_warm_up + self.reconverge_steps;
        let start = margin;
        let end = self.steps.checked_sub(margin + 1);
        match end {
            Some(end) if end >= start + self.psi_warm_up + 2 * (self.lags + 1) => Ok((start, end)),
            _ => Err(Error::InsufficientData(format!(
                "{} steps leave too few samples after warm-ups ({} frame, {} reconvergence, {} adjoint) and {} lags",
                self.steps, self.frame_warm_up, self.reconverge_steps, self.psi_warm_up, self.lags
            ))),
        }
    }
}

/// Estimate for one objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub objective_id: String,
    pub stable: f64,
    pub unstable: f64,
    pub total: f64,
    /// Last correlation term over its standard error. Large values mean `L`
    /// truncates a correlation that has not decayed.
    pub tail_z: f64,
    /// Spread across replicates; `None` for a single trajectory.
    pub replicate_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S3Report {
    pub results: Vec<SensitivityResult>,
    pub unstable_dim: usize,
    /// Full spectrum of the first replicate.
    pub spectrum: LyapunovSpectrum,
    /// Largest `‖v_i‖` of the stable tangent solution over all replicates.
    pub max_tangent_norm: f64,
    pub config: S3Config,
}

/// `v_{i+1} = Dφ(u_i) v_i + Xˢ_{i+1}`.
pub fn stable_tangent_step(jac: &[f64], n: usize, v: &[f64], stable_next: &[f64], out: &mut [f64]) {
    linalg::mat_vec(jac, n, v, out);
    for (o, x) in out.iter_mut().zip(stable_next) {
        *o += x;
    }
}

/// Subtracts the oblique unstable component of `v`, leaving `v ⟂ P`.
pub fn remove_unstable(
    v: &mut [f64],
    q: &[f64],
    p: &[f64],
    n: usize,
    m: usize,
    scratch: &mut [f64],
    coeffs: &mut [f64],
) -> std::result::Result<(), f64> {
    split_into(v, q, p, n, m, scratch, coeffs)?;
    for (x, u) in v.iter_mut().zip(scratch.iter()) {
        *x -= u;
    }
    Ok(())
}

/// `ψ_{i+1} = Q_{i+1}Q_{i+1}ᵀ Dφ(u_i)⁻ᵀ ψ_i − Y_i`, where `Y_i` is already
/// projected.
pub fn koopman_step(
    traj: &Trajectory,
    i: usize,
    q_next: &[f64],
    m: usize,
    psi: &[f64],
    y: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let n = traj.dim();
    if m == 0 {
        out.fill(0.0);
        return Ok(());
    }
    let w = linalg::solve_transpose(traj.jacobian(i), n, psi).ok_or(Error::SingularJacobian { step: i })?;
    if m == n {
        out.copy_from_slice(&w);
    } else {
        linalg::project(q_next, n, m, &w, out);
    }
    for (o, y) in out.iter_mut().zip(y) {
        *o -= y;
    }
    Ok(())
}

/// `Ĉ(l) = (1/N_l) Σ_i (J_{i+l} − J̄)(g_i − ḡ)` for `l = 0..=lags`, with the
/// standard error of the last term.
pub fn lagged_covariances(j: &[f64], g: &[f64], lags: usize) -> Result<(Vec<f64>, f64)> {
    let len = j.len();
    if g.len() != len {
        return Err(Error::dims("correlation series", len, g.len()));
    }
    if len < lags + 2 {
        return Err(Error::InsufficientData(format!(
            "{len} samples cannot resolve {lags} lags"
        )));
    }
    let jm = j.iter().sum::<f64>() / len as f64;
    let gm = g.iter().sum::<f64>() / len as f64;
    let jc: Vec<f64> = j.iter().map(|x| x - jm).collect();
    let gc: Vec<f64> = g.iter().map(|x| x - gm).collect();
    let mut cov = Vec::with_capacity(lags + 1);
    let mut tail_se = 0.0;
    for l in 0..=lags {
        let count = len - l;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..count {
            let p = jc[i + l] * gc[i];
            sum += p;
            sq += p * p;
        }
        let mean = sum / count as f64;
        cov.push(mean);
        if l == lags {
            let var = (sq / count as f64 - mean * mean).max(0.0);
            tail_se = (var / count as f64).sqrt();
        }
    }
    Ok((cov, tail_se))
}

/// Per-objective stable and unstable parts from one trajectory.
struct Single {
    stable: Vec<f64>,
    unstable: Vec<f64>,
    tail_z: Vec<f64>,
    max_tangent_norm: f64,
}

fn run_single(
    model: &dyn MapModel,
    traj: &Trajectory,
    objectives: &ObjectiveSet,
    m: usize,
    config: &S3Config,
    frame_seed: u64,
) -> Result<Single> {
    let n = traj.dim();
    let (start, end) = config.split_range()?;
    let (q, _) = forward_unstable_frames(traj, m, config.frame_warm_up, frame_seed)?;
    let p = backward_adjoint_frames(traj, m, config.frame_warm_up, frame_seed)?;
    let geometry = Geometry {
        model,
        traj,
        q: &q,
        p: &p,
        param: config.param_index,
    };
    let opts = SplitOptions {
        fd_step: config.fd_step,
        reconverge_steps: config.reconverge_steps,
        divergence: m > 0,
    };
    let field = SplitField::compute(&geometry, start, end, &opts)?;

    let first = start + config.psi_warm_up;
    let samples = end - first + 1;
    let n_obj = objectives.len();
    let mut stable_sum = vec![0.0; n_obj];
    let mut j_series = vec![Vec::with_capacity(samples); n_obj];
    let mut g_series = Vec::with_capacity(samples);

    let mut v = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let mut psi_next = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut coeffs = vec![0.0; m];
    let mut max_norm: f64 = 0.0;
    for i in start..=end {
        if i >= first {
            let (values, grads) = objectives.evaluate(traj.state(i));
            for k in 0..n_obj {
                stable_sum[k] += linalg::dot(&grads[k * n..(k + 1) * n], &v);
                j_series[k].push(values[k]);
            }
            g_series.push(linalg::dot(&psi, field.unstable(i)) + field.divergence(i));
            max_norm = max_norm.max(linalg::norm(&v));
        }
        if i == end {
            break;
        }
        stable_tangent_step(traj.jacobian(i), n, &v, field.stable(i + 1), &mut v_next);
        std::mem::swap(&mut v, &mut v_next);
        if m > 0 && m < n {
            // round-off along Eᵘ would otherwise grow at the leading exponent
            remove_unstable(&mut v, q.at(i + 1), p.at(i + 1), n, m, &mut scratch, &mut coeffs)
                .map_err(|det| Error::Tangency { step: i + 1, det })?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: i + 1 });
        }
        if m > 0 {
            koopman_step(traj, i, q.at(i + 1), m, &psi, field.y(i), &mut psi_next)?;
            std::mem::swap(&mut psi, &mut psi_next);
        }
    }

    let mut unstable = vec![0.0; n_obj];
    let mut tail_z = vec![0.0; n_obj];
    if m > 0 {
        for k in 0..n_obj {
            let (cov, se) = lagged_covariances(&j_series[k], &g_series, config.lags)?;
            unstable[k] = -cov.iter().sum::<f64>();
            let last = cov[config.lags];
            tail_z[k] = if se > 0.0 { last / se } else { 0.0 };
        }
    }
    Ok(Single {
        stable: stable_sum.iter().map(|s| s / samples as f64).collect(),
        unstable,
        tail_z,
        max_tangent_norm: max_norm,
    })
}

/// `‖v_i‖` along the stable tangent solution of the first replicate, for
/// every step of the split range. Skips the unstable part entirely.
pub fn stable_tangent_norms(model: &dyn MapModel, params: &[f64], config: &S3Config) -> Result<Vec<f64>> {
    config.validate()?;
    let (start, end) = config.split_range()?;
    let n = model.dim();
    let (traj_seed, frame_seed) = replicate_seeds(config.seed, 1)[0];
    let traj = evolve_from_seed(model, params, traj_seed, config.burn_in, config.steps)?;
    let m = match config.unstable_dim {
        Some(m) => m,
        None => {
            let (_, lyap) = forward_unstable_frames(&traj, n, config.frame_warm_up, frame_seed)?;
            classify(&lyap, n, config.exponent_tol)?
        }
    };
    let (q, _) = forward_unstable_frames(&traj, m, config.frame_warm_up, frame_seed)?;
    let p = backward_adjoint_frames(&traj, m, config.frame_warm_up, frame_seed)?;
    let geometry = Geometry {
        model,
        traj: &traj,
        q: &q,
        p: &p,
        param: config.param_index,
    };
    let opts = SplitOptions {
        divergence: false,
        ..Default::default()
    };
    let field = SplitField::compute(&geometry, start, end, &opts)?;
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut coeffs = vec![0.0; m];
    let mut norms = Vec::with_capacity(end - start + 1);
    for i in start..=end {
        norms.push(linalg::norm(&v));
        if i == end {
            break;
        }
        stable_tangent_step(traj.jacobian(i), n, &v, field.stable(i + 1), &mut next);
        std::mem::swap(&mut v, &mut next);
        if m > 0 && m < n {
            remove_unstable(&mut v, q.at(i + 1), p.at(i + 1), n, m, &mut scratch, &mut coeffs)
                .map_err(|det| Error::Tangency { step: i + 1, det })?;
        }
    }
    Ok(norms)
}

fn replicate_seeds(seed: u64, count: usize) -> Vec<(u64, u64)> {
    (0..count)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            (rng.next_u64(), rng.next_u64())
        })
        .collect()
}

/// Runs the estimator for every objective in `objectives` at parameters
/// `params`.
pub fn run_s3(
    model: &dyn MapModel,
    params: &[f64],
    objectives: &ObjectiveSet,
    config: &S3Config,
) -> Result<S3Report> {
    config.validate()?;
    objectives.validate(model.dim())?;
    if objectives.is_empty() {
        return Err(Error::InvalidArgument("no objectives given".into()));
    }
    if config.param_index >= model.n_params() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {} out of range for model {} with {} parameters",
            config.param_index,
            model.id(),
            model.n_params()
        )));
    }
    config.split_range()?;
    let n = model.dim();
    let n_obj = objectives.len();

    let mut stable = vec![Vec::new(); n_obj];
    let mut unstable = vec![Vec::new(); n_obj];
    let mut tail = vec![0.0f64; n_obj];
    let mut spectrum = None;
    let mut m_found = config.unstable_dim;
    let mut max_norm: f64 = 0.0;
    for (traj_seed, frame_seed) in replicate_seeds(config.seed, config.replicates) {
        let traj = evolve_from_seed(model, params, traj_seed, config.burn_in, config.steps)?;
        if spectrum.is_none() {
            let (_, lyap) = forward_unstable_frames(&traj, n, config.frame_warm_up, frame_seed)?;
            if m_found.is_none() {
                m_found = Some(classify(&lyap, n, config.exponent_tol)?);
            }
            spectrum = Some(lyap);
        }
        let m = m_found.unwrap_or(0);
        if m > n {
            return Err(Error::InvalidArgument(format!("unstable_dim {m} exceeds dimension {n}")));
        }
        let single = run_single(model, &traj, objectives, m, config, frame_seed)?;
        for k in 0..n_obj {
            stable[k].push(single.stable[k]);
            unstable[k].push(single.unstable[k]);
            // keep the worst tail diagnostic
            if single.tail_z[k].abs() > tail[k].abs() {
                tail[k] = single.tail_z[k];
            }
        }
        max_norm = max_norm.max(single.max_tangent_norm);
    }

    let reps = config.replicates as f64;
    let results = (0..n_obj)
        .map(|k| {
            let totals: Vec<f64> = stable[k].iter().zip(&unstable[k]).map(|(a, b)| a + b).collect();
            let s = stable[k].iter().sum::<f64>() / reps;
            let u = unstable[k].iter().sum::<f64>() / reps;
            let replicate_stderr = (config.replicates > 1).then(|| {
                let mean = totals.iter().sum::<f64>() / reps;
                let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1.0);
                (var / reps).sqrt()
            });
            SensitivityResult {
                objective_id: objectives.ids()[k].clone(),
                stable: s,
                unstable: u,
                total: s + u,
                tail_z: tail[k],
                replicate_stderr,
            }
        })
        .collect();
    Ok(S3Report {
        results,
        unstable_dim: m_found.unwrap_or(0),
        spectrum: spectrum.expect("at least one replicate"),
        max_tangent_norm: max_norm,
        config: config.clone(),
    })
}
