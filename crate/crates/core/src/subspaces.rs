//! Orthonormal frames of the tangent unstable subspace `Eᵘ` and the adjoint
//! unstable subspace `Eˢ⊥` along a stored trajectory.
//!
//! Both are obtained by repeated application of the (transposed) Jacobian to
//! a random orthonormal matrix with QR re-orthonormalization at each step. The
//! forward pass also yields the Lyapunov exponents as averaged logarithms of
//! the R diagonals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_WARM_UP: usize = 200;
pub const DEFAULT_EXPONENT_TOL: f64 = 0.05;

/// Per-step `n × m` orthonormal matrices over a contiguous index range.
#[derive(Debug, Clone)]
pub struct SubspaceFrames {
    dim: usize,
    m: usize,
    first: usize,
    count: usize,
    data: Vec<f64>,
}

impl SubspaceFrames {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of columns.
    pub fn rank(&self) -> usize {
        self.m
    }

    /// First retained step index.
    pub fn first(&self) -> usize {
        self.first
    }

    /// Last retained step index.
    pub fn last(&self) -> usize {
        (self.first + self.count).saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covers(&self, i: usize) -> bool {
        !self.is_empty() && i >= self.first && i <= self.last()
    }

    /// Frame at step `i`, column-major `n × m`.
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        let block = self.dim * self.m;
        let k = i - self.first;
        &self.data[k * block..(k + 1) * block]
    }
}

/// Lyapunov exponents in per-step natural-log units, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    /// Batch-means standard errors.
    pub std_errors: Vec<f64>,
    /// Number of steps averaged.
    pub steps: usize,
}

impl LyapunovSpectrum {
    pub fn trial_dim(&self) -> usize {
        self.exponents.len()
    }
}

fn random_orthonormal(n: usize, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = vec![0.0; m];
    loop {
        let mut a: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        if linalg::orthonormalize(&mut a, n, m, &mut r).is_ok() {
            return a;
        }
    }
}

fn check_request(traj: &Trajectory, m: usize, warm_up: usize) -> Result<()> {
    if m > traj.dim() {
        return Err(Error::InvalidArgument(format!(
            "requested {m} frame columns in dimension {}",
            traj.dim()
        )));
    }
    if warm_up >= traj.steps() {
        return Err(Error::InsufficientData(format!(
            "warm-up {warm_up} leaves no steps of a {}-step trajectory",
            traj.steps()
        )));
    }
    Ok(())
}

const BATCHES: usize = 32;

/// Forward QR iteration `Q_{i+1} R_i = Dφ(u_i) Q_i`.
///
/// Frames are retained for `i ≥ warm_up`; exponents average `ln R_i[j,j]` over
/// the retained steps.
pub fn forward_unstable_frames(
    traj: &Trajectory,
    m: usize,
    warm_up: usize,
    seed: u64,
) -> Result<(SubspaceFrames, LyapunovSpectrum)> {
    check_request(traj, m, warm_up)?;
    let n = traj.dim();
    let k = traj.steps();
    let block = n * m;
    let mut q = random_orthonormal(n, m, seed);
    let mut next = vec![0.0; block];
    let mut rdiag = vec![0.0; m];
    let retained = k - warm_up;
    let mut data = Vec::with_capacity((retained + 1) * block);
    let mut logs = vec![0.0; retained * m];
    if warm_up == 0 {
        data.extend_from_slice(&q);
    }
    for i in 0..k {
        linalg::mat_mat(traj.jacobian(i), n, &q, m, &mut next);
        if let Err(j) = linalg::orthonormalize(&mut next, n, m, &mut rdiag) {
            return Err(Error::DegenerateBasis {
                step: i,
                value: rdiag[j],
            });
        }
        std::mem::swap(&mut q, &mut next);
        if i >= warm_up {
            let row = i - warm_up;
            for j in 0..m {
                logs[row * m + j] = rdiag[j].ln();
            }
        }
        if i + 1 >= warm_up {
            data.extend_from_slice(&q);
        }
    }
    let spectrum = spectrum_from_logs(&logs, m, retained);
    Ok((
        SubspaceFrames {
            dim: n,
            m,
            first: warm_up,
            count: retained + 1,
            data,
        },
        spectrum,
    ))
}

fn spectrum_from_logs(logs: &[f64], m: usize, steps: usize) -> LyapunovSpectrum {
    let mut exponents = vec![0.0; m];
    let mut std_errors = vec![0.0; m];
    for j in 0..m {
        let series = logs.iter().skip(j).step_by(m.max(1));
        let total: f64 = series.clone().sum();
        exponents[j] = total / steps as f64;
        let nb = BATCHES.min(steps);
        if nb >= 2 {
            let size = steps / nb;
            let means: Vec<f64> = (0..nb)
                .map(|b| logs[b * size * m..(b + 1) * size * m].iter().skip(j).step_by(m).sum::<f64>() / size as f64)
                .collect();
            let mu = means.iter().sum::<f64>() / nb as f64;
            let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nb - 1) as f64;
            std_errors[j] = (var / nb as f64).sqrt();
        }
    }
    LyapunovSpectrum {
        exponents,
        std_errors,
        steps,
    }
}

/// Backward QR iteration `P_i R_i = Dφ(u_i)ᵀ P_{i+1}` from the end of the
/// trajectory.
///
/// Frames are retained for `i ≤ K − warm_up`. Their columns span the
/// orthogonal complement of the stable subspace.
pub fn backward_adjoint_frames(traj: &Trajectory, m: usize, warm_up: usize, seed: u64) -> Result<SubspaceFrames> {
    check_request(traj, m, warm_up)?;
    let n = traj.dim();
    let k = traj.steps();
    let block = n * m;
    let last = k - warm_up;
    let mut p = random_orthonormal(n, m, seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut next = vec![0.0; block];
    let mut rdiag = vec![0.0; m];
    let mut data = vec![0.0; (last + 1) * block];
    if warm_up == 0 {
        data[last * block..].copy_from_slice(&p);
    }
    for i in (0..k).rev() {
        linalg::mat_t_mat(traj.jacobian(i), n, &p, m, &mut next);
        if let Err(j) = linalg::orthonormalize(&mut next, n, m, &mut rdiag) {
            return Err(Error::DegenerateBasis {
                step: i,
                value: rdiag[j],
            });
        }
        std::mem::swap(&mut p, &mut next);
        if i <= last {
            data[i * block..(i + 1) * block].copy_from_slice(&p);
        }
    }
    Ok(SubspaceFrames {
        dim: n,
        m,
        first: 0,
        count: last + 1,
        data,
    })
}

/// Counts exponents above `+tol` in a `d_trial`-column forward run.
///
/// When `d_trial < n` at least one trial exponent must fall below `−tol`,
/// otherwise the trial space may not reach past `Eᵘ`. Any exponent inside
/// `±tol` is reported as indeterminate rather than guessed.
pub fn detect_num_unstable(
    traj: &Trajectory,
    d_trial: usize,
    tol: f64,
    warm_up: usize,
    seed: u64,
) -> Result<usize> {
    if d_trial == 0 || d_trial > traj.dim() {
        return Err(Error::InvalidArgument(format!(
            "trial dimension {d_trial} outside 1..={}",
            traj.dim()
        )));
    }
    let (_, spectrum) = forward_unstable_frames(traj, d_trial, warm_up, seed)?;
    classify(&spectrum, traj.dim(), tol)
}

/// Number of unstable directions implied by a trial spectrum.
pub fn classify(spectrum: &LyapunovSpectrum, dim: usize, tol: f64) -> Result<usize> {
    if let Some(&exponent) = spectrum.exponents.iter().find(|l| l.abs() <= tol) {
        return Err(Error::IndeterminateDimension { exponent, tol });
    }
    let m = spectrum.exponents.iter().filter(|&&l| l > tol).count();
    if m == spectrum.trial_dim() && spectrum.trial_dim() < dim {
        return Err(Error::TrialDimensionTooSmall {
            trial: spectrum.trial_dim(),
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::dynamics::{evolve_from_seed, AreaPreserving, CircleDoubling, Contracting, Solenoid};

    fn solenoid_orbit(steps: usize) -> Trajectory {
        evolve_from_seed(&Solenoid::default(), &[1.4, 0.0], 42, 100, steps).unwrap()
    }

    fn max_orthonormality_error(frames: &SubspaceFrames) -> f64 {
        let (n, m) = (frames.dim(), frames.rank());
        let mut worst: f64 = 0.0;
        for i in frames.first()..=frames.last() {
            let f = frames.at(i);
            for a in 0..m {
                for b in 0..m {
                    let g = linalg::dot(&f[a * n..(a + 1) * n], &f[b * n..(b + 1) * n]);
                    worst = worst.max((g - f64::from(a == b)).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn leading_exponent_of_the_solenoid_is_ln2() {
        let traj = solenoid_orbit(20_000);
        let (_, spectrum) = forward_unstable_frames(&traj, 1, DEFAULT_WARM_UP, 1).unwrap();
        assert!((spectrum.exponents[0] - LN_2).abs() < 1e-3, "{spectrum:?}");
    }

    #[test]
    fn full_solenoid_spectrum() {
        let traj = solenoid_orbit(20_000);
        let (frames, spectrum) = forward_unstable_frames(&traj, 3, DEFAULT_WARM_UP, 1).unwrap();
        let expect = [LN_2, -2.0 * LN_2, -2.0 * LN_2];
        for (l, e) in spectrum.exponents.iter().zip(expect) {
            assert!((l - e).abs() < 1e-3, "{spectrum:?}");
        }
        assert!(max_orthonormality_error(&frames) < 1e-12);
    }

    #[test]
    fn circle_frames_are_plus_minus_one() {
        let traj = evolve_from_seed(&CircleDoubling::default(), &[0.0], 3, 10, 5_000).unwrap();
        let (frames, spectrum) = forward_unstable_frames(&traj, 1, 10, 2).unwrap();
        assert!((spectrum.exponents[0] - LN_2).abs() < 1e-12);
        for i in frames.first()..=frames.last() {
            assert_eq!(frames.at(i)[0].abs(), 1.0);
        }
    }

    #[test]
    fn adjoint_frames_align_with_the_angle_direction() {
        let traj = solenoid_orbit(5_000);
        let p = backward_adjoint_frames(&traj, 1, DEFAULT_WARM_UP, 3).unwrap();
        assert_eq!(p.last(), traj.steps() - DEFAULT_WARM_UP);
        for i in 0..=p.last() {
            assert!((p.at(i)[1].abs() - 1.0).abs() < 1e-8);
        }
        assert!(max_orthonormality_error(&p) < 1e-12);
    }

    #[test]
    fn symmetric_jacobian_gives_equal_tangent_and_adjoint_frames() {
        let traj = evolve_from_seed(&AreaPreserving::default(), &[0.0], 8, 10, 2_000).unwrap();
        let (q, _) = forward_unstable_frames(&traj, 1, 100, 4).unwrap();
        let p = backward_adjoint_frames(&traj, 1, 100, 5).unwrap();
        for i in q.first()..=p.last() {
            assert!((linalg::dot(q.at(i), p.at(i)).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_are_transversal_along_the_solenoid() {
        let traj = evolve_from_seed(&Solenoid::default(), &[1.4, 0.2], 6, 100, 5_000).unwrap();
        let (q, _) = forward_unstable_frames(&traj, 1, DEFAULT_WARM_UP, 4).unwrap();
        let p = backward_adjoint_frames(&traj, 1, DEFAULT_WARM_UP, 5).unwrap();
        for i in q.first()..=p.last() {
            assert!(linalg::dot(q.at(i), p.at(i)).abs() > 0.1);
        }
    }

    #[test]
    fn frames_from_different_seeds_span_the_same_subspace() {
        let traj = solenoid_orbit(3_000);
        let (a, _) = forward_unstable_frames(&traj, 1, 100, 1).unwrap();
        let (b, _) = forward_unstable_frames(&traj, 1, 100, 2).unwrap();
        let pa = backward_adjoint_frames(&traj, 1, 100, 1).unwrap();
        let pb = backward_adjoint_frames(&traj, 1, 100, 2).unwrap();
        for i in a.first()..=pa.last() {
            let c = linalg::principal_cosines(a.at(i), b.at(i), 3, 1)[0];
            assert!(c.min(1.0).acos() < 1e-6);
            let c = linalg::principal_cosines(pa.at(i), pb.at(i), 3, 1)[0];
            assert!(c.min(1.0).acos() < 1e-6);
        }
    }

    #[test]
    fn detection_counts_unstable_directions() {
        let traj = solenoid_orbit(20_000);
        assert_eq!(detect_num_unstable(&traj, 3, DEFAULT_EXPONENT_TOL, 200, 1).unwrap(), 1);
        assert_eq!(detect_num_unstable(&traj, 2, DEFAULT_EXPONENT_TOL, 200, 1).unwrap(), 1);
        assert_eq!(
            detect_num_unstable(&traj, 1, DEFAULT_EXPONENT_TOL, 200, 1).unwrap_err(),
            Error::TrialDimensionTooSmall { trial: 1 }
        );

        let circle = evolve_from_seed(&CircleDoubling::default(), &[0.0], 1, 10, 1_000).unwrap();
        assert_eq!(detect_num_unstable(&circle, 1, DEFAULT_EXPONENT_TOL, 10, 1).unwrap(), 1);

        let contracting = evolve_from_seed(&Contracting, &[0.0], 1, 10, 1_000).unwrap();
        assert_eq!(detect_num_unstable(&contracting, 1, DEFAULT_EXPONENT_TOL, 10, 1).unwrap(), 0);
    }

    #[test]
    fn near_zero_exponent_is_indeterminate() {
        let spectrum = LyapunovSpectrum {
            exponents: vec![0.7, 0.01, -1.0],
            std_errors: vec![0.0; 3],
            steps: 10,
        };
        assert!(matches!(
            classify(&spectrum, 3, 0.05),
            Err(Error::IndeterminateDimension { .. })
        ));
    }

    #[test]
    fn rank_collapse_is_reported() {
        use crate::dynamics::{evolve, MapModel};
        use rand::RngCore;

        /// Collapses the plane onto a line: `Dφ` has rank one.
        struct Fold;
        impl MapModel for Fold {
            fn id(&self) -> &'static str {
                "fold"
            }
            fn dim(&self) -> usize {
                2
            }
            fn n_params(&self) -> usize {
                1
            }
            fn periods(&self) -> &[Option<f64>] {
                &[None, None]
            }
            fn default_params(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn map(&self, u: &[f64], _s: &[f64], out: &mut [f64]) {
                out[0] = 0.5 * (u[0] + u[1]);
                out[1] = out[0];
            }
            fn jacobian(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
                out.fill(0.5);
            }
            fn param_jacobian(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn det_gradient(&self, _u: &[f64], _s: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn sample_state(&self, _s: &[f64], _rng: &mut dyn RngCore, out: &mut [f64]) {
                out.fill(0.1);
            }
        }
        let traj = evolve(&Fold, &[0.3, -0.2], &[0.0], 0, 10).unwrap();
        assert!(matches!(
            forward_unstable_frames(&traj, 2, 0, 1),
            Err(Error::DegenerateBasis { step: 0, .. })
        ));
        assert!(forward_unstable_frames(&traj, 1, 0, 1).is_ok());
    }
}
