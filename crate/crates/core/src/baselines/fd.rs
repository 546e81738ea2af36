use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_rng, Moments, CHUNK};
use crate::dynamics::objectives::ObjectiveSet;
use crate::dynamics::{check_dims, wrap, MapModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdConfig {
    pub samples: usize,
    /// Half-width of the central difference.
    pub delta: f64,
    /// Steps from the sampled initial condition before `J` is recorded.
    pub burn_in: usize,
    /// Number of consecutive `J` values averaged per orbit.
    pub horizon: usize,
    pub seed: u64,
    pub param_index: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            samples: 1_000_000,
            delta: 1e-3,
            burn_in: 1_000,
            horizon: 1,
            seed: 0,
            param_index: 0,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {}", self.delta)));
        }
        if self.samples < 2 {
            return Err(Error::InvalidArgument("at least 2 samples are needed".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdEstimate {
    pub objective_id: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub delta: f64,
    pub seed: u64,
}

/// Time average of every objective along `horizon` steps after `burn_in`.
fn orbit_average(
    model: &dyn MapModel,
    u0: &[f64],
    params: &[f64],
    cfg: &FdConfig,
    objectives: &ObjectiveSet,
    out: &mut [f64],
) -> Result<()> {
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u.len()];
    out.fill(0.0);
    for step in 0..cfg.burn_in + cfg.horizon {
        if step >= cfg.burn_in {
            let (values, _) = objectives.evaluate(&u);
            for (o, v) in out.iter_mut().zip(values) {
                *o += v;
            }
        }
        model.map(&u, params, &mut next);
        wrap(model, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: step + 1 });
        }
        std::mem::swap(&mut u, &mut next);
    }
    let h = cfg.horizon as f64;
    out.iter_mut().for_each(|o| *o /= h);
    Ok(())
}

/// Central difference `(⟨J⟩₊ − ⟨J⟩₋)/(2δ)` over orbits started from common
/// sampled initial conditions, with the standard error of the per-sample
/// differences.
pub fn fd_sensitivity(
    model: &dyn MapModel,
    params: &[f64],
    objectives: &ObjectiveSet,
    cfg: &FdConfig,
) -> Result<Vec<FdEstimate>> {
    cfg.validate()?;
    let n = model.dim();
    check_dims(model, &vec![0.0; n], params)?;
    objectives.validate(n)?;
    if cfg.param_index >= model.n_params() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {} out of range for {} parameters",
            cfg.param_index,
            model.n_params()
        )));
    }
    let n_obj = objectives.len();
    let mut plus = params.to_vec();
    let mut minus = params.to_vec();
    plus[cfg.param_index] += cfg.delta;
    minus[cfg.param_index] -= cfg.delta;

    let n_chunks = cfg.samples.div_ceil(CHUNK);
    let chunks: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); n_obj];
            let mut u0 = vec![0.0; n];
            let mut jp = vec![0.0; n_obj];
            let mut jm = vec![0.0; n_obj];
            for index in c * CHUNK..((c + 1) * CHUNK).min(cfg.samples) {
                let mut rng = sample_rng(cfg.seed, index as u64);
                model.sample_state(params, &mut rng, &mut u0);
                orbit_average(model, &u0, &plus, cfg, objectives, &mut jp)?;
                orbit_average(model, &u0, &minus, cfg, objectives, &mut jm)?;
                for k in 0..n_obj {
                    acc[k].push((jp[k] - jm[k]) / (2.0 * cfg.delta));
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![Moments::default(); n_obj];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    Ok(total
        .iter()
        .zip(objectives.ids())
        .map(|(m, id)| FdEstimate {
            objective_id: id.clone(),
            estimate: m.mean,
            stderr: m.stderr(),
            n_samples: cfg.samples,
            delta: cfg.delta,
            seed: cfg.seed,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::objectives::Objective;
    use crate::dynamics::{Contracting, Solenoid};

    #[test]
    fn contracting_map_difference_is_exact() {
        let set = ObjectiveSet::single("u", Objective::Coordinate { coord: 0 });
        let cfg = FdConfig {
            samples: 5_000,
            burn_in: 80,
            ..Default::default()
        };
        let r = &fd_sensitivity(&Contracting, &[0.2], &set, &cfg).unwrap()[0];
        assert!((r.estimate - 2.0).abs() < 1e-12, "{}", r.estimate);
        assert!(r.stderr < 1e-10);
    }

    #[test]
    fn radius_responds_one_to_one_to_the_radial_offset() {
        let set = ObjectiveSet::single("r", Objective::Coordinate { coord: 0 });
        let cfg = FdConfig {
            samples: 4_096,
            burn_in: 64,
            ..Default::default()
        };
        let r = &fd_sensitivity(&Solenoid::default(), &[1.4, 0.0], &set, &cfg).unwrap()[0];
        assert!((r.estimate - 1.0).abs() <= 3.0 * r.stderr + 1e-10, "{} ± {}", r.estimate, r.stderr);
    }

    #[test]
    fn fixed_seed_is_bit_identical_and_seeds_differ() {
        let set = ObjectiveSet::single(
            "cos",
            Objective::Cos {
                coord: 1,
                period: std::f64::consts::TAU,
                harmonic: 1,
            },
        );
        let cfg = FdConfig {
            samples: 3_000,
            burn_in: 30,
            param_index: 1,
            ..Default::default()
        };
        let a = fd_sensitivity(&Solenoid::default(), &[1.4, 0.1], &set, &cfg).unwrap();
        let b = fd_sensitivity(&Solenoid::default(), &[1.4, 0.1], &set, &cfg).unwrap();
        assert_eq!(a[0].estimate.to_bits(), b[0].estimate.to_bits());
        assert_eq!(a[0].stderr.to_bits(), b[0].stderr.to_bits());
        let c = fd_sensitivity(&Solenoid::default(), &[1.4, 0.1], &set, &FdConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a[0].estimate, c[0].estimate);
    }

    #[test]
    fn stderr_scales_with_inverse_root_sample_count() {
        let set = ObjectiveSet::single(
            "cos",
            Objective::Cos {
                coord: 1,
                period: std::f64::consts::TAU,
                harmonic: 1,
            },
        );
        let base = FdConfig {
            samples: 20_000,
            burn_in: 30,
            param_index: 1,
            ..Default::default()
        };
        let small = fd_sensitivity(&Solenoid::default(), &[1.4, 0.0], &set, &base).unwrap();
        let large = fd_sensitivity(
            &Solenoid::default(),
            &[1.4, 0.0],
            &set,
            &FdConfig {
                samples: 80_000,
                ..base
            },
        )
        .unwrap();
        let ratio = small[0].stderr / large[0].stderr;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn bad_delta_is_rejected() {
        let set = ObjectiveSet::single("u", Objective::Coordinate { coord: 0 });
        for delta in [0.0, -1e-3, f64::NAN] {
            let cfg = FdConfig {
                delta,
                ..Default::default()
            };
            assert!(matches!(
                fd_sensitivity(&Contracting, &[0.0], &set, &cfg),
                Err(Error::InvalidArgument(_))
            ));
        }
    }
}
