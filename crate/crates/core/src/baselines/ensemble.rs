use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_rng, Moments, CHUNK};
use crate::dynamics::objectives::ObjectiveSet;
use crate::dynamics::{check_dims, wrap, MapModel};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of summands `N`.
    pub truncation: usize,
    pub samples: usize,
    /// Steps from the sampled initial condition to the orbit start `u₀`.
    pub burn_in: usize,
    pub seed: u64,
    pub param_index: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            truncation: 20,
            samples: 100_000,
            burn_in: 1_000,
            seed: 0,
            param_index: 0,
        }
    }
}

/// Truncated sum `Σ_{i<N} ⟨DJ(u_{i+1})·w_{i+1}⟩` with `w₁ = ∂φ/∂s(u₀)` and
/// `w_{k+1} = Dφ(u_k) w_k`, together with the per-summand statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub objective_id: String,
    pub estimate: f64,
    pub stderr: f64,
    pub summand_mean: Vec<f64>,
    pub summand_variance: Vec<f64>,
    /// Partial sums of `summand_mean`.
    pub cumulative: Vec<f64>,
}

pub fn ensemble_sensitivity(
    model: &dyn MapModel,
    params: &[f64],
    objectives: &ObjectiveSet,
    cfg: &EnsembleConfig,
) -> Result<Vec<EnsembleResult>> {
    if cfg.truncation == 0 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidArgument("at least 2 samples are needed".into()));
    }
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
    let big_n = cfg.truncation;
    let np = model.n_params();

    // per chunk: summand moments (obj × i) and moments of the per-sample sum
    let n_chunks = cfg.samples.div_ceil(CHUNK);
    let chunks: Vec<(Vec<Moments>, Vec<Moments>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut per_i = vec![Moments::default(); n_obj * big_n];
            let mut sums = vec![Moments::default(); n_obj];
            let mut u = vec![0.0; n];
            let mut next = vec![0.0; n];
            let mut w = vec![0.0; n];
            let mut w_next = vec![0.0; n];
            let mut jac = vec![0.0; n * n];
            let mut pj = vec![0.0; n * np];
            let mut total = vec![0.0; n_obj];
            for index in c * CHUNK..((c + 1) * CHUNK).min(cfg.samples) {
                let mut rng = sample_rng(cfg.seed, index as u64);
                model.sample_state(params, &mut rng, &mut u);
                for step in 0..=cfg.burn_in {
                    if step > 0 {
                        model.map(&u, params, &mut next);
                        wrap(model, &mut next);
                        if next.iter().any(|x| !x.is_finite()) {
                            return Err(Error::Divergence { step });
                        }
                        std::mem::swap(&mut u, &mut next);
                    }
                }
                model.param_jacobian(&u, params, &mut pj);
                w.copy_from_slice(&pj[cfg.param_index * n..(cfg.param_index + 1) * n]);
                total.fill(0.0);
                for i in 0..big_n {
                    if i > 0 {
                        model.jacobian(&u, params, &mut jac);
                        linalg::mat_vec(&jac, n, &w, &mut w_next);
                        std::mem::swap(&mut w, &mut w_next);
                    }
                    model.map(&u, params, &mut next);
                    wrap(model, &mut next);
                    std::mem::swap(&mut u, &mut next);
                    let (_, grads) = objectives.evaluate(&u);
                    for k in 0..n_obj {
                        let s = linalg::dot(&grads[k * n..(k + 1) * n], &w);
                        per_i[k * big_n + i].push(s);
                        total[k] += s;
                    }
                }
                for k in 0..n_obj {
                    sums[k].push(total[k]);
                }
            }
            Ok((per_i, sums))
        })
        .collect::<Result<_>>()?;

    let mut per_i = vec![Moments::default(); n_obj * big_n];
    let mut sums = vec![Moments::default(); n_obj];
    for (a, b) in &chunks {
        per_i.iter_mut().zip(a).for_each(|(t, c)| t.merge(c));
        sums.iter_mut().zip(b).for_each(|(t, c)| t.merge(c));
    }
    Ok((0..n_obj)
        .map(|k| {
            let row = &per_i[k * big_n..(k + 1) * big_n];
            let summand_mean: Vec<f64> = row.iter().map(|m| m.mean).collect();
            let cumulative = summand_mean
                .iter()
                .scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect();
            EnsembleResult {
                objective_id: objectives.ids()[k].clone(),
                estimate: sums[k].mean,
                stderr: sums[k].stderr(),
                summand_mean,
                summand_variance: row.iter().map(Moments::variance).collect(),
                cumulative,
            }
        })
        .collect())
}

/// Least-squares slope of `ln variance[i]` against `i` over `range`.
pub fn log_variance_slope(variance: &[f64], range: std::ops::RangeInclusive<usize>) -> Result<f64> {
    let (a, b) = (*range.start(), *range.end());
    if b >= variance.len() || b <= a {
        return Err(Error::InvalidArgument(format!(
            "slope range {a}..={b} invalid for {} summands",
            variance.len()
        )));
    }
    if variance[a..=b].iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InsufficientData("zero summand variance in the slope range".into()));
    }
    let pts: Vec<(f64, f64)> = (a..=b).map(|i| (i as f64, variance[i].ln())).collect();
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
