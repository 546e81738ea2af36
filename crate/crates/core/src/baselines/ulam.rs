use serde::{Deserialize, Serialize};

use crate::dynamics::objectives::{Objective, ObjectiveSet};
use crate::dynamics::MapModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UlamConfig {
    pub n_cells: usize,
    pub delta: f64,
    pub param_index: usize,
    /// Sub-intervals per cell whose images are spread over the target cells.
    pub subintervals: usize,
    /// L1 change at which power iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for UlamConfig {
    fn default() -> Self {
        UlamConfig {
            n_cells: 4096,
            delta: 1e-3,
            param_index: 0,
            subintervals: 64,
            tolerance: 1e-14,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UlamEstimate {
    pub objective_id: String,
    pub estimate: f64,
    pub n_cells: usize,
    pub delta: f64,
    /// `⟨J⟩` at the unperturbed parameters.
    pub mean_value: f64,
}

/// Cell-to-cell transfer matrix of a periodic 1-D map and its stationary
/// distribution.
#[derive(Debug, Clone)]
pub struct UlamOracle {
    period: f64,
    /// Sparse rows: `(target cell, probability)`.
    rows: Vec<Vec<(usize, f64)>>,
    density: Vec<f64>,
    iterations: usize,
}

impl UlamOracle {
    pub fn build(model: &dyn MapModel, params: &[f64], cfg: &UlamConfig) -> Result<UlamOracle> {
        if model.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "the transfer-operator oracle needs a 1-D map, {} has dimension {}",
                model.id(),
                model.dim()
            )));
        }
        let period = model.periods()[0].ok_or_else(|| {
            Error::InvalidArgument(format!("model {} is not periodic in its coordinate", model.id()))
        })?;
        if cfg.n_cells < 100 {
            return Err(Error::InvalidArgument(format!("n_cells must be at least 100, got {}", cfg.n_cells)));
        }
        if cfg.subintervals == 0 {
            return Err(Error::InvalidArgument("subintervals must be at least 1".into()));
        }
        if params.len() != model.n_params() {
            return Err(Error::dims("parameters", model.n_params(), params.len()));
        }
        let n = cfg.n_cells;
        let width = period / n as f64;
        let sub = width / cfg.subintervals as f64;
        let weight = 1.0 / cfg.subintervals as f64;
        let image = |x: f64| {
            let mut out = [0.0];
            model.map(&[x], params, &mut out);
            out[0]
        };

        let mut rows = Vec::with_capacity(n);
        for c in 0..n {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for k in 0..cfg.subintervals {
                let a = c as f64 * width + k as f64 * sub;
                let (ya, yb) = (image(a), image(a + sub));
                if !ya.is_finite() || !yb.is_finite() {
                    return Err(Error::Domain { step: 1 });
                }
                let (lo, hi) = if ya <= yb { (ya, yb) } else { (yb, ya) };
                spread(&mut row, lo, hi, width, n, weight);
            }
            row.sort_by_key(|e| e.0);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            rows.push(row);
        }

        // power iteration p ← p T
        let mut density = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut iterations = 0;
        loop {
            if iterations >= cfg.max_iterations {
                return Err(Error::Convergence {
                    what: "stationary density",
                    iterations,
                });
            }
            iterations += 1;
            next.fill(0.0);
            for (row, &p) in rows.iter().zip(&density) {
                for &(j, t) in row {
                    next[j] += p * t;
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let change: f64 = next.iter().zip(&density).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut density, &mut next);
            if change < cfg.tolerance {
                break;
            }
        }
        Ok(UlamOracle {
            period,
            rows,
            density,
            iterations,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.rows.len()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Stationary probability of each cell.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn row(&self, c: usize) -> &[(usize, f64)] {
        &self.rows[c]
    }

    /// `⟨J⟩` with `J` averaged over 64 midpoints per cell.
    pub fn expectation(&self, objective: &Objective) -> f64 {
        const POINTS: usize = 64;
        let width = self.period / self.n_cells() as f64;
        self.density
            .iter()
            .enumerate()
            .map(|(c, &p)| {
                let avg = (0..POINTS)
                    .map(|k| objective.value(&[(c as f64 + (k as f64 + 0.5) / POINTS as f64) * width]))
                    .sum::<f64>()
                    / POINTS as f64;
                p * avg
            })
            .sum()
    }
}

/// Adds `weight` spread uniformly over `[lo, hi]` (unwrapped) to the cells it
/// covers.
fn spread(row: &mut Vec<(usize, f64)>, lo: f64, hi: f64, width: f64, n: usize, weight: f64) {
    let len = hi - lo;
    if len <= 0.0 {
        let cell = ((lo / width).floor() as i64).rem_euclid(n as i64) as usize;
        row.push((cell, weight));
        return;
    }
    let mut x = lo;
    let mut cell = (lo / width).floor();
    while x < hi {
        let edge = ((cell + 1.0) * width).min(hi);
        let frac = (edge - x) / len;
        if frac > 0.0 {
            row.push(((cell as i64).rem_euclid(n as i64) as usize, weight * frac));
        }
        x = edge;
        cell += 1.0;
    }
}

/// Central difference of the stationary expectation of every objective.
pub fn ulam_sensitivity(
    model: &dyn MapModel,
    params: &[f64],
    objectives: &ObjectiveSet,
    cfg: &UlamConfig,
) -> Result<Vec<UlamEstimate>> {
    if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {}", cfg.delta)));
    }
    if cfg.param_index >= model.n_params() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {} out of range for {} parameters",
            cfg.param_index,
            model.n_params()
        )));
    }
    objectives.validate(model.dim())?;
    let mut plus = params.to_vec();
    let mut minus = params.to_vec();
    plus[cfg.param_index] += cfg.delta;
    minus[cfg.param_index] -= cfg.delta;
    let center = UlamOracle::build(model, params, cfg)?;
    let up = UlamOracle::build(model, &plus, cfg)?;
    let down = UlamOracle::build(model, &minus, cfg)?;
    Ok(objectives
        .ids()
        .iter()
        .zip(objectives.objectives())
        .map(|(id, j)| UlamEstimate {
            objective_id: id.clone(),
            estimate: (up.expectation(j) - down.expectation(j)) / (2.0 * cfg.delta),
            n_cells: cfg.n_cells,
            delta: cfg.delta,
            mean_value: center.expectation(j),
        })
        .collect())
}
