//! Scalar objectives `J(u)` with analytic gradients.
//!
//! Nodal objectives are hat functions on a uniform grid along one or two state
//! coordinates; a full grid of hats forms a partition of unity on the gridded
//! range and is zero outside it.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform grid along one state coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub coord: usize,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    /// Periodic grids wrap around `[lo, hi)` and have no end nodes.
    #[serde(default)]
    pub periodic: bool,
}

impl GridAxis {
    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if self.nodes < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.nodes as f64
        } else {
            (self.hi - self.lo) / (self.nodes - 1) as f64
        }
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.spacing()
    }

    /// Value and derivative of hat `k` at `x`.
    pub fn hat(&self, k: usize, x: f64) -> (f64, f64) {
        let h = self.spacing();
        let t = if self.periodic {
            let span = self.hi - self.lo;
            let y = (x - self.lo).rem_euclid(span);
            let n = self.nodes as f64;
            let mut t = y / h - k as f64;
            // minimal image in units of the spacing
            t -= n * (t / n).round();
            t
        } else {
            if x < self.lo || x > self.hi {
                return (0.0, 0.0);
            }
            (x - self.node(k)) / h
        };
        let a = t.abs();
        if a >= 1.0 {
            (0.0, 0.0)
        } else {
            (1.0 - a, -t.signum() / h * f64::from(t != 0.0))
        }
    }
}

/// One scalar objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Objective {
    /// `J = u[coord]`.
    Coordinate { coord: usize },
    /// `J = cos(2π k u[coord] / period)`.
    Cos {
        coord: usize,
        period: f64,
        #[serde(default = "one")]
        harmonic: u32,
    },
    /// `J = sin(2π k u[coord] / period)`.
    Sin {
        coord: usize,
        period: f64,
        #[serde(default = "one")]
        harmonic: u32,
    },
    /// Hat function `node` of a grid.
    Hat { axis: GridAxis, node: usize },
    /// Tensor product of two hats.
    Hat2 { axes: [GridAxis; 2], nodes: [usize; 2] },
    /// Sum of the terms.
    Sum { terms: Vec<Objective> },
}

fn one() -> u32 {
    1
}

impl Objective {
    /// Adds `J(u)` to the return value and `DJ(u)` into `grad`.
    fn accumulate(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Objective::Coordinate { coord } => {
                grad[*coord] += 1.0;
                u[*coord]
            }
            Objective::Cos { coord, period, harmonic } => {
                let w = TAU * f64::from(*harmonic) / period;
                let (sn, cs) = (w * u[*coord]).sin_cos();
                grad[*coord] -= w * sn;
                cs
            }
            Objective::Sin { coord, period, harmonic } => {
                let w = TAU * f64::from(*harmonic) / period;
                let (sn, cs) = (w * u[*coord]).sin_cos();
                grad[*coord] += w * cs;
                sn
            }
            Objective::Hat { axis, node } => {
                let (v, d) = axis.hat(*node, u[axis.coord]);
                grad[axis.coord] += d;
                v
            }
            Objective::Hat2 { axes, nodes } => {
                let (v0, d0) = axes[0].hat(nodes[0], u[axes[0].coord]);
                let (v1, d1) = axes[1].hat(nodes[1], u[axes[1].coord]);
                grad[axes[0].coord] += d0 * v1;
                grad[axes[1].coord] += v0 * d1;
                v0 * v1
            }
            Objective::Sum { terms } => terms.iter().map(|t| t.accumulate(u, grad)).sum(),
        }
    }

    /// `J(u)`; writes `DJ(u)` into `grad`.
    pub fn evaluate(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        self.accumulate(u, grad)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut g = vec![0.0; u.len()];
        self.evaluate(u, &mut g)
    }

    fn max_coord(&self) -> usize {
        match self {
            Objective::Coordinate { coord } | Objective::Cos { coord, .. } | Objective::Sin { coord, .. } => *coord,
            Objective::Hat { axis, .. } => axis.coord,
            Objective::Hat2 { axes, .. } => axes[0].coord.max(axes[1].coord),
            Objective::Sum { terms } => terms.iter().map(Objective::max_coord).max().unwrap_or(0),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.max_coord() >= dim {
            return Err(Error::InvalidArgument(format!(
                "objective refers to coordinate {} of a {dim}-dimensional state",
                self.max_coord()
            )));
        }
        match self {
            Objective::Cos { period, .. } | Objective::Sin { period, .. } if !(*period > 0.0) => {
                Err(Error::InvalidArgument("trigonometric objective needs a positive period".into()))
            }
            Objective::Hat { axis, node } if *node >= axis.nodes => {
                Err(Error::InvalidArgument(format!("hat node {node} outside grid")))
            }
            Objective::Hat { axis, .. } => axis.validate(),
            Objective::Hat2 { axes, nodes } => {
                for (a, k) in axes.iter().zip(nodes) {
                    a.validate()?;
                    if *k >= a.nodes {
                        return Err(Error::InvalidArgument(format!("hat node {k} outside grid")));
                    }
                }
                Ok(())
            }
            Objective::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
            _ => Ok(()),
        }
    }
}

/// A labelled list of objectives evaluated together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveSet {
    ids: Vec<String>,
    objectives: Vec<Objective>,
}

impl ObjectiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, objective: Objective) {
        self.ids.push(id.into());
        self.objectives.push(objective);
    }

    pub fn single(id: impl Into<String>, objective: Objective) -> Self {
        let mut set = Self::new();
        set.push(id, objective);
        set
    }

    /// Every hat of a one-dimensional grid.
    pub fn nodal(axis: GridAxis) -> Self {
        let mut set = Self::new();
        for k in 0..axis.nodes {
            set.push(
                format!("hat_u{}_{k}", axis.coord),
                Objective::Hat {
                    axis: axis.clone(),
                    node: k,
                },
            );
        }
        set
    }

    /// Every tensor-product hat of a two-dimensional grid.
    pub fn nodal_2d(a: GridAxis, b: GridAxis) -> Self {
        let mut set = Self::new();
        for i in 0..a.nodes {
            for j in 0..b.nodes {
                set.push(
                    format!("hat_u{}_{i}_u{}_{j}", a.coord, b.coord),
                    Objective::Hat2 {
                        axes: [a.clone(), b.clone()],
                        nodes: [i, j],
                    },
                );
            }
        }
        set
    }

    pub fn extend(&mut self, other: ObjectiveSet) {
        self.ids.extend(other.ids);
        self.objectives.extend(other.objectives);
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn get(&self, k: usize) -> &Objective {
        &self.objectives[k]
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("no objectives".into()));
        }
        self.objectives.iter().try_for_each(|o| o.validate(dim))
    }

    /// Values `J_k(u)` and row-major gradients (`grads[k * n + ℓ] = ∂J_k/∂u_ℓ`).
    pub fn evaluate(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = u.len();
        let mut grads = vec![0.0; n * self.len()];
        let values = self
            .objectives
            .iter()
            .enumerate()
            .map(|(k, o)| o.evaluate(u, &mut grads[k * n..(k + 1) * n]))
            .collect();
        (values, grads)
    }
}
