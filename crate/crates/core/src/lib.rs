//! Sensitivities of long-time averages of chaotic maps to parameters.
//!
//! The space-split estimator writes `d⟨J⟩/ds` as a stable part, computed with
//! a tangent recursion driven by the stable component of the parameter
//! perturbation, plus an unstable part, computed as a time correlation between
//! `J` and `ψ·Xᵘ + div Xᵘ`, where `ψ` solves a contracting recursion for the
//! unstable projection of the log-density gradient. No unstable tangent
//! solution is ever formed.
//!
//! Modules:
//!
//! - [`dynamics`]: maps, stored trajectories, objectives.
//! - [`subspaces`]: tangent and adjoint unstable frames, Lyapunov exponents.
//! - [`splitting`]: oblique split `X = Xᵘ + Xˢ`, `div Xᵘ`, and the source `Y`.
//! - [`s3`]: the driver and its two accumulators.
//! - [`baselines`]: finite-difference Monte Carlo, ensemble sensitivity, and an
//!   Ulam transfer-operator oracle for circle maps.

pub mod baselines;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod s3;
pub mod splitting;
pub mod subspaces;

pub use error::{Error, Result};
