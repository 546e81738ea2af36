//! Independent estimators used to check the space-split results: central
//! finite differences over sampled orbits, ensemble tangent averages, and a
//! transfer-operator oracle for periodic 1-D maps.

mod ensemble;
mod fd;
mod ulam;

pub use ensemble::{ensemble_sensitivity, log_variance_slope, EnsembleConfig, EnsembleResult};
pub use fd::{fd_sensitivity, FdConfig, FdEstimate};
pub use ulam::{ulam_sensitivity, UlamConfig, UlamEstimate, UlamOracle};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples reduced together before merging; fixed so that the merge tree, and
/// with it every rounding, does not depend on the thread count.
pub(crate) const CHUNK: usize = 1024;

/// Generator for sample `index` of a run seeded with `seed`.
pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64 / n as f64);
        self.count = n;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}
