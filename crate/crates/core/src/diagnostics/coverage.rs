use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::mix_seed;
use crate::SimRng;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Monte Carlo estimate of how often a high-probability bound fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    pub delta: f64,
    pub empirical_rate: f64,
    pub wilson_ci: (f64, f64),
}

impl CoverageReport {
    pub fn new(trials: usize, violations: usize, delta: f64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument(
                "coverage needs at least one trial".into(),
            ));
        }
        if violations > trials {
            return Err(Error::InvalidArgument(format!(
                "{violations} violations out of {trials} trials"
            )));
        }
        Ok(Self {
            trials,
            violations,
            delta,
            empirical_rate: violations as f64 / trials as f64,
            wilson_ci: wilson_interval(violations, trials, Z95),
        })
    }

    /// Empirical rate at most `delta`.
    pub fn rate_within_delta(&self) -> bool {
        self.empirical_rate <= self.delta
    }

    /// Upper Wilson bound at most `slack * delta`.
    pub fn upper_within(&self, slack: f64) -> bool {
        self.wilson_ci.1 <= slack * self.delta
    }

    /// The acceptance rule for checks backed by a proven bound.
    pub fn passes(&self) -> bool {
        self.rate_within_delta() && self.upper_within(1.5)
    }
}

/// Runs `trial` once per index with its own derived seed, in parallel, and
/// returns the outcomes in index order.
pub(crate) fn run_trials<T, F>(trials: usize, seed: u64, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = SimRng::seed_from_u64(mix_seed(seed, &[i as u64]));
            trial(&mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_reference_values() {
        // Zero successes: upper bound z^2 / (n + z^2).
        let (lo, hi) = wilson_interval(0, 500, Z95);
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, Z95 * Z95 / (500.0 + Z95 * Z95), epsilon = 1e-15);
        let (lo, hi) = wilson_interval(5, 100, Z95);
        assert_relative_eq!(lo, 0.021543, epsilon = 1e-6);
        assert_relative_eq!(hi, 0.111750, epsilon = 1e-6);
        let (lo, hi) = wilson_interval(10, 10, Z95);
        assert_relative_eq!(lo, 0.722467, epsilon = 1e-6);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn report_invariants() {
        let r = CoverageReport::new(200, 3, 0.1).unwrap();
        assert_eq!(r.empirical_rate, 0.015);
        assert!(r.wilson_ci.0 <= r.empirical_rate && r.empirical_rate <= r.wilson_ci.1);
        assert!(r.passes());
        assert!(CoverageReport::new(10, 11, 0.1).is_err());
        assert!(CoverageReport::new(0, 0, 0.1).is_err());
        assert!(!CoverageReport::new(100, 20, 0.1).unwrap().passes());
    }

    #[test]
    fn trials_are_ordered_and_seeded() {
        use rand::Rng;
        let a = run_trials(64, 9, |rng| Ok(rng.random::<u64>())).unwrap();
        let b = run_trials(64, 9, |rng| Ok(rng.random::<u64>())).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 64);
    }
}
