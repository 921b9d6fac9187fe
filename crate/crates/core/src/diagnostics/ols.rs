use nalgebra::DVector;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::baselines::{oful_beta, oful_choose, RidgeState};
use crate::environments::{EnvConfig, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceConfig, ConfidenceMode};
use crate::policy::{BosePolicy, SolverConfig};
use crate::SimRng;

/// Population least-squares fit on the biasing stream when the first action
/// is played with probability `alpha` on even rounds.
pub fn ols_closed_form(alpha: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let a2 = alpha * alpha;
    let w1 = (2.0 * alpha + 1.0).powi(2) / (-4.0 * a2 + 12.0 * alpha + 1.0);
    let w2 = (4.0 * a2 + 5.0) / (4.0 * a2 - 12.0 * alpha - 1.0);
    Ok((w1, w2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsDemoReport {
    pub horizon: u64,
    pub burn_in: u64,
    /// Ridge fit when even rounds alternate between the two actions.
    pub ridge_w: [f64; 2],
    pub closed_form: [f64; 2],
    /// The centered estimate from a BOSE run on the same stream.
    pub bose_theta: [f64; 2],
    /// Regret of an optimistic ridge learner over rounds after `burn_in`.
    pub oful_regret_after_burn_in: f64,
    /// `0.9 * (2/3) * (even rounds after burn_in)`.
    pub oful_regret_floor: f64,
}

fn pair(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

/// Runs three learners on the least-squares biasing stream. `horizon` must be
/// even; the first tenth of the rounds is burn-in for the regret count.
pub fn ols_bias_demo(horizon: u64, seed: u64) -> Result<OlsDemoReport> {
    if horizon == 0 || !horizon.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and even, got {horizon}"
        )));
    }
    let env_cfg = EnvConfig::new(EnvKind::OlsBias, 2, 2);
    let burn_in = horizon / 10;

    // Deterministic alternation on even rounds makes the action frequency
    // exactly one half.
    let mut env = Environment::new(env_cfg, seed)?;
    let bound = env.feature_bound();
    let mut ridge = RidgeState::new(2, 1.0)?.with_feature_bound(bound)?;
    for t in 0..horizon {
        let o = env.sample_context(t)?;
        let a = ((t / 2) % 2) as usize;
        ridge.learn(o.context.feature(a), o.reward(a))?;
    }

    let mut env = Environment::new(env_cfg, seed)?;
    let mut oful = RidgeState::new(2, 1.0)?.with_feature_bound(bound)?;
    let mut oful_regret = 0.0;
    let mut even_after = 0u64;
    for t in 0..horizon {
        let o = env.sample_context(t)?;
        let a = oful_choose(&oful, &o.context, oful_beta(&oful, 0.1));
        oful.learn(o.context.feature(a), o.reward(a))?;
        if t >= burn_in {
            oful_regret += o.instantaneous_regret(a)?;
            if t % 2 == 0 {
                even_after += 1;
            }
        }
    }

    let mut env = Environment::new(env_cfg, seed)?;
    let conf = ConfidenceConfig::new(horizon, 2, 0.1, ConfidenceMode::TwoAction)?;
    let mut bose = BosePolicy::new(conf, SolverConfig::default())?.with_feature_bound(bound)?;
    let mut rng = SimRng::seed_from_u64(seed);
    for t in 0..horizon {
        let o = env.sample_context(t)?;
        let (a, dist) = bose.choose(&o.context, &mut rng)?;
        bose.learn(&o.context, a, &dist, o.reward(a))?;
    }

    let (w1, w2) = ols_closed_form(0.5)?;
    Ok(OlsDemoReport {
        horizon,
        burn_in,
        ridge_w: pair(ridge.theta()),
        closed_form: [w1, w2],
        bose_theta: pair(bose.estimator().theta_hat()),
        oful_regret_after_burn_in: oful_regret,
        oful_regret_floor: 0.9 * (2.0 / 3.0) * even_after as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, Vector2};

    /// Normal equations per pair of rounds, solved numerically.
    fn oracle(alpha: f64) -> (f64, f64) {
        let z1 = Vector2::new(1.0, 1.0);
        let z2 = Vector2::new(1.0, 1.0 / 3.0);
        let z0 = Vector2::new(1.0, 0.0);
        let gram: Matrix2<f64> =
            z1 * z1.transpose() * alpha + z2 * z2.transpose() * (1.0 - alpha) + z0 * z0.transpose();
        // Rewards: (1,1) earns 1 - 1, (1,1/3) earns 1/3 - 1, odd rounds 0 + 1.
        let moment = z2 * ((1.0 - alpha) * (-2.0 / 3.0)) + z0;
        let w = gram.lu().solve(&moment).unwrap();
        (w[0], w[1])
    }

    #[test]
    fn closed_form_examples() {
        let cases = [
            (0.0, (1.0, -5.0)),
            (1.0, (1.0, -1.0)),
            (0.5, (2.0 / 3.0, -1.0)),
        ];
        for (alpha, (w1, w2)) in cases {
            let got = ols_closed_form(alpha).unwrap();
            assert_relative_eq!(got.0, w1, epsilon = 1e-14);
            assert_relative_eq!(got.1, w2, epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_normal_equations() {
        for i in 0..=100 {
            let alpha = i as f64 / 100.0;
            let (w1, w2) = ols_closed_form(alpha).unwrap();
            let (o1, o2) = oracle(alpha);
            assert_relative_eq!(w1, o1, epsilon = 1e-12);
            assert_relative_eq!(w2, o2, epsilon = 1e-12);
        }
    }

    #[test]
    fn denominators_keep_their_sign() {
        for i in 0..=1000 {
            let a = i as f64 / 1000.0;
            assert!(-4.0 * a * a + 12.0 * a + 1.0 > 0.0);
            assert!(4.0 * a * a - 12.0 * a - 1.0 < 0.0);
            assert!(ols_closed_form(a).unwrap().1 < 0.0);
        }
        assert!(ols_closed_form(1.5).is_err());
        assert!(ols_closed_form(-0.1).is_err());
    }

    #[test]
    fn minimal_demo_is_finite() {
        let r = ols_bias_demo(2, 0).unwrap();
        assert!(r.ridge_w.iter().chain(&r.bose_theta).all(|x| x.is_finite()));
        assert!(ols_bias_demo(3, 0).is_err());
        assert!(ols_bias_demo(0, 0).is_err());
    }
}
