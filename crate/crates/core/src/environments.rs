//! Reward generators: stochastic sphere worlds, a confounded variant that
//! cancels the best mean every round, an adversary that punishes any
//! deterministic learner, and a stream that biases plain least squares.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Context;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnvKind {
    LinearSphere,
    ConfoundedSphere,
    ConfoundedOrthant,
    DeterminismAdversary,
    OlsBias,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::LinearSphere => "linear_sphere",
            EnvKind::ConfoundedSphere => "confounded_sphere",
            EnvKind::ConfoundedOrthant => "confounded_orthant",
            EnvKind::DeterminismAdversary => "determinism_adversary",
            EnvKind::OlsBias => "ols_bias",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            EnvKind::LinearSphere,
            EnvKind::ConfoundedSphere,
            EnvKind::ConfoundedOrthant,
            EnvKind::DeterminismAdversary,
            EnvKind::OlsBias,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s) || format!("{k:?}").eq_ignore_ascii_case(s))
    }
}

fn default_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub d: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// For the adversary: which basis vector is `theta`.
    #[serde(default)]
    pub theta_index: usize,
}

impl EnvConfig {
    pub fn new(kind: EnvKind, d: usize, k: usize) -> Self {
        let (d, k) = match kind {
            EnvKind::DeterminismAdversary | EnvKind::OlsBias => (2, 2),
            _ => (d, k),
        };
        let noise_sigma = match kind {
            EnvKind::DeterminismAdversary | EnvKind::OlsBias => 0.0,
            _ => default_sigma(),
        };
        Self {
            kind,
            d,
            k,
            noise_sigma,
            theta_index: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_theta_index(mut self, index: usize) -> Self {
        self.theta_index = index;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::Config(format!(
                "d and K must be positive, got d={} K={}",
                self.d, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise_sigma must lie in [0, 1], got {}",
                self.noise_sigma
            )));
        }
        match self.kind {
            EnvKind::DeterminismAdversary | EnvKind::OlsBias => {
                if self.d != 2 || self.k != 2 {
                    return Err(Error::Config(format!(
                        "{} requires d=2 and K=2, got d={} K={}",
                        self.kind.name(),
                        self.d,
                        self.k
                    )));
                }
                if self.noise_sigma != 0.0 {
                    return Err(Error::Config(format!("{} is noiseless", self.kind.name())));
                }
                if self.kind == EnvKind::DeterminismAdversary && self.theta_index > 1 {
                    return Err(Error::Config(format!(
                        "theta_index must be 0 or 1, got {}",
                        self.theta_index
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// The shared offset added to every action's reward in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Confounder {
    Constant(f64),
    /// `-1` if the played action is `best`, else `0`.
    PenalizeBest {
        best: usize,
    },
}

impl Confounder {
    pub fn value(&self, action: usize) -> f64 {
        match *self {
            Confounder::Constant(f) => f,
            Confounder::PenalizeBest { best } => {
                if action == best {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Everything revealed (or revealable) in a single round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub context: Context,
    pub per_action_mean: Vec<f64>,
    pub optimal_value: f64,
    pub confounder: Confounder,
    pub noise: f64,
}

impl RoundOutcome {
    fn new(context: Context, theta: &DVector<f64>, confounder: Confounder, noise: f64) -> Self {
        let per_action_mean: Vec<f64> = context.features().iter().map(|z| theta.dot(z)).collect();
        let optimal_value = per_action_mean
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            context,
            per_action_mean,
            optimal_value,
            confounder,
            noise,
        }
    }

    pub fn reward(&self, action: usize) -> f64 {
        self.per_action_mean[action] + self.confounder.value(action) + self.noise
    }

    /// Lowest index attaining the best mean.
    pub fn optimal_action(&self) -> usize {
        self.per_action_mean
            .iter()
            .position(|&m| m == self.optimal_value)
            .unwrap_or(0)
    }

    pub fn instantaneous_regret(&self, action: usize) -> Result<f64> {
        if action >= self.per_action_mean.len() {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} actions",
                self.per_action_mean.len()
            )));
        }
        Ok(self.optimal_value - self.per_action_mean[action])
    }
}

pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 1e-300 {
            return g / n;
        }
    }
}

/// Uniform on the part of the sphere with nonnegative coordinates.
pub fn sample_positive_orthant_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    sample_unit_sphere(d, rng).abs()
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    theta: DVector<f64>,
    rng: SimRng,
}

impl Environment {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let theta = match cfg.kind {
            EnvKind::DeterminismAdversary => {
                let mut t = DVector::zeros(2);
                t[cfg.theta_index] = 1.0;
                t
            }
            EnvKind::OlsBias => DVector::from_row_slice(&[0.0, 1.0]),
            _ => sample_unit_sphere(cfg.d, &mut rng),
        };
        Ok(Self { cfg, theta, rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn kind(&self) -> EnvKind {
        self.cfg.kind
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Largest feature norm this environment emits: `(1, 1)` in the
    /// least-squares stream sits outside the unit ball.
    pub fn feature_bound(&self) -> f64 {
        match self.cfg.kind {
            EnvKind::OlsBias => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    /// The adversary reads the action before choosing `f_t`, which is only a
    /// fair game against learners whose choice is a function of the history.
    pub fn requires_deterministic_learner(&self) -> bool {
        self.cfg.kind == EnvKind::DeterminismAdversary
    }

    pub fn sample_context(&mut self, round: u64) -> Result<RoundOutcome> {
        let (d, k) = (self.cfg.d, self.cfg.k);
        let (features, confounder) = match self.cfg.kind {
            EnvKind::LinearSphere => {
                let f = (0..k)
                    .map(|_| sample_unit_sphere(d, &mut self.rng))
                    .collect();
                (f, None)
            }
            EnvKind::ConfoundedSphere => {
                let f = (0..k)
                    .map(|_| sample_unit_sphere(d, &mut self.rng))
                    .collect();
                (f, Some(()))
            }
            EnvKind::ConfoundedOrthant => {
                let f = (0..k)
                    .map(|_| sample_positive_orthant_sphere(d, &mut self.rng))
                    .collect();
                (f, Some(()))
            }
            EnvKind::DeterminismAdversary => {
                let ctx = Context::new(
                    vec![
                        DVector::from_row_slice(&[1.0, 0.0]),
                        DVector::from_row_slice(&[0.0, 1.0]),
                    ],
                    round,
                )?;
                let best = self.cfg.theta_index;
                return Ok(RoundOutcome::new(
                    ctx,
                    &self.theta,
                    Confounder::PenalizeBest { best },
                    0.0,
                ));
            }
            EnvKind::OlsBias => {
                let (features, f) = if round.is_multiple_of(2) {
                    (
                        vec![
                            DVector::from_row_slice(&[1.0, 1.0]),
                            DVector::from_row_slice(&[1.0, 1.0 / 3.0]),
                        ],
                        -1.0,
                    )
                } else {
                    (
                        vec![
                            DVector::from_row_slice(&[1.0, 0.0]),
                            DVector::from_row_slice(&[1.0, 0.0]),
                        ],
                        1.0,
                    )
                };
                let ctx = Context::with_feature_bound(features, round, self.feature_bound())?;
                return Ok(RoundOutcome::new(
                    ctx,
                    &self.theta,
                    Confounder::Constant(f),
                    0.0,
                ));
            }
        };
        let ctx = Context::new(features, round)?;
        let noise = self.draw_noise();
        let mut outcome = RoundOutcome::new(ctx, &self.theta, Confounder::Constant(0.0), noise);
        if confounder.is_some() {
            let f = -outcome.optimal_value;
            debug_assert!(f.abs() <= 1.0 + 1e-9);
            outcome.confounder = Confounder::Constant(f.clamp(-1.0, 1.0));
        }
        Ok(outcome)
    }

    fn draw_noise(&mut self) -> f64 {
        let s = self.cfg.noise_sigma;
        if s == 0.0 {
            0.0
        } else {
            self.rng.random_range(-s..=s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_samples_are_unit() {
        let mut rng = SimRng::seed_from_u64(3);
        for d in 1..8 {
            for _ in 0..200 {
                let z = sample_unit_sphere(d, &mut rng);
                assert!((z.norm() - 1.0).abs() <= 1e-12);
                let o = sample_positive_orthant_sphere(d, &mut rng);
                assert!((o.norm() - 1.0).abs() <= 1e-12);
                assert!(o.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_sign() {
        let mut rng = SimRng::seed_from_u64(4);
        let n = 10_000;
        let plus = (0..n)
            .filter(|_| {
                let z = sample_unit_sphere(1, &mut rng);
                assert_eq!(z[0].abs(), 1.0);
                z[0] > 0.0
            })
            .count();
        assert!((plus as f64 / n as f64 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn confounded_best_action_earns_zero() {
        for kind in [EnvKind::ConfoundedSphere, EnvKind::ConfoundedOrthant] {
            let mut env = Environment::new(EnvConfig::new(kind, 5, 4).with_noise(0.0), 9).unwrap();
            for t in 0..100 {
                let o = env.sample_context(t).unwrap();
                let best = o.optimal_action();
                assert_eq!(o.reward(best), 0.0);
                assert_eq!(o.instantaneous_regret(best).unwrap(), 0.0);
                assert!(o.reward(0) <= 0.0);
            }
        }
    }

    #[test]
    fn confounder_cancels_in_differences() {
        let mut env =
            Environment::new(EnvConfig::new(EnvKind::ConfoundedSphere, 3, 3), 10).unwrap();
        for t in 0..50 {
            let o = env.sample_context(t).unwrap();
            assert!(o.noise.abs() <= 0.1);
            for a in 0..3 {
                for b in 0..3 {
                    let lhs = o.reward(a) - o.reward(b);
                    let rhs = o.per_action_mean[a] - o.per_action_mean[b];
                    assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn adversary_pays_nothing_and_costs_one() {
        for idx in 0..2 {
            let cfg = EnvConfig::new(EnvKind::DeterminismAdversary, 2, 2).with_theta_index(idx);
            let mut env = Environment::new(cfg, 0).unwrap();
            assert!(env.requires_deterministic_learner());
            let o = env.sample_context(0).unwrap();
            assert_eq!(o.reward(0), 0.0);
            assert_eq!(o.reward(1), 0.0);
            assert_eq!(o.instantaneous_regret(1 - idx).unwrap(), 1.0);
            assert_eq!(o.instantaneous_regret(idx).unwrap(), 0.0);
        }
    }

    #[test]
    fn ols_stream_rounds() {
        let mut env = Environment::new(EnvConfig::new(EnvKind::OlsBias, 2, 2), 0).unwrap();
        let even = env.sample_context(0).unwrap();
        assert_eq!(even.per_action_mean, vec![1.0, 1.0 / 3.0]);
        assert_relative_eq!(
            even.instantaneous_regret(1).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(even.reward(0), 0.0);
        let odd = env.sample_context(1).unwrap();
        assert_eq!(odd.per_action_mean, vec![0.0, 0.0]);
        assert_eq!(odd.reward(1), 1.0);
    }

    #[test]
    fn theta_is_seeded() {
        let cfg = EnvConfig::new(EnvKind::LinearSphere, 4, 2);
        let a = Environment::new(cfg, 1).unwrap();
        let b = Environment::new(cfg, 1).unwrap();
        let c = Environment::new(cfg, 2).unwrap();
        assert_eq!(a.theta(), b.theta());
        assert_ne!(a.theta(), c.theta());
        assert!((a.theta().norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bad_configs() {
        let mut c = EnvConfig::new(EnvKind::LinearSphere, 2, 2);
        c.noise_sigma = 1.5;
        assert!(Environment::new(c, 0).is_err());
        let mut c = EnvConfig::new(EnvKind::OlsBias, 2, 2);
        c.d = 3;
        assert!(Environment::new(c, 0).is_err());
        let c = EnvConfig::new(EnvKind::DeterminismAdversary, 2, 2).with_theta_index(2);
        assert!(Environment::new(c, 0).is_err());
        assert!(Environment::new(EnvConfig::new(EnvKind::LinearSphere, 0, 2), 0).is_err());
    }

    #[test]
    fn config_json_names() {
        let c: EnvConfig =
            serde_json::from_str(r#"{"kind":"CONFOUNDED_ORTHANT","d":10,"K":2}"#).unwrap();
        assert_eq!(c.kind, EnvKind::ConfoundedOrthant);
        assert_eq!(c.noise_sigma, 0.1);
        assert_eq!(
            EnvKind::from_name("confounded_sphere"),
            Some(EnvKind::ConfoundedSphere)
        );
        assert_eq!(EnvKind::from_name("OLS_BIAS"), Some(EnvKind::OlsBias));
    }
}
