use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::{sample_unit_sphere, EnvConfig, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::estimation::{gamma, ConfidenceConfig, ConfidenceMode};
use crate::policy::{BosePolicy, SolverConfig};
use crate::SimRng;

use super::coverage::{run_trials, CoverageReport};

/// Estimator coverage: how often `||theta_hat_t - theta||_{Gamma_t}` ever
/// exceeds `gamma_scale * gamma(T)` during a BOSE run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCheck {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub horizon: u64,
    pub delta: f64,
    pub env: EnvKind,
    pub noise_sigma: f64,
    pub trials: usize,
    /// 1 checks the bound; smaller values are negative controls.
    pub gamma_scale: f64,
}

impl ConfidenceCheck {
    pub fn new(env: EnvKind, d: usize, k: usize, horizon: u64, delta: f64, trials: usize) -> Self {
        Self {
            d,
            k,
            horizon,
            delta,
            env,
            noise_sigma: 0.1,
            trials,
            gamma_scale: 1.0,
        }
    }

    pub fn mode(&self) -> ConfidenceMode {
        if self.k == 2 {
            ConfidenceMode::TwoAction
        } else {
            ConfidenceMode::General
        }
    }
}

pub fn check_estimator_confidence(check: &ConfidenceCheck, seed: u64) -> Result<CoverageReport> {
    if check.trials < 50 {
        return Err(Error::InvalidArgument(format!(
            "coverage needs at least 50 trials, got {}",
            check.trials
        )));
    }
    let env_cfg = EnvConfig::new(check.env, check.d, check.k).with_noise(check.noise_sigma);
    // The radius is the same for every trial; a zero horizon still defines it.
    let conf = ConfidenceConfig::new(check.horizon.max(1), env_cfg.d, check.delta, check.mode())?;
    let outcomes = run_trials(check.trials, seed, |rng| {
        let mut env = Environment::new(env_cfg, rng.random())?;
        let mut policy = BosePolicy::new(conf, SolverConfig::default())?
            .with_feature_bound(env.feature_bound())?;
        let radius = check.gamma_scale * gamma(&conf, policy.lambda());
        let theta = env.theta().clone();
        if policy.estimator().error_norm(&theta) > radius {
            return Ok(true);
        }
        for t in 0..check.horizon {
            let outcome = env.sample_context(t)?;
            let (action, dist) = policy.choose(&outcome.context, rng)?;
            policy.learn(&outcome.context, action, &dist, outcome.reward(action))?;
            if policy.estimator().error_norm(&theta) > radius {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    CoverageReport::new(
        check.trials,
        outcomes.iter().filter(|&&v| v).count(),
        check.delta,
    )
}

/// How `zeta_t` is chosen. Every rule is fixed before `Z_t` is drawn, so `Z_t`
/// and `zeta_t` are conditionally independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaRule {
    Zero,
    Constant,
    /// `M * sign(<S_{t-1}, u_t>)`: pushes the sum along its current direction.
    Adaptive,
}

/// Self-normalized tail check. `Q = M^2 lambda_q I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfNormalizedCheck {
    pub d: usize,
    pub horizon: usize,
    pub m_bound: f64,
    pub lambda_q: f64,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub zeta: ZetaRule,
    /// 1 checks the bound; smaller values are negative controls.
    pub threshold_scale: f64,
}

impl SelfNormalizedCheck {
    pub fn new(d: usize, horizon: usize, trials: usize) -> Self {
        Self {
            d,
            horizon,
            m_bound: 3.0,
            lambda_q: 1.0,
            deltas: vec![0.5, 0.1, 0.01],
            trials,
            zeta: ZetaRule::Adaptive,
            threshold_scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.horizon == 0 || self.trials == 0 {
            return Err(Error::InvalidArgument(
                "d, horizon and trials must be positive".into(),
            ));
        }
        if !(self.m_bound > 0.0 && self.lambda_q > 0.0) {
            return Err(Error::InvalidArgument(
                "M and lambda_q must be positive".into(),
            ));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::InvalidArgument(
                "every delta must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// How the increments `Z_t` are drawn given a predictable direction `u_t`.
#[derive(Debug, Clone, Copy)]
enum Increment {
    /// `s u` with a Rademacher sign `s`.
    Symmetric,
    /// `(s + shift) u`: neither symmetric nor centered.
    Shifted(f64),
    /// `a u` with probability `p`, else `-b u`, where `a p = b (1 - p)` and
    /// the larger of `a`, `b` is one.
    Skewed(f64),
}

fn skewed_values(p: f64) -> (f64, f64) {
    if p >= 0.5 {
        ((1.0 - p) / p, 1.0)
    } else {
        (1.0, p / (1.0 - p))
    }
}

impl Increment {
    fn draw(self, u: &DVector<f64>, rng: &mut SimRng) -> DVector<f64> {
        match self {
            Increment::Symmetric => u * rademacher(rng),
            Increment::Shifted(shift) => u * (rademacher(rng) + shift),
            Increment::Skewed(p) => {
                let (a, b) = skewed_values(p);
                if rng.random::<f64>() < p {
                    u * a
                } else {
                    u * -b
                }
            }
        }
    }

    /// `E[Z Z^T | past] = second_moment * u u^T`.
    fn second_moment(self) -> f64 {
        match self {
            Increment::Symmetric => 1.0,
            Increment::Shifted(shift) => 1.0 + shift * shift,
            Increment::Skewed(p) => {
                let (a, b) = skewed_values(p);
                p * a * a + (1.0 - p) * b * b
            }
        }
    }
}

fn rademacher(rng: &mut SimRng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Final-time statistic: `||S||^2_{N^{-1}}` and `ln det N - ln det Q`.
fn self_normalized_statistic(
    cfg: &SelfNormalizedCheck,
    increment: Increment,
    with_population: bool,
    rng: &mut SimRng,
) -> Result<(f64, f64)> {
    let d = cfg.d;
    let m2 = cfg.m_bound * cfg.m_bound;
    let mut sum = DVector::zeros(d);
    let mut empirical = DMatrix::zeros(d, d);
    let mut population = DMatrix::zeros(d, d);
    for _ in 0..cfg.horizon {
        let u = sample_unit_sphere(d, rng);
        let zeta = match cfg.zeta {
            ZetaRule::Zero => 0.0,
            ZetaRule::Constant => cfg.m_bound,
            ZetaRule::Adaptive => {
                if sum.dot(&u) >= 0.0 {
                    cfg.m_bound
                } else {
                    -cfg.m_bound
                }
            }
        };
        let z = increment.draw(&u, rng);
        sum.axpy(zeta, &z, 1.0);
        empirical.ger(1.0, &z, &z, 1.0);
        if with_population {
            population.ger(increment.second_moment(), &u, &u, 1.0);
        }
    }
    let q = m2 * cfg.lambda_q;
    let mut normalizer = (&empirical + &population) * m2;
    for i in 0..d {
        normalizer[(i, i)] += q;
    }
    let chol = Cholesky::new(normalizer).ok_or(Error::NotPositiveDefinite)?;
    let lhs = sum.dot(&chol.solve(&sum));
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|x| x.ln())
            .sum::<f64>();
    Ok((lhs, log_det - d as f64 * q.ln()))
}

fn self_normalized_reports(
    cfg: &SelfNormalizedCheck,
    increment: Increment,
    with_population: bool,
    seed: u64,
) -> Result<Vec<CoverageReport>> {
    cfg.validate()?;
    let stats = run_trials(cfg.trials, seed, |rng| {
        self_normalized_statistic(cfg, increment, with_population, rng)
    })?;
    cfg.deltas
        .iter()
        .map(|&delta| {
            let violations = stats
                .iter()
                .filter(|(lhs, log_ratio)| {
                    let threshold = 2.0 * (1.0 / delta).ln() + log_ratio;
                    *lhs >= cfg.threshold_scale * threshold
                })
                .count();
            CoverageReport::new(cfg.trials, violations, delta)
        })
        .collect()
}

/// Symmetric increments, normalizer `Q + M^2 Sigma_hat`. One report per delta.
pub fn check_self_normalized_symmetric(
    cfg: &SelfNormalizedCheck,
    seed: u64,
) -> Result<Vec<CoverageReport>> {
    self_normalized_reports(cfg, Increment::Symmetric, false, seed)
}

/// The symmetric bound applied to shifted increments. No guarantee applies;
/// the rates are for inspection only.
pub fn check_self_normalized_shifted(
    cfg: &SelfNormalizedCheck,
    shift: f64,
    seed: u64,
) -> Result<Vec<CoverageReport>> {
    self_normalized_reports(cfg, Increment::Shifted(shift), false, seed)
}

/// Centered but skewed two-point increments (`p` is the probability of the
/// small positive value), normalizer `Q + M^2 (Sigma_hat + Sigma)`.
pub fn check_self_normalized_general(
    cfg: &SelfNormalizedCheck,
    p: f64,
    seed: u64,
) -> Result<Vec<CoverageReport>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must lie in (0, 1), got {p}"
        )));
    }
    self_normalized_reports(cfg, Increment::Skewed(p), true, seed)
}

/// Checks `v^T Sigma v <= 2 v^T Sigma_hat v + 9 d ln(9 n) + 8 ln(2/delta)` along
/// random unit directions, for Rademacher-coordinate `X_i / sqrt(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreedmanCheck {
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    pub directions: usize,
    /// Negative control: compare against `2 v^T Sigma_hat v` alone.
    pub drop_additive: bool,
}

impl FreedmanCheck {
    pub fn new(d: usize, n: usize, delta: f64, trials: usize) -> Self {
        Self {
            d,
            n,
            delta,
            trials,
            directions: 100,
            drop_additive: false,
        }
    }

    pub fn additive_term(&self) -> f64 {
        let (d, n) = (self.d as f64, self.n as f64);
        9.0 * d * (9.0 * n).ln() + 8.0 * (2.0 / self.delta).ln()
    }
}

pub fn check_matrix_freedman(cfg: &FreedmanCheck, seed: u64) -> Result<CoverageReport> {
    if cfg.d == 0 || cfg.n == 0 || cfg.trials == 0 || cfg.directions == 0 {
        return Err(Error::InvalidArgument(
            "d, n, trials and directions must be positive".into(),
        ));
    }
    let d = cfg.d;
    let scale = 1.0 / (d as f64).sqrt();
    // E[X X^T] = I / d for every step.
    let population = cfg.n as f64 / d as f64;
    let additive = if cfg.drop_additive {
        0.0
    } else {
        cfg.additive_term()
    };
    let outcomes = run_trials(cfg.trials, seed, |rng| {
        let mut empirical = DMatrix::zeros(d, d);
        for _ in 0..cfg.n {
            let x = DVector::from_fn(d, |_, _| rademacher(rng) * scale);
            empirical.ger(1.0, &x, &x, 1.0);
        }
        let violated = (0..cfg.directions).any(|_| {
            let v = sample_unit_sphere(d, rng);
            population > 2.0 * v.dot(&(&empirical * &v)) + additive
        });
        Ok(violated)
    })?;
    CoverageReport::new(
        cfg.trials,
        outcomes.iter().filter(|&&v| v).count(),
        cfg.delta,
    )
}
