//! Comparison policies built on plain (uncentered) ridge regression.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{check_norm, check_vector, mahalanobis, validate_bound, RegularizedGram};
use crate::policy::Context;

/// `V = lambda' I + sum z z^T`, `b = sum z r`, `theta = V^{-1} b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    gram: RegularizedGram,
    b: DVector<f64>,
    theta: DVector<f64>,
    feature_bound: f64,
}

impl RidgeState {
    pub fn new(dim: usize, lambda_prime: f64) -> Result<Self> {
        Ok(Self {
            gram: RegularizedGram::new(dim, lambda_prime)?,
            b: DVector::zeros(dim),
            theta: DVector::zeros(dim),
            feature_bound: 1.0,
        })
    }

    pub fn with_feature_bound(mut self, bound: f64) -> Result<Self> {
        self.feature_bound = validate_bound(bound)?;
        Ok(self)
    }

    pub fn gram(&self) -> &RegularizedGram {
        &self.gram
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lambda_prime(&self) -> f64 {
        self.gram.lambda()
    }

    pub fn learn(&mut self, z: &DVector<f64>, reward: f64) -> Result<()> {
        check_vector(z, self.gram.dim(), "chosen feature")?;
        check_norm(z, self.feature_bound, "chosen feature")?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        self.gram.rank_one_update(z);
        self.b.axpy(reward, z, 1.0);
        self.theta = self.gram.inverse() * &self.b;
        Ok(())
    }
}

fn greedy(theta: &DVector<f64>, ctx: &Context) -> usize {
    argmax(ctx.features().iter().map(|z| theta.dot(z)))
}

/// First index of the maximum.
fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Theoretical confidence width for the optimistic baseline after the state's
/// updates so far, at failure probability `delta`.
pub fn oful_beta(state: &RidgeState, delta: f64) -> f64 {
    let d = state.gram.dim() as f64;
    let lp = state.lambda_prime();
    let t = state.gram.update_count() as f64;
    lp.sqrt() + (2.0 * (1.0 / delta).ln() + d * (1.0 + t / (d * lp)).ln()).sqrt()
}

/// `argmax_a <theta, z_a> + beta ||z_a||_{V^{-1}}`, lowest index on ties.
pub fn oful_choose(state: &RidgeState, ctx: &Context, beta: f64) -> usize {
    argmax(
        ctx.features()
            .iter()
            .map(|z| state.theta.dot(z) + beta * mahalanobis(z, &state.gram)),
    )
}

/// Greedy on a draw from `N(theta, v2 V^{-1})`.
pub fn thompson_choose<R: Rng + ?Sized>(
    state: &RidgeState,
    ctx: &Context,
    v2: f64,
    rng: &mut R,
) -> Result<usize> {
    if v2 == 0.0 {
        return Ok(greedy(&state.theta, ctx));
    }
    let cov = state.gram.inverse() * v2;
    let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
    let dim = state.gram.dim();
    let normal = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sample = &state.theta + chol.l() * normal;
    Ok(greedy(&sample, ctx))
}

/// Uniform with probability `eps`, greedy otherwise.
pub fn epsgreedy_choose<R: Rng + ?Sized>(
    state: &RidgeState,
    ctx: &Context,
    eps: f64,
    rng: &mut R,
) -> usize {
    let u: f64 = rng.random();
    if u < eps {
        rng.random_range(0..ctx.num_actions())
    } else {
        greedy(&state.theta, ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Oful,
    Thompson,
    #[serde(rename = "epsgreedy")]
    EpsGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// Confidence width, prior variance, or exploration probability.
    pub explore_param: f64,
    pub lambda_prime: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, explore_param: f64) -> Self {
        Self {
            kind,
            explore_param,
            lambda_prime: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.explore_param.is_finite() && self.explore_param >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "explore parameter must be nonnegative, got {}",
                self.explore_param
            )));
        }
        if self.kind == BaselineKind::EpsGreedy && self.explore_param > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, 1], got {}",
                self.explore_param
            )));
        }
        if !(self.lambda_prime.is_finite() && self.lambda_prime > 0.0) {
            return Err(Error::InvalidArgument("lambda' must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePolicy {
    cfg: BaselineConfig,
    state: RidgeState,
}

impl BaselinePolicy {
    pub fn new(cfg: BaselineConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: RidgeState::new(dim, cfg.lambda_prime)?,
            cfg,
        })
    }

    pub fn with_feature_bound(mut self, bound: f64) -> Result<Self> {
        self.state = self.state.with_feature_bound(bound)?;
        Ok(self)
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RidgeState {
        &self.state
    }

    /// Whether the action is a function of the history alone.
    pub fn is_deterministic(&self) -> bool {
        match self.cfg.kind {
            BaselineKind::Oful => true,
            BaselineKind::Thompson | BaselineKind::EpsGreedy => self.cfg.explore_param == 0.0,
        }
    }

    pub fn choose<R: Rng + ?Sized>(&self, ctx: &Context, rng: &mut R) -> Result<usize> {
        if ctx.dim() != self.state.gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state.gram.dim(),
                got: ctx.dim(),
            });
        }
        let p = self.cfg.explore_param;
        Ok(match self.cfg.kind {
            BaselineKind::Oful => oful_choose(&self.state, ctx, p),
            BaselineKind::Thompson => thompson_choose(&self.state, ctx, p, rng)?,
            BaselineKind::EpsGreedy => epsgreedy_choose(&self.state, ctx, p, rng),
        })
    }

    pub fn learn(&mut self, ctx: &Context, action: usize, reward: f64) -> Result<()> {
        if action >= ctx.num_actions() {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} actions",
                ctx.num_actions()
            )));
        }
        self.state.learn(ctx.feature(action), reward)
    }
}
