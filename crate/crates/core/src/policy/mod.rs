//! The orthogonalized elimination policy.
//!
//! Each round the policy
//!
//! 1. drops every action that some other action beats by more than the
//!    confidence width, measured in the `Gamma^{-1}` norm of their difference;
//! 2. picks a distribution over the survivors whose covariance dominates each
//!    survivor's squared distance from the mean (see [`exploration`]);
//! 3. samples from it and updates the estimator with the feature centered at
//!    the distribution's mean.

pub mod exploration;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::validate_bound;
use crate::estimation::{
    check_norm, default_lambda, gamma, mahalanobis, ConfidenceConfig, EstimatorState,
    OrthogonalizedEstimator, RegularizedGram,
};

pub use exploration::{
    constraint_violation, solve_exploration_distribution, ExplorationDistribution, SolveStatus,
    SolverConfig,
};

/// One round's action set: a feature vector per action.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    features: Vec<DVector<f64>>,
    round: u64,
    feature_bound: f64,
}

impl Context {
    pub fn new(features: Vec<DVector<f64>>, round: u64) -> Result<Self> {
        Self::with_feature_bound(features, round, 1.0)
    }

    /// Like [`Context::new`] but allows feature norms up to `bound`.
    pub fn with_feature_bound(features: Vec<DVector<f64>>, round: u64, bound: f64) -> Result<Self> {
        let bound = validate_bound(bound)?;
        let Some(first) = features.first() else {
            return Err(Error::InvalidArgument("context has no actions".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "features must have dimension >= 1".into(),
            ));
        }
        for z in &features {
            if z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: z.len(),
                });
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("context feature"));
            }
            check_norm(z, bound, "context feature")?;
        }
        Ok(Self {
            features,
            round,
            feature_bound: bound,
        })
    }

    pub fn features(&self) -> &[DVector<f64>] {
        &self.features
    }

    pub fn feature(&self, action: usize) -> &DVector<f64> {
        &self.features[action]
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn num_actions(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn round(&self) -> u64 {
        self.round
    }
}

/// Actions `a` with `<theta_hat, z_b - z_a> <= gamma ||z_a - z_b||_{Gamma^{-1}}`
/// for every `b`, in increasing index order. Equality survives.
pub fn filter_actions(
    ctx: &Context,
    theta_hat: &DVector<f64>,
    gram: &RegularizedGram,
    gamma_value: f64,
) -> Vec<usize> {
    let k = ctx.num_actions();
    let scores: Vec<f64> = ctx.features.iter().map(|z| theta_hat.dot(z)).collect();
    (0..k)
        .filter(|&a| {
            (0..k).all(|b| {
                let lead = scores[b] - scores[a];
                if lead <= 0.0 {
                    return true;
                }
                let diff = &ctx.features[a] - &ctx.features[b];
                lead <= gamma_value * mahalanobis(&diff, gram)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BosePolicy {
    estimator: OrthogonalizedEstimator,
    cfg: ConfidenceConfig,
    gamma_value: f64,
    width: f64,
    solver: SolverConfig,
}

impl BosePolicy {
    pub fn new(cfg: ConfidenceConfig, solver: SolverConfig) -> Result<Self> {
        solver.validate()?;
        let lambda = default_lambda(&cfg);
        let gamma_value = gamma(&cfg, lambda);
        Ok(Self {
            estimator: OrthogonalizedEstimator::new(cfg.dim(), lambda)?,
            cfg,
            gamma_value,
            width: gamma_value,
            solver,
        })
    }

    /// Scales the theoretical radius, which stays available as
    /// [`BosePolicy::gamma_value`].
    pub fn with_gamma_multiplier(self, multiplier: f64) -> Result<Self> {
        let width = self.gamma_value * multiplier;
        self.with_width(width)
    }

    /// Sets the filter's confidence width outright.
    pub fn with_width(mut self, width: f64) -> Result<Self> {
        if !(width.is_finite() && width >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence width must be nonnegative, got {width}"
            )));
        }
        self.width = width;
        Ok(self)
    }

    /// See [`OrthogonalizedEstimator::with_feature_bound`].
    pub fn with_feature_bound(mut self, bound: f64) -> Result<Self> {
        self.estimator = self.estimator.with_feature_bound(bound)?;
        Ok(self)
    }

    pub fn estimator(&self) -> &OrthogonalizedEstimator {
        &self.estimator
    }

    pub fn config(&self) -> &ConfidenceConfig {
        &self.cfg
    }

    pub fn lambda(&self) -> f64 {
        self.estimator.gram().lambda()
    }

    pub fn gamma_value(&self) -> f64 {
        self.gamma_value
    }

    /// The width the filter actually uses.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    /// Filters, solves for the exploration distribution, and samples an action
    /// with a single uniform draw from `rng`.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        ctx: &Context,
        rng: &mut R,
    ) -> Result<(usize, ExplorationDistribution)> {
        if ctx.dim() != self.cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim(),
                got: ctx.dim(),
            });
        }
        let u: f64 = rng.random();
        let survivors = filter_actions(
            ctx,
            self.estimator.theta_hat(),
            self.estimator.gram(),
            self.width,
        );
        let dist = if let [only] = survivors[..] {
            ExplorationDistribution::point_mass(only, ctx.feature(only))
        } else {
            let features: Vec<DVector<f64>> =
                survivors.iter().map(|&a| ctx.feature(a).clone()).collect();
            let mut dist =
                solve_exploration_distribution(&features, self.estimator.gram(), &self.solver)?;
            dist.support = survivors;
            if !dist.is_feasible() {
                log::warn!(
                    "round {}: exploration program not solved (violation {:.3e} after {} iterations); sampling best iterate",
                    ctx.round(),
                    dist.max_violation,
                    dist.iterations
                );
            }
            dist
        };
        let action = dist.support[dist.sample_index(u)];
        Ok((action, dist))
    }

    /// Updates the estimator with `z_action - dist.mu`.
    pub fn learn(
        &mut self,
        ctx: &Context,
        action: usize,
        dist: &ExplorationDistribution,
        reward: f64,
    ) -> Result<()> {
        if action >= ctx.num_actions() {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} actions",
                ctx.num_actions()
            )));
        }
        self.estimator.update(ctx.feature(action), &dist.mu, reward)
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            confidence: self.cfg,
            lambda: self.lambda(),
            gamma: self.gamma_value,
            width: self.width,
            solver: self.solver,
            estimator: self.estimator.to_state(),
        }
    }

    pub fn from_snapshot(snapshot: PolicySnapshot) -> Result<Self> {
        let estimator = OrthogonalizedEstimator::from_state(snapshot.estimator)?;
        let policy = Self {
            gamma_value: gamma(&snapshot.confidence, estimator.gram().lambda()),
            estimator,
            cfg: snapshot.confidence,
            width: 0.0,
            solver: snapshot.solver,
        };
        policy.with_width(snapshot.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub confidence: ConfidenceConfig,
    pub lambda: f64,
    pub gamma: f64,
    pub width: f64,
    pub solver: SolverConfig,
    pub estimator: EstimatorState,
}
