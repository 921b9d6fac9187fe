//! Orthogonalized ridge estimation.
//!
//! The estimator regresses rewards on *centered* features `z - mu`, where `mu`
//! is the mean feature under the learner's own sampling distribution. Any
//! action-independent term in the reward multiplies a mean-zero vector and
//! drops out of the moment equations, so the confounder never biases the
//! fitted parameter.
//!
//! [`RegularizedGram`] keeps `lambda * I + sum Z Z^T` together with its
//! inverse. The inverse is maintained by the Sherman-Morrison identity and
//! rebuilt from a Cholesky factorization every [`RECOMPUTE_EVERY`] updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature vectors may exceed the unit ball by this much before being rejected.
pub const NORM_TOLERANCE: f64 = 1.0 + 1e-9;

/// Full inverse recomputation cadence, in updates.
pub const RECOMPUTE_EVERY: u64 = 512;

/// Which confidence-radius recipe to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// Any number of actions.
    General,
    /// Exactly two actions, where the centered feature is a symmetric sign flip.
    TwoAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    horizon: u64,
    dim: usize,
    delta: f64,
    mode: ConfidenceMode,
    lambda_override: Option<f64>,
}

impl ConfidenceConfig {
    pub fn new(horizon: u64, dim: usize, delta: f64, mode: ConfidenceMode) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            horizon,
            dim,
            delta,
            mode,
            lambda_override: None,
        })
    }

    /// Pins the ridge weight instead of deriving it from the horizon.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        self.lambda_override = Some(lambda);
        Ok(self)
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mode(&self) -> ConfidenceMode {
        self.mode
    }

    pub fn lambda_override(&self) -> Option<f64> {
        self.lambda_override
    }
}

/// Ridge weight for the orthogonalized estimator.
///
/// In general mode this is `4 d ln(9T) + 8 ln(4T/delta)`, large enough that the
/// empirical and population covariances of the centered features can be
/// compared. The two-action recipe only needs a constant, and uses 1.
pub fn default_lambda(cfg: &ConfidenceConfig) -> f64 {
    if let Some(lambda) = cfg.lambda_override {
        return lambda;
    }
    match cfg.mode {
        ConfidenceMode::General => {
            let t = cfg.horizon as f64;
            let d = cfg.dim as f64;
            4.0 * d * (9.0 * t).ln() + 8.0 * (4.0 * t / cfg.delta).ln()
        }
        ConfidenceMode::TwoAction => 1.0,
    }
}

/// Confidence radius `gamma(T)` for `||theta_hat - theta||_Gamma`.
pub fn gamma(cfg: &ConfidenceConfig, lambda: f64) -> f64 {
    let t = cfg.horizon as f64;
    let d = cfg.dim as f64;
    let delta = cfg.delta;
    let radicand = match cfg.mode {
        ConfidenceMode::General => {
            27.0 * d * (1.0 + 2.0 * t / d).ln() + 54.0 * (4.0 * t / delta).ln()
        }
        ConfidenceMode::TwoAction => {
            9.0 * d * (1.0 + t / (d * lambda)).ln() + 18.0 * (t / delta).ln()
        }
    };
    lambda.sqrt() + radicand.max(0.0).sqrt()
}

/// `lambda * I + sum_t Z_t Z_t^T` with a cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedGram {
    dim: usize,
    lambda: f64,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    update_count: u64,
}

impl RegularizedGram {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            dim,
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            update_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Adds `z z^T`. The caller is responsible for validating `z`.
    pub fn rank_one_update(&mut self, z: &DVector<f64>) {
        debug_assert_eq!(z.len(), self.dim);
        self.gram.ger(1.0, z, z, 1.0);
        self.update_count += 1;
        if self.update_count.is_multiple_of(RECOMPUTE_EVERY) {
            symmetrize(&mut self.gram);
            if self.recompute_inverse().is_ok() {
                return;
            }
        }
        let u = &self.gram_inv * z;
        let denom = 1.0 + z.dot(&u);
        self.gram_inv.ger(-1.0 / denom, &u, &u, 1.0);
        symmetrize(&mut self.gram);
        symmetrize(&mut self.gram_inv);
    }

    /// Rebuilds the cached inverse from a Cholesky factorization.
    pub fn recompute_inverse(&mut self) -> Result<()> {
        let chol = self.cholesky()?;
        let mut inv = chol.inverse();
        symmetrize(&mut inv);
        self.gram_inv = inv;
        Ok(())
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.gram.clone()).ok_or(Error::NotPositiveDefinite)
    }

    /// `v^T Gamma^{-1} v`.
    pub fn inv_quadratic(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.gram_inv * v))
    }

    /// `v^T Gamma v`.
    pub fn quadratic(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.gram * v))
    }

    /// `||Gamma Gamma^{-1} - I||_max`.
    pub fn inverse_residual(&self) -> f64 {
        let prod = &self.gram * &self.gram_inv;
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        worst
    }

    pub fn log_det(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        Ok(2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|x| x.ln())
                .sum::<f64>())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.gram
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Log of the `det(Gamma) <= (lambda + n L^2 / d)^d` ceiling with `L = 2`.
    pub fn log_det_ceiling(&self) -> f64 {
        let d = self.dim as f64;
        d * (self.lambda + self.update_count as f64 * 4.0 / d).ln()
    }
}

/// `sqrt(v^T Gamma^{-1} v)`.
pub fn mahalanobis(v: &DVector<f64>, gram: &RegularizedGram) -> f64 {
    gram.inv_quadratic(v).max(0.0).sqrt()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn check_vector(v: &DVector<f64>, dim: usize, what: &'static str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Rejects `v` when `||v|| > bound` beyond the relative tolerance.
pub(crate) fn check_norm(v: &DVector<f64>, bound: f64, what: &'static str) -> Result<()> {
    let norm = v.norm();
    if norm > bound * NORM_TOLERANCE {
        return Err(Error::NormViolation { what, norm });
    }
    Ok(())
}

/// Ridge regression on policy-centered features.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalizedEstimator {
    gram: RegularizedGram,
    moment: DVector<f64>,
    theta_hat: DVector<f64>,
    feature_bound: f64,
}

pub(crate) fn validate_bound(bound: f64) -> Result<f64> {
    if bound.is_finite() && bound > 0.0 {
        Ok(bound)
    } else {
        Err(Error::InvalidArgument(format!(
            "feature bound must be positive, got {bound}"
        )))
    }
}

impl OrthogonalizedEstimator {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        Ok(Self {
            gram: RegularizedGram::new(dim, lambda)?,
            moment: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
            feature_bound: 1.0,
        })
    }

    /// Accepts features (and policy means) up to norm `bound` instead of 1.
    pub fn with_feature_bound(mut self, bound: f64) -> Result<Self> {
        self.feature_bound = validate_bound(bound)?;
        Ok(self)
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn dim(&self) -> usize {
        self.gram.dim
    }

    pub fn gram(&self) -> &RegularizedGram {
        &self.gram
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Folds in one round: `Gamma += Z Z^T`, `S += Z r` with `Z = z_chosen - mu`.
    pub fn update(
        &mut self,
        z_chosen: &DVector<f64>,
        mu: &DVector<f64>,
        reward: f64,
    ) -> Result<()> {
        let dim = self.dim();
        check_vector(z_chosen, dim, "chosen feature")?;
        check_vector(mu, dim, "policy mean")?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        check_norm(z_chosen, self.feature_bound, "chosen feature")?;
        check_norm(mu, self.feature_bound, "policy mean")?;

        let centered = z_chosen - mu;
        self.gram.rank_one_update(&centered);
        self.moment.axpy(reward, &centered, 1.0);
        self.theta_hat = self.gram.inverse() * &self.moment;
        Ok(())
    }

    /// `||theta_hat - theta||_Gamma`, the quantity the confidence radius bounds.
    pub fn error_norm(&self, theta: &DVector<f64>) -> f64 {
        let diff = &self.theta_hat - theta;
        self.gram.quadratic(&diff).max(0.0).sqrt()
    }

    pub fn to_state(&self) -> EstimatorState {
        EstimatorState {
            dim: self.dim(),
            lambda: self.gram.lambda,
            gram: row_major(&self.gram.gram),
            moment: self.moment.iter().copied().collect(),
            update_count: self.gram.update_count,
            gram_inv: Some(row_major(&self.gram.gram_inv)),
            feature_bound: self.feature_bound,
        }
    }

    pub fn from_state(state: EstimatorState) -> Result<Self> {
        let EstimatorState {
            dim,
            lambda,
            gram,
            moment,
            update_count,
            gram_inv,
            feature_bound,
        } = state;
        let mut base = RegularizedGram::new(dim, lambda)?;
        if gram.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: gram.len(),
            });
        }
        if moment.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: moment.len(),
            });
        }
        if gram.iter().chain(moment.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("estimator state"));
        }
        base.gram = DMatrix::from_row_slice(dim, dim, &gram);
        base.update_count = update_count;
        match gram_inv {
            Some(inv) if inv.len() == dim * dim => {
                base.gram_inv = DMatrix::from_row_slice(dim, dim, &inv);
            }
            Some(inv) => {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    got: inv.len(),
                })
            }
            None => base.recompute_inverse()?,
        }
        let moment = DVector::from_vec(moment);
        let theta_hat = base.inverse() * &moment;
        Ok(Self {
            gram: base,
            moment,
            theta_hat,
            feature_bound: validate_bound(feature_bound)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_state())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_state(serde_json::from_str(text)?)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Serialized estimator. `gram` and `gram_inv` are row-major.
///
/// `gram_inv` is optional on input; when absent it is rebuilt from `gram`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub dim: usize,
    pub lambda: f64,
    pub gram: Vec<f64>,
    pub moment: Vec<f64>,
    pub update_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram_inv: Option<Vec<f64>>,
    #[serde(default = "unit_bound")]
    pub feature_bound: f64,
}

fn unit_bound() -> f64 {
    1.0
}
