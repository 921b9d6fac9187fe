//! The exploration-distribution program.
//!
//! Given surviving features `z_1..z_n` and `M = Gamma^{-1}`, find `w` on the
//! simplex with
//!
//! ```text
//! for all i:  ||z_i - mu_w||_M^2  <=  tr(M Cov_w(z))
//! ```
//!
//! Writing `g(w) = tr(M Cov_w(z))`, a concave quadratic in `w`, one finds
//! `d g / d w_i = ||z_i - mu_w||_M^2 - ||mu_w||_M^2`, so the constraint
//! violation `phi(w) = max_i ||z_i - mu_w||_M^2 - g(w)` is exactly the
//! Frank-Wolfe gap of `max_w g(w)`. The gap is never negative (the `w`-average
//! of the left-hand sides equals `g(w)`), and it is zero precisely at the
//! maximizers of `g`: the feasible set is the set of maximizers. Geometrically
//! this is the dual of the minimum enclosing ellipsoid-ball around the `z_i`
//! in the `M` metric; `mu_w` is its center and `g(w)` its squared radius.
//!
//! The solver runs exponentiated-gradient ascent on `g` from the uniform
//! distribution and periodically solves the stationarity conditions exactly
//! on the current support. Small instances fall back to enumerating supports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::RegularizedGram;

/// Supports are enumerated exhaustively only up to this many candidates.
const ENUMERATION_LIMIT: usize = 12;

/// Exact support solves are attempted every this many ascent steps.
const POLISH_EVERY: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps_feas: f64,
    pub max_iters: usize,
    pub step_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_feas: 1e-8,
            max_iters: 10_000,
            step_scale: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_feas > 0.0 && self.eps_feas.is_finite()) {
            return Err(Error::InvalidArgument("eps_feas must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::InvalidArgument("step_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// The iteration budget ran out with `phi > eps_feas`. The distribution is
    /// the best iterate found, never a fabricated feasible one.
    NonConverged,
}

/// A distribution over surviving actions together with the quantities the
/// estimator update needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationDistribution {
    /// Action indices into the round's context.
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
    /// `E_{b ~ pi} z_b`.
    pub mu: DVector<f64>,
    /// `tr(Gamma^{-1} Cov_{b ~ pi}(z_b))`.
    pub cov_trace_term: f64,
    /// `max_a ||z_a - mu||^2_{Gamma^{-1}} - cov_trace_term` over the support.
    pub max_violation: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl ExplorationDistribution {
    pub fn point_mass(action: usize, feature: &DVector<f64>) -> Self {
        Self {
            support: vec![action],
            probs: vec![1.0],
            mu: feature.clone(),
            cov_trace_term: 0.0,
            max_violation: 0.0,
            status: SolveStatus::Converged,
            iterations: 0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Index into `support` selected by the inverse CDF at `u` in `[0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Round-off can leave the total a hair below one.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }
}

/// Pairwise `M`-inner products of the centered features.
struct Problem {
    n: usize,
    gram: DMatrix<f64>,
    diag: DVector<f64>,
    diameter_sq: f64,
}

impl Problem {
    fn new(features: &[DVector<f64>], inv: &DMatrix<f64>) -> Self {
        let n = features.len();
        let dim = features[0].len();
        let mut center = DVector::zeros(dim);
        for z in features {
            center += z;
        }
        center /= n as f64;
        let centered: Vec<DVector<f64>> = features.iter().map(|z| z - &center).collect();
        let images: Vec<DVector<f64>> = centered.iter().map(|y| inv * y).collect();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (centered[i].dot(&images[j]) + centered[j].dot(&images[i]));
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let diag = gram.diagonal();
        let mut diameter_sq = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                diameter_sq = diameter_sq.max(diag[i] + diag[j] - 2.0 * gram[(i, j)]);
            }
        }
        Self {
            n,
            gram,
            diag,
            diameter_sq,
        }
    }

    /// Gradient of `g` and the value `g(w)`.
    fn gradient(&self, w: &DVector<f64>) -> (DVector<f64>, f64) {
        let gw = &self.gram * w;
        let quad = w.dot(&gw);
        let value = w.dot(&self.diag) - quad;
        (&self.diag - gw * 2.0, value)
    }

    /// `phi(w)`, the largest constraint violation.
    fn gap(&self, w: &DVector<f64>) -> f64 {
        let (grad, value) = self.gradient(w);
        let quad = w.dot(&(&self.gram * w));
        grad.max() + quad - value
    }

    /// Solves the stationarity system on `support`; `None` if singular or the
    /// solution leaves the simplex.
    fn solve_support(&self, support: &[usize]) -> Option<DVector<f64>> {
        let m = support.len();
        if m == 1 {
            let mut w = DVector::zeros(self.n);
            w[support[0]] = 1.0;
            return Some(w);
        }
        // [2 G_SS  1] [w]   [diag_S]
        // [1^T     0] [nu] = [1     ]
        let mut sys = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                sys[(a, b)] = 2.0 * self.gram[(i, j)];
            }
            sys[(a, m)] = 1.0;
            sys[(m, a)] = 1.0;
            rhs[a] = self.diag[i];
        }
        rhs[m] = 1.0;
        let sol = sys.lu().solve(&rhs)?;
        let tol = 1e-12;
        if sol.iter().take(m).any(|&x| !x.is_finite() || x < -tol) {
            return None;
        }
        let mut w = DVector::zeros(self.n);
        for (a, &i) in support.iter().enumerate() {
            w[i] = sol[a].max(0.0);
        }
        let total = w.sum();
        if total <= 0.0 {
            return None;
        }
        Some(w / total)
    }
}

/// Finds a distribution over `features` satisfying the exploration constraint
/// in the metric `gram.inverse()`. The returned `support` is `0..n`.
pub fn solve_exploration_distribution(
    features: &[DVector<f64>],
    gram: &RegularizedGram,
    cfg: &SolverConfig,
) -> Result<ExplorationDistribution> {
    cfg.validate()?;
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no surviving actions".into()));
    }
    for z in features {
        if z.len() != gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: gram.dim(),
                got: z.len(),
            });
        }
    }
    let support: Vec<usize> = (0..n).collect();
    if n == 1 {
        return Ok(ExplorationDistribution::point_mass(0, &features[0]));
    }

    let problem = Problem::new(features, gram.inverse());
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    // Identical features: every constraint reads 0 <= 0.
    if problem.diameter_sq <= f64::MIN_POSITIVE {
        return Ok(finish(
            features,
            gram,
            support,
            uniform,
            SolveStatus::Converged,
            0,
        ));
    }

    let mut best = uniform.clone();
    let mut best_gap = problem.gap(&uniform);
    if best_gap <= cfg.eps_feas {
        return Ok(finish(
            features,
            gram,
            support,
            best,
            SolveStatus::Converged,
            0,
        ));
    }

    let step = cfg.step_scale / (2.0 * problem.diameter_sq);
    let mut w = uniform;
    for iter in 1..=cfg.max_iters {
        let (grad, _) = problem.gradient(&w);
        let top = grad.max();
        for j in 0..n {
            w[j] *= (step * (grad[j] - top)).exp();
        }
        let total = w.sum();
        w /= total;

        let gap = problem.gap(&w);
        if gap < best_gap {
            best_gap = gap;
            best.copy_from(&w);
        }
        if best_gap <= cfg.eps_feas {
            return Ok(finish(
                features,
                gram,
                support,
                best,
                SolveStatus::Converged,
                iter,
            ));
        }
        if iter % POLISH_EVERY == 0 {
            if let Some(exact) = polish(&problem, &w, cfg.eps_feas) {
                return Ok(finish(
                    features,
                    gram,
                    support,
                    exact,
                    SolveStatus::Converged,
                    iter,
                ));
            }
        }
    }

    if n <= ENUMERATION_LIMIT {
        if let Some(exact) = enumerate_supports(&problem, cfg.eps_feas) {
            return Ok(finish(
                features,
                gram,
                support,
                exact,
                SolveStatus::Converged,
                cfg.max_iters,
            ));
        }
    }
    Ok(finish(
        features,
        gram,
        support,
        best,
        SolveStatus::NonConverged,
        cfg.max_iters,
    ))
}

fn polish(problem: &Problem, w: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let (grad, _) = problem.gradient(w);
    let top = grad.max();
    let wmax = w.max();
    let by_weight: Vec<usize> = (0..problem.n).filter(|&j| w[j] > 1e-3 * wmax).collect();
    let by_gradient: Vec<usize> = (0..problem.n)
        .filter(|&j| grad[j] >= top - 1e-3 * problem.diameter_sq)
        .collect();
    for candidate in [by_weight, by_gradient] {
        if let Some(exact) = problem.solve_support(&candidate) {
            if problem.gap(&exact) <= eps {
                return Some(exact);
            }
        }
    }
    None
}

fn enumerate_supports(problem: &Problem, eps: f64) -> Option<DVector<f64>> {
    let n = problem.n;
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let support: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        if let Some(w) = problem.solve_support(&support) {
            if problem.gap(&w) <= eps {
                return Some(w);
            }
        }
    }
    None
}

fn finish(
    features: &[DVector<f64>],
    gram: &RegularizedGram,
    support: Vec<usize>,
    weights: DVector<f64>,
    status: SolveStatus,
    iterations: usize,
) -> ExplorationDistribution {
    let probs: Vec<f64> = weights.iter().copied().collect();
    let (mu, cov_trace_term, max_violation) = moments(features, gram.inverse(), &probs);
    ExplorationDistribution {
        support,
        probs,
        mu,
        cov_trace_term,
        max_violation,
        status,
        iterations,
    }
}

/// Mean, `tr(M Cov)` and the largest constraint violation for `probs`.
fn moments(
    features: &[DVector<f64>],
    inv: &DMatrix<f64>,
    probs: &[f64],
) -> (DVector<f64>, f64, f64) {
    let dim = features[0].len();
    let mut mu = DVector::zeros(dim);
    for (z, &p) in features.iter().zip(probs) {
        mu.axpy(p, z, 1.0);
    }
    let dists: Vec<f64> = features
        .iter()
        .map(|z| {
            let c = z - &mu;
            c.dot(&(inv * &c)).max(0.0)
        })
        .collect();
    let trace: f64 = dists.iter().zip(probs).map(|(d, p)| d * p).sum();
    let worst = dists
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &d| acc.max(d - trace));
    (mu, trace, worst)
}

/// Recomputes both sides of the exploration constraint for `dist` from the
/// raw Gram matrix, using Cholesky solves rather than the cached inverse.
/// Returns `max_a ||z_a - mu||^2 - tr(Gamma^{-1} Cov)` over the whole
/// `features` slice restricted to `dist.support`.
pub fn constraint_violation(
    features: &[DVector<f64>],
    gram: &RegularizedGram,
    dist: &ExplorationDistribution,
) -> Result<f64> {
    let chol = gram.cholesky()?;
    let dim = gram.dim();
    let mut mean = DVector::zeros(dim);
    let mut second = DMatrix::zeros(dim, dim);
    for (&a, &p) in dist.support.iter().zip(&dist.probs) {
        let z = &features[a];
        mean.axpy(p, z, 1.0);
        second.ger(p, z, z, 1.0);
    }
    let cov = second - &mean * mean.transpose();
    let trace = chol.solve(&cov).trace();
    let mut worst = f64::NEG_INFINITY;
    for &a in &dist.support {
        let c = &features[a] - &mean;
        let lhs = c.dot(&chol.solve(&c));
        worst = worst.max(lhs - trace);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn single_feature_is_point_mass() {
        let g = RegularizedGram::new(2, 1.0).unwrap();
        let d = solve_exploration_distribution(&[v(&[0.3, 0.4])], &g, &SolverConfig::default())
            .unwrap();
        assert_eq!(d.probs, vec![1.0]);
        assert_eq!(d.mu, v(&[0.3, 0.4]));
        assert_eq!(d.max_violation, 0.0);
    }

    #[test]
    fn two_features_give_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut g = RegularizedGram::new(3, rng.random_range(0.1..10.0)).unwrap();
            for _ in 0..rng.random_range(0..6) {
                g.rank_one_update(&DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)));
            }
            let f = vec![
                DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5)),
                DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5)),
            ];
            let d = solve_exploration_distribution(&f, &g, &SolverConfig::default()).unwrap();
            assert_eq!(d.probs, vec![0.5, 0.5]);
            assert!(d.is_feasible());
            assert!(d.max_violation <= 1e-12);
        }
    }

    #[test]
    fn identical_features_give_uniform() {
        let g = RegularizedGram::new(2, 1.0).unwrap();
        let f = vec![v(&[0.1, 0.2]); 4];
        let d = solve_exploration_distribution(&f, &g, &SolverConfig::default()).unwrap();
        assert_eq!(d.probs, vec![0.25; 4]);
        assert_eq!(d.cov_trace_term, 0.0);
    }

    #[test]
    fn symmetric_triangle_is_uniform() {
        let g = RegularizedGram::new(2, 1.0).unwrap();
        let f: Vec<_> = [0.0f64, 120.0, 240.0]
            .iter()
            .map(|deg| {
                let r = deg.to_radians();
                v(&[r.cos(), r.sin()])
            })
            .collect();
        let d = solve_exploration_distribution(&f, &g, &SolverConfig::default()).unwrap();
        for p in &d.probs {
            assert_relative_eq!(*p, 1.0 / 3.0, epsilon = 1e-9);
        }
        // Every constraint is tight: ||z_i - 0||^2 = 1 = tr(Cov).
        assert_relative_eq!(d.cov_trace_term, 1.0, epsilon = 1e-9);
        assert!(d.max_violation.abs() <= 1e-9);
    }

    #[test]
    fn interior_point_gets_no_weight() {
        // Segment endpoints enclose the midpoint region.
        let g = RegularizedGram::new(2, 1.0).unwrap();
        let f = vec![v(&[-0.8, 0.0]), v(&[0.0, 0.05]), v(&[0.8, 0.0])];
        let d = solve_exploration_distribution(&f, &g, &SolverConfig::default()).unwrap();
        assert!(d.is_feasible());
        assert_relative_eq!(d.probs[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(d.probs[2], 0.5, epsilon = 1e-9);
        assert!(d.probs[1] <= 1e-9);
    }

    #[test]
    fn violation_is_never_negative_and_verifier_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let dim = rng.random_range(1..5);
            let n = rng.random_range(2..8);
            let mut g = RegularizedGram::new(dim, rng.random_range(0.05..5.0)).unwrap();
            for _ in 0..rng.random_range(0..10) {
                g.rank_one_update(&DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)));
            }
            let f: Vec<_> = (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5)))
                .collect();
            let d = solve_exploration_distribution(&f, &g, &SolverConfig::default()).unwrap();
            assert!(d.is_feasible(), "{d:?}");
            assert!(d.max_violation >= -1e-12);
            assert!(d.max_violation <= 1e-8);
            let check = constraint_violation(&f, &g, &d).unwrap();
            assert!(check <= 1e-8, "verifier found {check}");
            let total: f64 = d.probs.iter().sum();
            assert!((total - 1.0).abs() <= 1e-10);
            assert!(d.probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn budget_exhaustion_reports_non_converged() {
        // One ascent step on an instance too large to enumerate.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = RegularizedGram::new(3, 1.0).unwrap();
        let f: Vec<_> = (0..ENUMERATION_LIMIT + 4)
            .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5)))
            .collect();
        let cfg = SolverConfig {
            max_iters: 1,
            ..SolverConfig::default()
        };
        let d = solve_exploration_distribution(&f, &g, &cfg).unwrap();
        assert_eq!(d.status, SolveStatus::NonConverged);
        assert!(d.max_violation > cfg.eps_feas);
    }

    #[test]
    fn sampling_follows_cdf() {
        let d = ExplorationDistribution {
            support: vec![3, 7, 9],
            probs: vec![0.2, 0.0, 0.8],
            mu: v(&[0.0]),
            cov_trace_term: 0.0,
            max_violation: 0.0,
            status: SolveStatus::Converged,
            iterations: 0,
        };
        assert_eq!(d.sample_index(0.0), 0);
        assert_eq!(d.sample_index(0.1999), 0);
        assert_eq!(d.sample_index(0.2), 2);
        assert_eq!(d.sample_index(0.99999), 2);
        assert_eq!(d.sample_index(1.0), 2);
    }

    #[test]
    fn rejects_bad_solver_config() {
        let g = RegularizedGram::new(1, 1.0).unwrap();
        let f = vec![v(&[0.0]), v(&[1.0])];
        for cfg in [
            SolverConfig {
                eps_feas: 0.0,
                ..Default::default()
            },
            SolverConfig {
                max_iters: 0,
                ..Default::default()
            },
            SolverConfig {
                step_scale: -1.0,
                ..Default::default()
            },
        ] {
            assert!(solve_exploration_distribution(&f, &g, &cfg).is_err());
        }
        assert!(solve_exploration_distribution(&[], &g, &SolverConfig::default()).is_err());
    }
}
