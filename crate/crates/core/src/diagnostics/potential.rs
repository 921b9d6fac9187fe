use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::NORM_TOLERANCE;
use crate::harness::potential_bound;

/// The centered features `Z_t` a BOSE run fed its estimator, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialTrace {
    pub dim: usize,
    pub lambda: f64,
    pub centered: Vec<DVector<f64>>,
}

impl PotentialTrace {
    pub fn new(dim: usize, lambda: f64) -> Self {
        Self {
            dim,
            lambda,
            centered: Vec::new(),
        }
    }

    pub fn push(&mut self, z: DVector<f64>) {
        self.centered.push(z);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCheck {
    /// `sum_t sqrt(Z_t^T Gamma_t^{-1} Z_t)`, `Gamma_t = lambda I + sum_{s<t} Z_s Z_s^T`.
    pub potential: f64,
    pub potential_bound: f64,
    pub log_det: f64,
    /// `d ln(lambda + n L^2 / d)` with `L` the largest `||Z_t||`.
    pub log_det_bound: f64,
    pub holds: bool,
    /// Per-round terms, present only when `holds` is false.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<String>,
}

/// Recomputes both deterministic inequalities from scratch, factoring each
/// `Gamma_t` anew rather than trusting any incrementally maintained inverse.
pub fn check_potential_and_det(trace: &PotentialTrace) -> Result<PotentialCheck> {
    let d = trace.dim;
    if d == 0 || !(trace.lambda.is_finite() && trace.lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "trace needs a positive dimension and lambda".into(),
        ));
    }
    let mut gram = DMatrix::identity(d, d) * trace.lambda;
    let mut potential = 0.0;
    let mut terms = Vec::with_capacity(trace.centered.len());
    let mut max_norm: f64 = 0.0;
    for z in &trace.centered {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
        let chol = Cholesky::new(gram.clone()).ok_or(Error::NotPositiveDefinite)?;
        let term = z.dot(&chol.solve(z)).max(0.0).sqrt();
        potential += term;
        terms.push(term);
        max_norm = max_norm.max(z.norm());
        gram.ger(1.0, z, z, 1.0);
    }
    let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?;
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|x| x.ln())
            .sum::<f64>();

    let n = trace.centered.len();
    let bound = potential_bound(d, n as u64, trace.lambda);
    let log_det_bound = d as f64 * (trace.lambda + n as f64 * max_norm * max_norm / d as f64).ln();
    let holds = potential <= bound * NORM_TOLERANCE
        && log_det <= log_det_bound + 1e-9 * log_det_bound.abs().max(1.0);
    let dump = (!holds).then(|| {
        let mut out = format!(
            "potential {potential} vs bound {bound}; log det {log_det} vs {log_det_bound}\n"
        );
        for (t, term) in terms.iter().enumerate() {
            let _ = writeln!(out, "t={} term={term}", t + 1);
        }
        out
    });
    Ok(PotentialCheck {
        potential,
        potential_bound: bound,
        log_det,
        log_det_bound,
        holds,
        dump,
    })
}
