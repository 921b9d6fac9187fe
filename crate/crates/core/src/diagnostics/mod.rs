//! Executable checks of the concentration and potential inequalities behind
//! the confidence radius, plus the counterexample showing why plain least
//! squares fails under confounding.
//!
//! Monte Carlo checks report a [`CoverageReport`]; each trial draws from its
//! own seed, so reports do not depend on thread scheduling.

mod concentration;
mod coverage;
mod ols;
mod potential;

pub use concentration::{
    check_estimator_confidence, check_matrix_freedman, check_self_normalized_general,
    check_self_normalized_shifted, check_self_normalized_symmetric, ConfidenceCheck, FreedmanCheck,
    SelfNormalizedCheck, ZetaRule,
};
pub use coverage::{wilson_interval, CoverageReport, Z95};
pub use ols::{ols_bias_demo, ols_closed_form, OlsDemoReport};
pub use potential::{check_potential_and_det, PotentialCheck, PotentialTrace};
