//! Semiparametric contextual bandits.
//!
//! Rewards follow `r = <theta, z_a> + f_t + noise`, where the confounder
//! `f_t` is shared by every action in a round and may depend on the whole
//! history. The learner only needs `theta`: it centers features by the mean of
//! its own sampling distribution, which cancels `f_t` in expectation.

pub mod baselines;
pub mod diagnostics;
pub mod environments;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod policy;

pub use error::{Error, ErrorCategory, Result};

/// Random number generator used throughout simulation.
pub type SimRng = rand_chacha::ChaCha8Rng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
