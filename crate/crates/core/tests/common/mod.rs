//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use bose::estimation::RegularizedGram;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct Instance {
    pub features: Vec<DVector<f64>>,
    pub gram: RegularizedGram,
}

pub fn unit_ball_point<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

/// `n` features in the unit ball and a Gram matrix `lambda I + sum x x^T`.
pub fn random_instance<R: Rng>(n: usize, d: usize, rng: &mut R) -> Instance {
    let features = (0..n).map(|_| unit_ball_point(d, rng)).collect();
    let mut gram = RegularizedGram::new(d, rng.random_range(0.5..2.0)).unwrap();
    for _ in 0..rng.random_range(0..6) {
        gram.rank_one_update(&unit_ball_point(d, rng));
    }
    Instance { features, gram }
}

/// `M = Gamma^{-1}` by LU, independent of the library's maintained inverse.
pub fn metric(gram: &RegularizedGram) -> DMatrix<f64> {
    gram.matrix().clone().lu().try_inverse().unwrap()
}

/// `max_i ||z_i - mu_w||^2_M - tr(M Cov_w)` with the covariance formed
/// explicitly.
pub fn phi(features: &[DVector<f64>], m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let d = features[0].len();
    let mut mu = DVector::zeros(d);
    for (z, &p) in features.iter().zip(w) {
        mu += z * p;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (z, &p) in features.iter().zip(w) {
        let c = z - &mu;
        cov += &c * c.transpose() * p;
    }
    let spread = (m * cov).trace();
    features
        .iter()
        .map(|z| {
            let c = z - &mu;
            (c.transpose() * m * &c)[(0, 0)]
        })
        .fold(f64::NEG_INFINITY, f64::max)
        - spread
}

/// Minimum of `phi` over the simplex grid with spacing `1 / steps`.
pub fn grid_min_phi(features: &[DVector<f64>], m: &DMatrix<f64>, steps: usize) -> (f64, Vec<f64>) {
    let n = features.len();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut counts = vec![0usize; n];
    fn visit(i: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i + 1 == counts.len() {
            counts[i] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            visit(i + 1, left - c, counts, f);
        }
    }
    visit(0, steps, &mut counts, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&k| k as f64 / steps as f64).collect();
        let v = phi(features, m, &w);
        if v < best.0 {
            best = (v, w);
        }
    });
    best
}
