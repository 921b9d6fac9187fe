mod common;

use bose::diagnostics::{wilson_interval, Z95};
use bose::estimation::{OrthogonalizedEstimator, RegularizedGram};
use bose::harness::{log_grid, mix_seed};
use bose::policy::{constraint_violation, solve_exploration_distribution, Context, SolverConfig};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_output_is_a_feasible_distribution(seed in any::<u64>(), n in 1usize..7, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(n, d, &mut rng);
        let dist = solve_exploration_distribution(&inst.features, &inst.gram, &SolverConfig::default()).unwrap();
        prop_assert!(dist.is_feasible());
        prop_assert!(dist.probs.iter().all(|&p| p >= 0.0));
        prop_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.support.iter().all(|&a| a < n));
        prop_assert!(constraint_violation(&inst.features, &inst.gram, &dist).unwrap() <= 1e-6);

        let mut w = vec![0.0; n];
        for (&a, &p) in dist.support.iter().zip(&dist.probs) {
            w[a] = p;
        }
        prop_assert!(common::phi(&inst.features, &common::metric(&inst.gram), &w) <= 1e-6);
    }

    #[test]
    fn grid_is_within_margin(seed in any::<u64>(), n in 1usize..4, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(n, d, &mut rng);
        let (grid_min, _) = common::grid_min_phi(&inst.features, &common::metric(&inst.gram), 50);
        prop_assert!(grid_min <= 0.04);
    }

    #[test]
    fn maintained_inverse_tracks_gram(seed in any::<u64>(), d in 1usize..6, steps in 0usize..1200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gram = RegularizedGram::new(d, 1.0).unwrap();
        for _ in 0..steps {
            gram.rank_one_update(&common::unit_ball_point(d, &mut rng));
        }
        prop_assert!(gram.inverse_residual() < 1e-9);
        let m = common::metric(&gram);
        prop_assert!((m - gram.inverse()).abs().max() < 1e-9);
    }

    #[test]
    fn estimate_solves_normal_equations(seed in any::<u64>(), d in 1usize..5, steps in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est = OrthogonalizedEstimator::new(d, 1.5).unwrap();
        for _ in 0..steps {
            let z = common::unit_ball_point(d, &mut rng);
            let mu = common::unit_ball_point(d, &mut rng);
            est.update(&z, &mu, rand::Rng::random_range(&mut rng, -1.0..1.0)).unwrap();
        }
        let direct = est.gram().matrix().clone().lu().solve(est.moment()).unwrap();
        prop_assert!((direct - est.theta_hat()).amax() < 1e-9);

        let back = OrthogonalizedEstimator::from_json(&est.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.theta_hat(), est.theta_hat());
    }

    #[test]
    fn wilson_contains_point_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
    }

    #[test]
    fn seed_mixing_is_injective_on_small_sets(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(mix_seed(master, &[a]), mix_seed(master, &[b]));
        prop_assert_eq!(mix_seed(master, &[a, b]), mix_seed(master, &[a, b]));
    }

    #[test]
    fn log_grid_is_increasing(lo in 1e-4f64..1.0, span in 1.0f64..1e4, count in 2usize..40) {
        let g = log_grid(lo, lo * span, count);
        prop_assert_eq!(g.len(), count);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((g[0] - lo).abs() <= 1e-12 * lo);
    }

    #[test]
    fn context_rejects_features_outside_ball(scale in 1.01f64..10.0) {
        let z = DVector::from_row_slice(&[scale, 0.0]);
        prop_assert!(Context::new(vec![z.clone(), z], 0).is_err());
    }
}
