use lpdiff::lp::StandardFormLP;
use lpdiff::problems::random_feasible_lp;
use lpdiff::solver::{
    direction, initialize, newton_rhs, solve, step_size, ReducedSystem, SolverConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_lp(seed: u64) -> StandardFormLP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 1 + (seed % 6) as usize;
    let k = p + 1 + (seed / 6 % 6) as usize;
    random_feasible_lp(&mut rng, k, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Drives the iteration by hand with `eta = 1 - gamma` and checks each accepted step.
    #[test]
    fn iterates_stay_interior_and_shrink_the_gap(seed in any::<u64>(), gamma in 0.05..0.5f64) {
        let lp = random_lp(seed);
        let k = lp.num_vars() as f64;
        let eta = 1.0 - gamma;
        let mut pt = initialize(lp.num_vars(), lp.num_rows());
        for _ in 0..60 {
            if pt.lambda < 1e-8 {
                break;
            }
            let sys = ReducedSystem::factorize(&lp, &pt, 0.0, 1e-6).unwrap();
            let d = direction(&lp, &pt, &sys, &newton_rhs(&pt, &lp, gamma, eta));
            let omega = step_size(&pt, &d, 0.99);
            let before = pt.lambda;
            pt.advance(&d, omega);

            prop_assert!(pt.is_strictly_interior());
            let gap = pt.x.dot(&pt.t) + pt.tau * pt.kappa;
            prop_assert!((pt.lambda * (k + 1.0) - gap).abs() <= 1e-12 * (k + 1.0) * gap.max(1.0));
            prop_assert!(pt.lambda < before, "lambda went from {before} to {}", pt.lambda);
            // Exact in exact arithmetic; near the end the Newton solves lose digits.
            if before > 1e-6 {
                let predicted = (1.0 - eta * omega) * before;
                prop_assert!((pt.lambda - predicted).abs() <= 1e-5 * before, "{} vs {predicted}", pt.lambda);
            }
        }
    }

    #[test]
    fn residual_contract_at_tight_cutoff(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let sol = solve(&lp, &SolverConfig::default()).unwrap();
        let b = lp.b.amax();
        let c = lp.c.amax();
        prop_assert!((&lp.a * &sol.x - &lp.b).amax() <= 1e-6 * (1.0 + b));
        prop_assert!((lp.a.tr_mul(&sol.y) + &sol.t - &lp.c).amax() <= 1e-6 * (1.0 + c));
        let kl = lp.num_vars() as f64 * sol.lambda_final;
        prop_assert!(sol.residuals.gap <= 2.0 * kl && sol.residuals.gap >= 0.5 * kl, "{} vs {kl}", sol.residuals.gap);
    }
}
