use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::lp::StandardFormLP;

/// Random LP with a known optimal primal-dual pair, hence feasible and bounded.
///
/// `A` has standard normal entries, `x0 >= 0` has roughly half its entries zero,
/// `b = A x0`, and `c = A'y0 + t0` with `t0` large where `x0 = 0` and small
/// elsewhere, so `(x0, y0)` is close to, but not exactly, complementary.
pub fn random_feasible_lp<R: Rng + ?Sized>(rng: &mut R, k: usize, p: usize) -> StandardFormLP {
    assert!(p >= 1 && p <= k, "need 1 <= p <= k");
    let a = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x0 = DVector::from_fn(k, |_, _| {
        if rng.random::<f64>() < 0.5 {
            0.0
        } else {
            rng.random_range(0.1..2.0)
        }
    });
    let y0 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t0 = DVector::from_fn(k, |i, _| {
        if x0[i] == 0.0 {
            rng.random_range(0.1..2.0)
        } else {
            rng.random_range(0.0..0.05)
        }
    });
    let b = &a * &x0;
    let c = a.tr_mul(&y0) + t0;
    StandardFormLP::new(c, a, b).expect("shapes agree by construction")
}

/// Random LP whose feasible set has a strictly positive point and whose dual
/// slacks are bounded away from zero, so the log-barrier problem has a
/// minimizer for every weight and regularized solutions are nondegenerate.
pub fn random_interior_lp<R: Rng + ?Sized>(rng: &mut R, k: usize, p: usize) -> StandardFormLP {
    assert!(p >= 1 && p <= k, "need 1 <= p <= k");
    let a = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x0 = DVector::from_fn(k, |_, _| rng.random_range(0.5..2.0));
    let y0 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t0 = DVector::from_fn(k, |_, _| rng.random_range(0.1..2.0));
    let b = &a * &x0;
    let c = a.tr_mul(&y0) + t0;
    StandardFormLP::new(c, a, b).expect("shapes agree by construction")
}
