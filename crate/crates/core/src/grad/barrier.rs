use nalgebra::{DMatrix, DVector};

use super::{BackwardContext, Jacobian};
use crate::error::{Error, Result};
use crate::linalg::{factor_with_damping, inf_norm, DampedCholesky};
use crate::lp::StandardFormLP;
use crate::solver::{step_size, Direction, InteriorPoint, ReducedSystem};

/// Minimizer of `c'x - lambda sum(log x)` over `Ax = b`, with its multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
}

/// Primal-dual Newton on `Ax = b`, `A'y + t = c`, `x t = mu e`, driving `mu`
/// down to `lambda` geometrically and then polishing at `mu = lambda`.
pub fn barrier_solve(lp: &StandardFormLP, lambda: f64) -> Result<BarrierPoint> {
    if !(lambda > 0.0) {
        return Err(Error::Config("barrier weight must be positive".into()));
    }
    let k = lp.num_vars();
    let p = lp.num_rows();
    let mut pt = InteriorPoint {
        x: DVector::from_element(k, 1.0),
        y: DVector::zeros(p),
        t: DVector::from_element(k, 1.0),
        tau: 1.0,
        kappa: 1.0,
        lambda: 1.0,
        theta: 0.0,
    };
    let scale = 1.0 + inf_norm(&lp.b).max(inf_norm(&lp.c));
    for it in 0..500 {
        let mean = pt.x.dot(&pt.t) / k as f64;
        let mu = lambda.max(0.1 * mean);
        let r_p = &lp.a * &pt.x - &lp.b;
        let r_d = lp.a.tr_mul(&pt.y) + &pt.t - &lp.c;
        let r_c = pt.x.component_mul(&pt.t).add_scalar(-mu);
        let err = inf_norm(&r_p).max(inf_norm(&r_d)) / scale;
        let cerr = inf_norm(&pt.x.component_mul(&pt.t).add_scalar(-lambda)) / lambda;
        if err < 1e-13 && cerr < 1e-11 {
            return Ok(BarrierPoint {
                x: pt.x,
                y: pt.y,
                t: pt.t,
                lambda,
                iterations: it,
            });
        }
        // A dx = -r_p, A'dy + dt = -r_d, T dx + X dt = -r_c
        let sys = ReducedSystem::factorize(lp, &pt, 0.0, 0.0)?;
        let r1 = -&r_d + r_c.component_div(&pt.x);
        let (dx, dy) = sys.solve_w(lp, &r1, &(-&r_p));
        let dt = (-&r_c - pt.t.component_mul(&dx)).component_div(&pt.x);
        let d = Direction {
            dx,
            dy,
            dt,
            dtau: 0.0,
            dkappa: 0.0,
        };
        let w = step_size(&pt, &d, 0.99);
        pt.x.axpy(w, &d.dx, 1.0);
        pt.y.axpy(w, &d.dy, 1.0);
        pt.t.axpy(w, &d.dt, 1.0);
        if pt.x.iter().chain(pt.t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("barrier iteration diverged".into()));
        }
    }
    Err(Error::NumericalFailure(format!(
        "barrier problem at lambda = {lambda} did not converge"
    )))
}

/// Implicit differentiation of the log-barrier KKT system at the scaled terminal point.
///
/// With `H = lambda X^-2`: `(A H^-1 A') J_y = A H^-1` and `J_x = H^-1 (A' J_y - I)`,
/// where `lambda = x't / k`. If the Schur complement will not factor, `H` itself
/// is damped.
pub fn dxdc_kkt_logbarrier(ctx: &BackwardContext) -> Result<Jacobian> {
    let lp = &ctx.lp;
    let k = lp.num_vars();
    let lam = ctx.barrier_weight();
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::NumericalFailure(
            "barrier weight at terminal point is not positive".into(),
        ));
    }
    let h: DVector<f64> = ctx.point.x.map(|xi| lam / (xi * xi));
    let hmax = h.iter().fold(0.0_f64, |a, v| a.max(*v));
    let mut last_err = None;
    for delta in [0.0, 1e-10 * hmax, 1e-8 * hmax, 1e-6 * hmax] {
        let hinv = h.map(|v| 1.0 / (v + delta));
        let ahinv = DMatrix::from_fn(lp.num_rows(), k, |i, j| lp.a[(i, j)] * hinv[j]);
        let schur = &ahinv * lp.a.transpose();
        let schur = (&schur + schur.transpose()) * 0.5;
        match factor_with_damping(&schur, ctx.alpha, 0.0) {
            Ok(chol) => return Ok(assemble(lp, &hinv, &ahinv, &chol)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::NumericalFailure("log-barrier system".into())))
}

fn assemble(
    lp: &StandardFormLP,
    hinv: &DVector<f64>,
    ahinv: &DMatrix<f64>,
    chol: &DampedCholesky,
) -> Jacobian {
    let k = lp.num_vars();
    let jy = chol.factor.solve(ahinv);
    let mut jx = lp.a.tr_mul(&jy);
    for i in 0..k {
        jx[(i, i)] -= 1.0;
    }
    for (i, mut row) in jx.row_iter_mut().enumerate() {
        row *= hinv[i];
    }
    Jacobian {
        dx_dc: jx,
        dy_dc: Some(jy),
        dtau_dc: None,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(c: &[f64]) -> StandardFormLP {
        let k = c.len();
        StandardFormLP::new(
            DVector::from_row_slice(c),
            DMatrix::from_element(1, k, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn barrier_point_is_centered_and_feasible() {
        let lp = simplex(&[0.3, -0.2, 0.5, 0.1]);
        for lam in [1.0, 0.1, 1e-3, 1e-6] {
            let bp = barrier_solve(&lp, lam).unwrap();
            assert!((bp.x.sum() - 1.0).abs() < 1e-12);
            for i in 0..4 {
                assert!((bp.x[i] * bp.t[i] - lam).abs() < 1e-10 * lam.max(1e-3));
            }
        }
    }

    #[test]
    fn two_variable_closed_form() {
        // min c1 x1 + c2 x2 - lam (log x1 + log x2), x1 + x2 = 1.
        // Stationarity: c1 - lam/x1 = c2 - lam/(1 - x1).
        let lam = 0.25;
        let lp = simplex(&[1.0, 0.0]);
        let bp = barrier_solve(&lp, lam).unwrap();
        let x1 = bp.x[0];
        assert!((1.0 - lam / x1 + lam / (1.0 - x1)).abs() < 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_differences_of_barrier_map() {
        let lp = simplex(&[0.3, -0.2, 0.5]);
        let lam = 0.05;
        let bp = barrier_solve(&lp, lam).unwrap();
        let ctx = BackwardContext::from_barrier(&lp, &bp, 0.0).unwrap();
        let jac = dxdc_kkt_logbarrier(&ctx).unwrap().dx_dc;
        let h = 1e-6;
        for j in 0..3 {
            let mut cp = lp.c.clone();
            cp[j] += h;
            let mut cm = lp.c.clone();
            cm[j] -= h;
            let xp = barrier_solve(&lp.with_cost(cp), lam).unwrap().x;
            let xm = barrier_solve(&lp.with_cost(cm), lam).unwrap().x;
            let fd = (xp - xm) / (2.0 * h);
            for i in 0..3 {
                assert!(
                    (fd[i] - jac[(i, j)]).abs() < 1e-6,
                    "{i},{j}: {} vs {}",
                    fd[i],
                    jac[(i, j)]
                );
            }
        }
    }

    #[test]
    fn rows_of_a_annihilate_the_jacobian() {
        let lp = simplex(&[0.3, -0.2, 0.5]);
        let bp = barrier_solve(&lp, 0.1).unwrap();
        let ctx = BackwardContext::from_barrier(&lp, &bp, 0.0).unwrap();
        let jac = dxdc_kkt_logbarrier(&ctx).unwrap().dx_dc;
        assert!((&lp.a * jac).amax() < 1e-12);
    }
}
