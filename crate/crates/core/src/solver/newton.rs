//! The Newton system of the homogeneous embedding and its reduction.
//!
//! Eliminating `d_t` and `d_kappa` leaves the three-block system
//!
//! ```text
//! [ -X^-1 T   A'   -c       ] [d_x  ]   [ r_d - X^-1 r_xt ]
//! [  A        0    -b       ] [d_y  ] = [ r_p             ]
//! [ -c'       b'   kappa/tau] [d_tau]   [ r_g + r_tk / tau ]
//! ```
//!
//! which is solved through the normal matrix `M = A T^-1 X A'`. The backward
//! pass solves the same matrix against different right-hand sides, so the
//! factorization is exposed as a reusable object.

use nalgebra::{DMatrix, DVector};

use super::point::{Direction, InteriorPoint};
use crate::error::{Error, Result};
use crate::linalg::{factor_with_damping, DampedCholesky};
use crate::lp::StandardFormLP;

/// Right-hand side of the full Newton system.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonRhs {
    pub r_p: DVector<f64>,
    pub r_d: DVector<f64>,
    pub r_g: f64,
    pub r_xt: DVector<f64>,
    pub r_tk: f64,
}

/// `-(eta (Ax - b tau), eta (A'y + t - c tau), eta (-c'x + b'y - kappa), Xt - gamma lambda e, tau kappa - gamma lambda)`.
pub fn newton_rhs(pt: &InteriorPoint, lp: &StandardFormLP, gamma: f64, eta: f64) -> NewtonRhs {
    let target = gamma * pt.lambda;
    let primal = &lp.a * &pt.x - &lp.b * pt.tau;
    let dual = lp.a.tr_mul(&pt.y) + &pt.t - &lp.c * pt.tau;
    let gap = -lp.c.dot(&pt.x) + lp.b.dot(&pt.y) - pt.kappa;
    NewtonRhs {
        r_p: primal * -eta,
        r_d: dual * -eta,
        r_g: -eta * gap,
        r_xt: pt.x.component_mul(&pt.t).map(|v| target - v),
        r_tk: target - pt.tau * pt.kappa,
    }
}

/// Dense three-block matrix of the reduced system at `pt`.
pub fn assemble_reduced_matrix(lp: &StandardFormLP, pt: &InteriorPoint) -> DMatrix<f64> {
    let k = lp.num_vars();
    let p = lp.num_rows();
    let n = k + p + 1;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..k {
        m[(i, i)] = -pt.t[i] / pt.x[i];
        m[(i, n - 1)] = -lp.c[i];
        m[(n - 1, i)] = -lp.c[i];
    }
    m.view_mut((0, k), (k, p)).copy_from(&lp.a.transpose());
    m.view_mut((k, 0), (p, k)).copy_from(&lp.a);
    for j in 0..p {
        m[(k + j, n - 1)] = -lp.b[j];
        m[(n - 1, k + j)] = lp.b[j];
    }
    m[(n - 1, n - 1)] = pt.kappa / pt.tau;
    m
}

/// Normal matrix `A T^-1 X A'`.
pub fn normal_matrix(lp: &StandardFormLP, pt: &InteriorPoint) -> DMatrix<f64> {
    let d = pt.x.component_div(&pt.t);
    let mut ad = lp.a.clone();
    for (j, mut col) in ad.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let mut m = &ad * lp.a.transpose();
    // symmetrize against rounding
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Factorized reduced system at a fixed iterate.
///
/// Solves `W [p; q] = [c; b]` once; any further right-hand side costs one
/// Cholesky solve plus a scalar correction for the `tau` block.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    /// Diagonal of `T^-1 X`.
    d: DVector<f64>,
    kappa_over_tau: f64,
    chol: DampedCholesky,
    p: DVector<f64>,
    q: DVector<f64>,
    denom: f64,
}

impl ReducedSystem {
    /// Factor at `pt`, first with damping `alpha` and then with the retry schedule
    /// starting at `retry`.
    pub fn factorize(
        lp: &StandardFormLP,
        pt: &InteriorPoint,
        alpha: f64,
        retry: f64,
    ) -> Result<Self> {
        let d = pt.x.component_div(&pt.t);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("X/T ratio is not finite".into()));
        }
        let chol = factor_with_damping(&normal_matrix(lp, pt), alpha, retry)?;
        let mut sys = ReducedSystem {
            d,
            kappa_over_tau: pt.kappa / pt.tau,
            chol,
            p: DVector::zeros(0),
            q: DVector::zeros(0),
            denom: 0.0,
        };
        let (p, q) = sys.solve_w(lp, &lp.c, &lp.b);
        sys.denom = -lp.c.dot(&p) + lp.b.dot(&q) + sys.kappa_over_tau;
        if !sys.denom.is_finite() || sys.denom == 0.0 {
            return Err(Error::NumericalFailure(format!(
                "reduced system pivot is {}",
                sys.denom
            )));
        }
        sys.p = p;
        sys.q = q;
        Ok(sys)
    }

    /// Damping actually used by the Cholesky factorization.
    pub fn damping(&self) -> f64 {
        self.chol.alpha
    }

    /// Solve `[-X^-1 T, A'; A, 0] [u; v] = [r1; r2]`:
    /// `M v = A T^-1 X r1 + r2`, `u = T^-1 X (A'v - r1)`.
    pub fn solve_w(
        &self,
        lp: &StandardFormLP,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let rhs = &lp.a * self.d.component_mul(r1) + r2;
        let v = self.chol.solve(&rhs);
        let u = self.d.component_mul(&(lp.a.tr_mul(&v) - r1));
        (u, v)
    }

    /// Solve the full three-block system for `(x1, x2, x3)`.
    pub fn solve(
        &self,
        lp: &StandardFormLP,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: f64,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let (u, v) = self.solve_w(lp, r1, r2);
        let x3 = (r3 + u.dot(&lp.c) - v.dot(&lp.b)) / self.denom;
        (u + &self.p * x3, v + &self.q * x3, x3)
    }
}

/// Solve the reduced Newton system for `(d_x, d_y, d_tau)` given the full right-hand side.
pub fn solve_reduced(
    lp: &StandardFormLP,
    pt: &InteriorPoint,
    sys: &ReducedSystem,
    rhs: &NewtonRhs,
) -> (DVector<f64>, DVector<f64>, f64) {
    let r1 = &rhs.r_d - rhs.r_xt.component_div(&pt.x);
    let r3 = rhs.r_g + rhs.r_tk / pt.tau;
    sys.solve(lp, &r1, &rhs.r_p, r3)
}

/// `d_t = X^-1 (r_xt - T d_x)`, `d_kappa = (r_tk - kappa d_tau) / tau`.
pub fn recover_dt_dkappa(
    pt: &InteriorPoint,
    dx: &DVector<f64>,
    dtau: f64,
    r_xt: &DVector<f64>,
    r_tk: f64,
) -> (DVector<f64>, f64) {
    let dt = (r_xt - pt.t.component_mul(dx)).component_div(&pt.x);
    let dkappa = (r_tk - pt.kappa * dtau) / pt.tau;
    (dt, dkappa)
}

/// Complete Newton direction for `rhs` at `pt`.
pub fn direction(
    lp: &StandardFormLP,
    pt: &InteriorPoint,
    sys: &ReducedSystem,
    rhs: &NewtonRhs,
) -> Direction {
    let (dx, dy, dtau) = solve_reduced(lp, pt, sys, rhs);
    let (dt, dkappa) = recover_dt_dkappa(pt, &dx, dtau, &rhs.r_xt, rhs.r_tk);
    Direction {
        dx,
        dy,
        dt,
        dtau,
        dkappa,
    }
}
