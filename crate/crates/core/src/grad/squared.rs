use nalgebra::{DMatrix, DVector};

use super::Jacobian;
use crate::error::{Error, Result};
use crate::linalg::{factor_with_damping, inf_norm};
use crate::lp::StandardFormLP;

/// A component counts as inactive when `x_i > ACTIVE_TOL * max(1, ||x||_inf)`.
pub const ACTIVE_TOL: f64 = 1e-6;

/// Solution of `min c'x + w ||x||^2 s.t. Ax = b, x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// Multipliers of `x >= 0`.
    pub s: DVector<f64>,
    pub inactive: Vec<bool>,
    pub iterations: usize,
    /// Whether the equality-constrained polish on the inactive set was accepted.
    pub polished: bool,
}

impl QpSolution {
    pub fn objective(&self, lp: &StandardFormLP, weight: f64) -> f64 {
        lp.c.dot(&self.x) + weight * self.x.norm_squared()
    }
}

/// Interior-point method for the regularized QP followed by an exact solve of the
/// equality-constrained QP on the inactive set.
pub fn solve_regularized_qp(lp: &StandardFormLP, weight: f64) -> Result<QpSolution> {
    if !(weight > 0.0) {
        return Err(Error::Config("squared-norm weight must be positive".into()));
    }
    let k = lp.num_vars();
    let p = lp.num_rows();
    let mut x = DVector::from_element(k, 1.0);
    let mut s = DVector::from_element(k, 1.0);
    let mut y = DVector::zeros(p);
    let scale = 1.0 + inf_norm(&lp.b).max(inf_norm(&lp.c));
    let w2 = 2.0 * weight;
    let mut iterations = 0;
    loop {
        let mu = x.dot(&s) / k as f64;
        let r_p = &lp.a * &x - &lp.b;
        let r_d = &x * w2 + &lp.c - lp.a.tr_mul(&y) - &s;
        if inf_norm(&r_p).max(inf_norm(&r_d)) < 1e-12 * scale && mu < 1e-13 * scale {
            break;
        }
        if iterations == 300 {
            return Err(Error::NumericalFailure(
                "regularized QP did not converge".into(),
            ));
        }
        iterations += 1;
        let r_c = x.component_mul(&s).add_scalar(-0.1 * mu);
        let hinv = DVector::from_fn(k, |i, _| 1.0 / (w2 + s[i] / x[i]));
        let g = &r_d + r_c.component_div(&x);
        let ahinv = DMatrix::from_fn(p, k, |i, j| lp.a[(i, j)] * hinv[j]);
        let m = &ahinv * lp.a.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let chol = factor_with_damping(&m, 0.0, 0.0)?;
        let dy = chol.solve(&(-&r_p + &ahinv * &g));
        let dx = hinv.component_mul(&(lp.a.tr_mul(&dy) - &g));
        let ds = -(&r_c + s.component_mul(&dx)).component_div(&x);
        let ratio = x
            .iter()
            .zip(dx.iter())
            .chain(s.iter().zip(ds.iter()))
            .filter(|(_, d)| **d < 0.0)
            .map(|(v, d)| -v / d)
            .fold(f64::INFINITY, f64::min);
        let step = if ratio.is_finite() {
            (0.99 * ratio).min(1.0)
        } else {
            1.0
        };
        x.axpy(step, &dx, 1.0);
        y.axpy(step, &dy, 1.0);
        s.axpy(step, &ds, 1.0);
        if x.iter().chain(s.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("regularized QP diverged".into()));
        }
    }
    let mut sol = QpSolution {
        inactive: inactive_set(&x),
        x,
        y,
        s,
        iterations,
        polished: false,
    };
    polish(lp, weight, &mut sol);
    Ok(sol)
}

fn inactive_set(x: &DVector<f64>) -> Vec<bool> {
    let tol = ACTIVE_TOL * inf_norm(x).max(1.0);
    x.iter().map(|v| *v > tol).collect()
}

fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// `pinv(A_I)` and the projector onto the null space of `A_I`; the projector is
/// exactly zero when `A_I` has full column rank.
fn pinv_and_null_projector(ai: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let tol = 1e-12 * ai.amax().max(1e-300);
    let svd = ai.clone().svd(true, true);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let pinv = svd.pseudo_inverse(tol).ok()?;
    let m = ai.ncols();
    let proj = if rank == m {
        DMatrix::zeros(m, m)
    } else {
        DMatrix::identity(m, m) - &pinv * ai
    };
    Some((pinv, proj))
}

/// Stationary point of the QP restricted to `idx` with the other components at zero:
/// `x_I = pinv(A_I) b - P_null(A_I) c_I / 2w` and `y = pinv(A_I') (2w x_I + c_I)`.
/// Written this way, `x_I` does not depend on `c` at all when `A_I` has full column rank.
pub(crate) fn equality_qp(
    lp: &StandardFormLP,
    weight: f64,
    idx: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    if idx.is_empty() {
        return None;
    }
    let ai = columns(&lp.a, idx);
    let ci = DVector::from_fn(idx.len(), |j, _| lp.c[idx[j]]);
    let w2 = 2.0 * weight;
    let (pinv, proj) = pinv_and_null_projector(&ai)?;
    let xi = &pinv * &lp.b - (&proj * &ci) / w2;
    let y = pinv.tr_mul(&(&xi * w2 + &ci));
    let scale = 1.0 + inf_norm(&lp.b);
    if inf_norm(&(&ai * &xi - &lp.b)) > 1e-9 * scale {
        return None;
    }
    let mut x = DVector::zeros(lp.num_vars());
    for (j, &i) in idx.iter().enumerate() {
        x[i] = xi[j];
    }
    Some((x, y))
}

fn polish(lp: &StandardFormLP, weight: f64, sol: &mut QpSolution) {
    let idx: Vec<usize> = (0..lp.num_vars()).filter(|&i| sol.inactive[i]).collect();
    let Some((x, y)) = equality_qp(lp, weight, &idx) else {
        return;
    };
    let tol = 1e-9 * (1.0 + inf_norm(&lp.c));
    if x.iter().any(|v| *v < -tol) {
        return;
    }
    let s = &lp.c + &x * (2.0 * weight) - lp.a.tr_mul(&y);
    if (0..lp.num_vars()).any(|i| !sol.inactive[i] && s[i] < -tol) {
        return;
    }
    sol.x = x.map(|v| v.max(0.0));
    sol.s = s.map(|v| v.max(0.0));
    for i in 0..lp.num_vars() {
        if sol.inactive[i] {
            sol.s[i] = 0.0;
        }
    }
    sol.y = y;
    sol.polished = true;
}

/// Jacobian of the regularized QP's solution on its inactive set `I`:
/// `J_x[I, I] = -P_null(A_I) / 2w`, `J_y[:, I] = pinv(A_I')`, zero elsewhere.
/// With every component active the Jacobian is zero and `degenerate` is set.
pub fn dxdc_kkt_squared(lp: &StandardFormLP, weight: f64) -> Result<Jacobian> {
    let sol = solve_regularized_qp(lp, weight)?;
    let k = lp.num_vars();
    let p = lp.num_rows();
    let idx: Vec<usize> = (0..k).filter(|&i| sol.inactive[i]).collect();
    let mut jx = DMatrix::zeros(k, k);
    let mut jy = DMatrix::zeros(p, k);
    if idx.is_empty() {
        return Ok(Jacobian {
            dx_dc: jx,
            dy_dc: Some(jy),
            dtau_dc: None,
            degenerate: true,
        });
    }
    let ai = columns(&lp.a, &idx);
    let (pinv, proj) = pinv_and_null_projector(&ai).ok_or_else(|| {
        Error::NumericalFailure("pseudo-inverse of the inactive columns failed".into())
    })?;
    let w2 = 2.0 * weight;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            jx[(i, j)] = -proj[(a, b)] / w2;
        }
        for r in 0..p {
            jy[(r, i)] = pinv[(a, r)];
        }
    }
    Ok(Jacobian {
        dx_dc: jx,
        dy_dc: Some(jy),
        dtau_dc: None,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerate every candidate inactive set and keep the best KKT point.
    fn brute_force_qp(lp: &StandardFormLP, w: f64) -> DVector<f64> {
        let k = lp.num_vars();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let Some((x, _)) = equality_qp(lp, w, &idx) else {
                continue;
            };
            if x.iter().any(|v| *v < -1e-12) {
                continue;
            }
            let f = lp.c.dot(&x) + w * x.norm_squared();
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, x));
            }
        }
        best.unwrap().1
    }

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
    fn matches_active_set_enumeration() {
        let lp = StandardFormLP::new(
            DVector::from_row_slice(&[0.4, -0.3, 0.9, 0.1, -0.2]),
            DMatrix::from_row_slice(2, 5, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 2.0, 0.0, 0.5]),
            DVector::from_row_slice(&[2.0, 0.7]),
        )
        .unwrap();
        for w in [0.05, 0.1, 1.0] {
            let sol = solve_regularized_qp(&lp, w).unwrap();
            let oracle = brute_force_qp(&lp, w);
            assert!(
                (&sol.x - &oracle).amax() < 1e-8,
                "w={w}: {} vs {}",
                sol.x,
                oracle
            );
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let lp = simplex(&[0.3, -0.2, 0.1, 0.9]);
        let w = 0.5;
        let jac = dxdc_kkt_squared(&lp, w).unwrap();
        assert!(!jac.degenerate);
        let h = 1e-6;
        for j in 0..4 {
            let mut cp = lp.c.clone();
            cp[j] += h;
            let mut cm = lp.c.clone();
            cm[j] -= h;
            let xp = solve_regularized_qp(&lp.with_cost(cp), w).unwrap().x;
            let xm = solve_regularized_qp(&lp.with_cost(cm), w).unwrap().x;
            let fd = (xp - xm) / (2.0 * h);
            for i in 0..4 {
                assert!((fd[i] - jac.dx_dc[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn active_components_have_zero_rows_and_columns() {
        let lp = simplex(&[0.0, 5.0, 0.1]);
        let sol = solve_regularized_qp(&lp, 0.1).unwrap();
        assert_eq!(sol.inactive, vec![true, false, true]);
        let jac = dxdc_kkt_squared(&lp, 0.1).unwrap().dx_dc;
        assert!(jac
            .row(1)
            .iter()
            .chain(jac.column(1).iter())
            .all(|v| *v == 0.0));
    }

    #[test]
    fn all_active_is_degenerate_zero() {
        let lp = StandardFormLP::new(
            DVector::from_row_slice(&[1.0, 2.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        let jac = dxdc_kkt_squared(&lp, 0.1).unwrap();
        assert!(jac.degenerate);
        assert!(jac.dx_dc.iter().all(|v| *v == 0.0));
    }
}
