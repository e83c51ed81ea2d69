#![allow(dead_code)]

use lpdiff::lp::{GeneralProblem, StandardFormLP};
use nalgebra::{DMatrix, DVector};

/// All `r`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Optimum of `min c'x, Ax = b, x >= 0` over all basic feasible solutions.
/// Assumes the problem is bounded and `A` has full row rank.
pub fn vertex_enumeration(lp: &StandardFormLP) -> Option<(DVector<f64>, f64)> {
    let (p, k) = lp.a.shape();
    let tol = 1e-9 * (1.0 + lp.b.amax());
    let mut best: Option<(DVector<f64>, f64)> = None;
    for basis in combinations(k, p) {
        let bmat = lp.a.select_columns(&basis);
        let Some(xb) = bmat.clone().lu().solve(&lp.b) else {
            continue;
        };
        if (&bmat * &xb - &lp.b).amax() > tol || xb.iter().any(|v| *v < -tol || !v.is_finite()) {
            continue;
        }
        let mut x = DVector::zeros(k);
        for (i, &j) in basis.iter().enumerate() {
            x[j] = xb[i].max(0.0);
        }
        let obj = lp.c.dot(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}

/// Optimum of a general problem by enumerating vertices of its own polyhedron:
/// every equality row plus enough tight inequality or sign constraints to pin
/// down all variables. Returned in the problem's own sense.
pub fn general_vertex_enumeration(p: &GeneralProblem) -> Option<(DVector<f64>, f64)> {
    let n = p.num_vars();
    let m_eq = p.a_eq.nrows();
    let m_ub = p.a_ub.nrows();
    if m_eq > n {
        return None;
    }
    // Candidate tight constraints: inequality rows, then x_j >= 0.
    let mut rows: Vec<(DVector<f64>, f64)> = (0..m_ub)
        .map(|i| (p.a_ub.row(i).transpose(), p.b_ub[i]))
        .collect();
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        rows.push((e, 0.0));
    }
    let tol = 1e-9
        * (1.0
            + p.b_eq
                .iter()
                .chain(p.b_ub.iter())
                .fold(0.0f64, |a, v| a.max(v.abs())));
    let mut best: Option<(DVector<f64>, f64)> = None;
    for tight in combinations(rows.len(), n - m_eq) {
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..m_eq {
            m.set_row(i, &p.a_eq.row(i));
            rhs[i] = p.b_eq[i];
        }
        for (r, &t) in tight.iter().enumerate() {
            m.set_row(m_eq + r, &rows[t].0.transpose());
            rhs[m_eq + r] = rows[t].1;
        }
        let Some(x) = m.lu().solve(&rhs) else {
            continue;
        };
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        let feasible = x.iter().all(|v| *v >= -tol)
            && (&p.a_eq * &x - &p.b_eq).iter().all(|v| v.abs() <= tol)
            && (&p.a_ub * &x - &p.b_ub).iter().all(|v| *v <= tol);
        if !feasible {
            continue;
        }
        let obj = p.objective(&x);
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| p.sense.sign() * (obj - b) < 0.0);
        if better {
            best = Some((x, obj));
        }
    }
    best
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
