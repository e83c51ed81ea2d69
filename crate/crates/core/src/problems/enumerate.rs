use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lp::{GeneralProblem, Sense};

/// Most binary variables [`brute_force_milp`] will enumerate.
pub const MAX_BINARIES: usize = 22;

/// Exhaustive search over 0-1 assignments. Assignments are visited in
/// lexicographic order of the 0-1 vector, and a later one replaces the
/// incumbent only when strictly better, so ties go to the lexicographically
/// first optimum.
pub fn brute_force_milp(p: &GeneralProblem) -> Result<(DVector<f64>, f64)> {
    p.validate()?;
    let n = p.num_vars();
    if n > MAX_BINARIES {
        return Err(Error::Oracle(format!(
            "{n} binaries exceed the enumeration limit of {MAX_BINARIES}"
        )));
    }
    if p.integrality.iter().any(|f| !f) {
        return Err(Error::Oracle(
            "enumeration needs every variable to be binary".into(),
        ));
    }
    let scale = 1.0
        + p.b_eq
            .iter()
            .chain(p.b_ub.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()))
        + p.a_eq
            .iter()
            .chain(p.a_ub.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * scale;
    let sign = p.sense.sign();
    let mut best: Option<(f64, u32)> = None;
    let mut x = DVector::zeros(n);
    for mask in 0u32..(1u32 << n) {
        // Variable 0 is the most significant bit, so counting up is lexicographic.
        for i in 0..n {
            x[i] = ((mask >> (n - 1 - i)) & 1) as f64;
        }
        let eq_ok = (&p.a_eq * &x - &p.b_eq).iter().all(|r| r.abs() <= tol);
        if !eq_ok || (&p.a_ub * &x - &p.b_ub).iter().any(|r| *r > tol) {
            continue;
        }
        let obj = sign * p.c.dot(&x);
        if best.is_none_or(|(b, _)| obj < b - 1e-12 * (1.0 + b.abs())) {
            best = Some((obj, mask));
        }
    }
    let Some((obj, mask)) = best else {
        return Err(Error::Infeasible(
            "no 0-1 assignment satisfies the constraints".into(),
        ));
    };
    let x = DVector::from_fn(n, |i, _| ((mask >> (n - 1 - i)) & 1) as f64);
    Ok((
        x,
        match p.sense {
            Sense::Min => obj,
            Sense::Max => -obj,
        },
    ))
}
