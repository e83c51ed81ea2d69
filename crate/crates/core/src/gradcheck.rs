//! Finite-difference checks of the analytic Jacobians and residuals of their
//! defining linear systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grad::{
    barrier_solve, dxdc_hsd, dxdc_kkt_logbarrier, dxdc_kkt_squared, hsd_rhs_column,
    solve_hsd_system, solve_regularized_qp, BackwardContext, Formulation, GradConfig, Jacobian,
};
use crate::linalg::cosine_similarity;
use crate::lp::StandardFormLP;
use crate::solver::{solve, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub formulation: Formulation,
    /// Forward cut-off for `hsd`, barrier weight for `kkt-log`.
    pub lambda_cutoff: f64,
    pub fd_step: f64,
    pub damping: f64,
    pub squared_weight: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Hsd,
            lambda_cutoff: 0.1,
            fd_step: 1e-4,
            damping: 0.0,
            squared_weight: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub formulation: Formulation,
    pub lambda_cutoff: f64,
    pub fd_step: f64,
    pub column_cosines: Vec<f64>,
    pub column_relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub frobenius_relative_error: f64,
    /// Largest absolute entry of the analytic Jacobian.
    pub analytic_max_abs: f64,
    /// Residual of the defining linear system, relative to `1 + ||rhs||`.
    pub system_residual: f64,
}

impl GradCheckReport {
    pub fn fraction_of_columns_above(&self, cosine: f64) -> f64 {
        if self.column_cosines.is_empty() {
            return 1.0;
        }
        self.column_cosines.iter().filter(|c| **c >= cosine).count() as f64
            / self.column_cosines.len() as f64
    }
}

fn rel(diff: f64, a: f64, b: f64) -> f64 {
    diff / a.max(b).max(1e-6)
}

/// Forward map used for the finite differences and the matching analytic Jacobian.
fn analytic(lp: &StandardFormLP, cfg: &GradCheckConfig) -> Result<(Jacobian, f64)> {
    match cfg.formulation {
        Formulation::Hsd => {
            let sol = solve(lp, &SolverConfig::with_cutoff(cfg.lambda_cutoff))?;
            let ctx = BackwardContext::from_solution(lp, &sol, cfg.damping)?;
            Ok((dxdc_hsd(&ctx, true)?, hsd_system_residual(&ctx, true)))
        }
        Formulation::KktLogBarrier => {
            let bp = barrier_solve(lp, cfg.lambda_cutoff)?;
            let ctx = BackwardContext::from_barrier(lp, &bp, cfg.damping)?;
            let jac = dxdc_kkt_logbarrier(&ctx)?;
            let res = logbarrier_system_residual(&ctx, &jac);
            Ok((jac, res))
        }
        Formulation::KktSquared => {
            let jac = dxdc_kkt_squared(lp, cfg.squared_weight)?;
            let res = squared_system_residual(lp, cfg.squared_weight, &jac)?;
            Ok((jac, res))
        }
    }
}

fn forward(lp: &StandardFormLP, cfg: &GradCheckConfig) -> Result<DVector<f64>> {
    Ok(match cfg.formulation {
        Formulation::Hsd => solve(lp, &SolverConfig::with_cutoff(cfg.lambda_cutoff))?.x_shifted,
        Formulation::KktLogBarrier => barrier_solve(lp, cfg.lambda_cutoff)?.x,
        Formulation::KktSquared => solve_regularized_qp(lp, cfg.squared_weight)?.x,
    })
}

/// Central finite differences of the forward map, one column per cost component.
pub fn finite_difference_jacobian(
    lp: &StandardFormLP,
    cfg: &GradCheckConfig,
) -> Result<DMatrix<f64>> {
    let k = lp.num_vars();
    let h = cfg.fd_step;
    let mut fd = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut cp = lp.c.clone();
        cp[j] += h;
        let mut cm = lp.c.clone();
        cm[j] -= h;
        let col = (forward(&lp.with_cost(cp), cfg)? - forward(&lp.with_cost(cm), cfg)?) / (2.0 * h);
        fd.set_column(j, &col);
    }
    Ok(fd)
}

pub fn grad_check(lp: &StandardFormLP, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    GradConfig {
        formulation: cfg.formulation,
        damping: cfg.damping,
        squared_weight: cfg.squared_weight,
        residual_correction: true,
    }
    .validate()?;
    let (jac, system_residual) = analytic(lp, cfg)?;
    let fd = finite_difference_jacobian(lp, cfg)?;
    let a = &jac.dx_dc;
    let k = lp.num_vars();
    let mut column_cosines = Vec::with_capacity(k);
    let mut column_relative_errors = Vec::with_capacity(k);
    for j in 0..k {
        let ac: Vec<f64> = a.column(j).iter().copied().collect();
        let fc: Vec<f64> = fd.column(j).iter().copied().collect();
        column_cosines.push(cosine_similarity(&ac, &fc));
        column_relative_errors.push(rel(
            (a.column(j) - fd.column(j)).norm(),
            a.column(j).norm(),
            fd.column(j).norm(),
        ));
    }
    let max_relative_error = column_relative_errors
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v));
    Ok(GradCheckReport {
        formulation: cfg.formulation,
        lambda_cutoff: cfg.lambda_cutoff,
        fd_step: cfg.fd_step,
        column_cosines,
        column_relative_errors,
        max_relative_error,
        frobenius_relative_error: rel((a - &fd).norm(), a.norm(), fd.norm()),
        analytic_max_abs: a.amax(),
        system_residual,
    })
}

/// Largest `||K s_j - r_j|| / (1 + ||r_j||)` over the HSD backward columns.
pub fn hsd_system_residual(ctx: &BackwardContext, residual_correction: bool) -> f64 {
    let (sx, sy, st) = solve_hsd_system(ctx, residual_correction);
    let kmat = ctx.system_matrix();
    let k = ctx.lp.num_vars();
    let p = ctx.lp.num_rows();
    (0..k)
        .map(|j| {
            let mut s = DVector::zeros(k + p + 1);
            s.rows_mut(0, k).copy_from(&sx.column(j));
            s.rows_mut(k, p).copy_from(&sy.column(j));
            s[k + p] = st[j];
            let r = hsd_rhs_column(ctx, j, residual_correction);
            (&kmat * s - &r).norm() / (1.0 + r.norm())
        })
        .fold(0.0, f64::max)
}

/// Residual of `[[lambda X^-2, -A'], [A, 0]] [J_x; J_y] = -[I; 0]`.
pub fn logbarrier_system_residual(ctx: &BackwardContext, jac: &Jacobian) -> f64 {
    let lp = &ctx.lp;
    let lam = ctx.barrier_weight();
    let h = ctx.point.x.map(|xi| lam / (xi * xi));
    let jy = jac
        .dy_dc
        .as_ref()
        .expect("log-barrier Jacobian carries dy/dc");
    let mut top = DMatrix::from_fn(lp.num_vars(), lp.num_vars(), |i, j| {
        h[i] * jac.dx_dc[(i, j)]
    }) - lp.a.tr_mul(jy);
    for i in 0..lp.num_vars() {
        top[(i, i)] += 1.0;
    }
    let bottom = &lp.a * &jac.dx_dc;
    let rhs_norm = (lp.num_vars() as f64).sqrt();
    top.norm().max(bottom.norm()) / (1.0 + rhs_norm)
}

/// Residual of `[[2w I, -A_I'], [A_I, 0]] [J_x; J_y] = -[I; 0]` on the inactive set.
pub fn squared_system_residual(lp: &StandardFormLP, weight: f64, jac: &Jacobian) -> Result<f64> {
    if jac.degenerate {
        return Ok(0.0);
    }
    let sol = solve_regularized_qp(lp, weight)?;
    let idx: Vec<usize> = (0..lp.num_vars()).filter(|&i| sol.inactive[i]).collect();
    let jy = jac.dy_dc.as_ref().expect("squared Jacobian carries dy/dc");
    let n = idx.len();
    let ai = DMatrix::from_fn(lp.num_rows(), n, |r, j| lp.a[(r, idx[j])]);
    let jx = DMatrix::from_fn(n, n, |a, b| jac.dx_dc[(idx[a], idx[b])]);
    let jyi = DMatrix::from_fn(lp.num_rows(), n, |r, b| jy[(r, idx[b])]);
    let mut top = &jx * (2.0 * weight) - ai.tr_mul(&jyi);
    for i in 0..n {
        top[(i, i)] += 1.0;
    }
    let bottom = &ai * &jx;
    Ok(top.norm().max(bottom.norm()) / (1.0 + (n as f64).sqrt()))
}
