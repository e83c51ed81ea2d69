//! Backward pass: `dx*/dc` for the forward map and its vector-Jacobian product.
//!
//! Three formulations are available. [`Formulation::Hsd`] differentiates the
//! homogeneous self-dual system at the terminal iterate and reuses the reduced
//! Newton matrix of the forward pass (with `M` replaced by `M + alpha I`).
//! [`Formulation::KktLogBarrier`] differentiates the KKT conditions of the
//! log-barrier problem at the terminal point. [`Formulation::KktSquared`]
//! differentiates a quadratically regularized problem on its inactive set.

mod barrier;
mod squared;

pub use barrier::{barrier_solve, dxdc_kkt_logbarrier, BarrierPoint};
pub use squared::{dxdc_kkt_squared, solve_regularized_qp, QpSolution, ACTIVE_TOL};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use crate::linalg::damp;

use crate::error::{Error, Result};
use crate::lp::StandardFormLP;
use crate::solver::{
    assemble_reduced_matrix, primal_correction, InteriorPoint, LpSolution, ReducedSystem,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Formulation {
    #[default]
    #[serde(rename = "hsd")]
    Hsd,
    #[serde(rename = "kkt-log")]
    KktLogBarrier,
    #[serde(rename = "kkt-sq")]
    KktSquared,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [
        Formulation::KktSquared,
        Formulation::KktLogBarrier,
        Formulation::Hsd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Hsd => "hsd",
            Formulation::KktLogBarrier => "kkt-log",
            Formulation::KktSquared => "kkt-sq",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hsd" => Ok(Formulation::Hsd),
            "kkt-log" => Ok(Formulation::KktLogBarrier),
            "kkt-sq" => Ok(Formulation::KktSquared),
            other => Err(Error::Config(format!(
                "unknown formulation '{other}' (expected hsd, kkt-log or kkt-sq)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradConfig {
    pub formulation: Formulation,
    /// Tikhonov damping `alpha` added to the normal matrix.
    pub damping: f64,
    /// Weight of `||x||^2` for [`Formulation::KktSquared`].
    pub squared_weight: f64,
    /// Account for the starting point's residuals that the terminal iterate
    /// still carries (a fraction `theta` of them) when forming the HSD
    /// right-hand side. Without it the system is the plain `[tau I; 0; x']`.
    pub residual_correction: bool,
}

impl Default for GradConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Hsd,
            damping: 1e-6,
            squared_weight: 0.1,
            residual_correction: true,
        }
    }
}

impl GradConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping >= 0.0) {
            return Err(Error::Config("damping must be nonnegative".into()));
        }
        if self.formulation == Formulation::KktSquared && !(self.squared_weight > 0.0) {
            return Err(Error::Config("squared-norm weight must be positive".into()));
        }
        Ok(())
    }
}

/// Jacobian of the solution with respect to the cost vector. Row `i`, column `j`
/// is `dx_i / dc_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub dx_dc: DMatrix<f64>,
    pub dy_dc: Option<DMatrix<f64>>,
    pub dtau_dc: Option<DVector<f64>>,
    /// True when there was nothing to differentiate and a zero matrix was returned.
    pub degenerate: bool,
}

impl Jacobian {
    fn check_finite(self) -> Result<Self> {
        if self.dx_dc.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NumericalFailure(
                "Jacobian has non-finite entries".into(),
            ))
        }
    }
}

/// Everything the backward pass needs from the forward pass.
///
/// The point is stored divided through by `tau` (so `tau = 1`, `kappa / tau`,
/// `theta / tau`); the reduced matrix is invariant under that scaling.
#[derive(Clone, Debug)]
pub struct BackwardContext {
    pub lp: StandardFormLP,
    pub point: InteriorPoint,
    /// Forward output being differentiated, equal to [`LpSolution::x_shifted`].
    pub x_out: DVector<f64>,
    /// Requested damping.
    pub alpha: f64,
    system: ReducedSystem,
}

impl BackwardContext {
    pub fn new(lp: &StandardFormLP, terminal: &InteriorPoint, alpha: f64) -> Result<Self> {
        if !terminal.is_strictly_interior() {
            return Err(Error::NumericalFailure(
                "backward pass needs a strictly interior point".into(),
            ));
        }
        let point = terminal.scaled();
        let mut x_out = point.x.clone();
        if point.theta != 0.0 {
            if let Some(delta) = primal_correction(lp) {
                x_out.axpy(-point.theta, &delta, 1.0);
            }
        }
        let system = ReducedSystem::factorize(lp, &point, alpha, alpha.max(1e-8))?;
        Ok(Self {
            lp: lp.clone(),
            point,
            x_out,
            alpha,
            system,
        })
    }

    pub fn from_solution(lp: &StandardFormLP, sol: &LpSolution, alpha: f64) -> Result<Self> {
        Self::new(lp, &sol.terminal, alpha)
    }

    /// Context at an exact barrier point (`x_i t_i = lambda`, zero residuals).
    pub fn from_barrier(lp: &StandardFormLP, bp: &BarrierPoint, alpha: f64) -> Result<Self> {
        let mut pt = InteriorPoint {
            x: bp.x.clone(),
            y: bp.y.clone(),
            t: bp.t.clone(),
            tau: 1.0,
            kappa: bp.lambda,
            lambda: 0.0,
            theta: 0.0,
        };
        pt.refresh_lambda();
        Self::new(lp, &pt, alpha)
    }

    /// Damping the normal-matrix factorization ended up using.
    pub fn damping_used(&self) -> f64 {
        self.system.damping()
    }

    /// Dense coefficient matrix of the backward system.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        assemble_reduced_matrix(&self.lp, &self.point)
    }

    /// Mean complementarity `x't / k` of the scaled point.
    pub fn barrier_weight(&self) -> f64 {
        self.point.x.dot(&self.point.t) / self.point.dim() as f64
    }
}

/// Right-hand side column `j` of the HSD backward system, stacked as `[r1; r2; r3]`.
///
/// Plain form: `[tau e_j; 0; x_j]`. With `residual_correction` the starting
/// residuals' dependence on `c` adds `-theta [tau0 e_j; 0; x0_j]` (`tau0 = 1`, `x0 = e`).
pub fn hsd_rhs_column(ctx: &BackwardContext, j: usize, residual_correction: bool) -> DVector<f64> {
    let k = ctx.lp.num_vars();
    let p = ctx.lp.num_rows();
    let theta = if residual_correction {
        ctx.point.theta
    } else {
        0.0
    };
    let mut r = DVector::zeros(k + p + 1);
    r[j] = ctx.point.tau - theta;
    r[k + p] = ctx.point.x[j] - theta;
    r
}

/// Raw solutions `(S_x, S_y, S_tau)` of the HSD backward system, one column per cost component.
pub fn solve_hsd_system(
    ctx: &BackwardContext,
    residual_correction: bool,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let k = ctx.lp.num_vars();
    let p = ctx.lp.num_rows();
    let mut sx = DMatrix::zeros(k, k);
    let mut sy = DMatrix::zeros(p, k);
    let mut st = DVector::zeros(k);
    for j in 0..k {
        let r = hsd_rhs_column(ctx, j, residual_correction);
        let (x1, x2, x3) = ctx.system.solve(
            &ctx.lp,
            &r.rows(0, k).into_owned(),
            &r.rows(k, p).into_owned(),
            r[k + p],
        );
        sx.set_column(j, &x1);
        sy.set_column(j, &x2);
        st[j] = x3;
    }
    (sx, sy, st)
}

/// HSD Jacobian of the forward output `x_out = (x - theta delta) / tau`:
/// `S_x - x_out S_tau'` at the scaled point.
pub fn dxdc_hsd(ctx: &BackwardContext, residual_correction: bool) -> Result<Jacobian> {
    let (sx, sy, st) = solve_hsd_system(ctx, residual_correction);
    let dx_dc = sx - &ctx.x_out * st.transpose();
    Jacobian {
        dx_dc,
        dy_dc: Some(sy),
        dtau_dc: Some(st),
        degenerate: false,
    }
    .check_finite()
}

/// Jacobian under the configured formulation.
pub fn jacobian(ctx: &BackwardContext, cfg: &GradConfig) -> Result<Jacobian> {
    cfg.validate()?;
    match cfg.formulation {
        Formulation::Hsd => dxdc_hsd(ctx, cfg.residual_correction),
        Formulation::KktLogBarrier => dxdc_kkt_logbarrier(ctx),
        Formulation::KktSquared => dxdc_kkt_squared(&ctx.lp, cfg.squared_weight),
    }
}

/// `(dx/dc)' grad_x`, formed from the full Jacobian.
pub fn vjp(ctx: &BackwardContext, cfg: &GradConfig, grad_x: &DVector<f64>) -> Result<DVector<f64>> {
    if grad_x.len() != ctx.lp.num_vars() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, solution has {}",
            grad_x.len(),
            ctx.lp.num_vars()
        )));
    }
    Ok(jacobian(ctx, cfg)?.dx_dc.tr_mul(grad_x))
}
