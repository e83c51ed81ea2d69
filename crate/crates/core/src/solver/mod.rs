//! Forward pass: homogeneous self-dual interior-point iteration with early
//! stopping once the barrier parameter drops below a cut-off.
//!
//! Each iteration solves the reduced Newton system for the current
//! `(gamma, eta)` pair, takes the largest step keeping `x, t, tau, kappa`
//! strictly positive, and updates `lambda = (x't + tau kappa) / (k + 1)`.
//! With `eta = 1 - gamma` both the residuals and `lambda` shrink by exactly
//! `1 - eta * omega` per step, so the final step can be shortened to land on
//! the cut-off. A few pure centering steps (`gamma = 1`, `eta = 0`) then move
//! the iterate onto the central path without changing `lambda` or the
//! residuals, which makes the returned point a smooth function of `c`.

mod newton;
mod point;

pub use newton::{
    assemble_reduced_matrix, direction, newton_rhs, normal_matrix, recover_dt_dkappa,
    solve_reduced, NewtonRhs, ReducedSystem,
};
pub use point::{initialize, step_size, Direction, InteriorPoint};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::lp::StandardFormLP;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `lambda` falls below this value.
    pub lambda_cutoff: f64,
    pub max_iter: usize,
    /// Centering parameter in `[0, 1)`.
    pub gamma: f64,
    /// Residual-reduction weight; `1 - gamma` keeps gap and residuals in lockstep.
    pub eta: f64,
    /// Fraction of the distance to the boundary a step may cover.
    pub step_fraction: f64,
    /// Tikhonov damping used when the normal matrix fails to factor.
    pub damping: f64,
    /// Shorten the last step so `lambda` lands just below the cut-off.
    pub land_on_cutoff: bool,
    /// Maximum number of centering steps after the cut-off is reached.
    pub centering_steps: usize,
    /// Mehrotra-style predictor-corrector instead of fixed `(gamma, eta)`.
    pub predictor_corrector: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_cutoff: 1e-8,
            max_iter: 200,
            gamma: 0.1,
            eta: 0.9,
            step_fraction: 0.99,
            damping: 1e-6,
            land_on_cutoff: true,
            centering_steps: 5,
            predictor_corrector: false,
        }
    }
}

impl SolverConfig {
    pub fn with_cutoff(lambda_cutoff: f64) -> Self {
        Self {
            lambda_cutoff,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cutoff > 0.0) {
            return Err(Error::Config("lambda cut-off must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config("eta must lie in (0, 1]".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::Config("step fraction must lie in (0, 1)".into()));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::Config("damping must be nonnegative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `||A x - b||_inf` at the scaled solution.
    pub primal: f64,
    /// `||A'y + t - c||_inf` at the scaled solution.
    pub dual: f64,
    /// `x't` at the scaled solution.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    /// Primal solution: the scaled iterate `x / tau` with its residual removed
    /// through the apparently basic components (`x_i >= t_i`) only, by a
    /// least-squares step `x_B -= pinv(A_B) (Ax - b)`. The other components and
    /// `t` are untouched, so `x > 0` and `x't ~ k * lambda_final` survive.
    pub x: DVector<f64>,
    /// `(x - theta * delta) / tau`, where `delta` is the fixed minimum-norm
    /// vector with `A delta = A e - b`. The iterate's primal residual is exactly
    /// `theta (A e - b)`, so this is also feasible, and since `delta` does not
    /// depend on `c` it is the map the HSD backward pass differentiates.
    pub x_shifted: DVector<f64>,
    pub y: DVector<f64>,
    pub t: DVector<f64>,
    pub objective: f64,
    /// Barrier parameter of the scaled point, `lambda / tau^2`; `x't ~ k * lambda_final`.
    pub lambda_final: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Unscaled iterate at termination; the backward pass starts from here.
    pub terminal: InteriorPoint,
}

impl LpSolution {
    fn from_point(lp: &StandardFormLP, pt: &InteriorPoint, iterations: usize) -> Self {
        let s = pt.scaled();
        let mut x_shifted = s.x.clone();
        if let Some(delta) = primal_correction(lp) {
            x_shifted.axpy(-s.theta, &delta, 1.0);
        }
        let x = basic_projection(lp, &s).unwrap_or_else(|| s.x.clone());
        let primal = inf_norm(&(&lp.a * &x - &lp.b));
        let dual = inf_norm(&(lp.a.tr_mul(&s.y) + &s.t - &lp.c));
        LpSolution {
            objective: lp.c.dot(&x),
            residuals: Residuals {
                primal,
                dual,
                gap: x.dot(&s.t),
            },
            lambda_final: s.lambda,
            x,
            x_shifted,
            y: s.y,
            t: s.t,
            iterations,
            terminal: pt.clone(),
        }
    }
}

fn basic_projection(lp: &StandardFormLP, s: &InteriorPoint) -> Option<DVector<f64>> {
    let basic: Vec<usize> = (0..s.dim()).filter(|&i| s.x[i] >= s.t[i]).collect();
    if basic.is_empty() {
        return None;
    }
    let r = &lp.a * &s.x - &lp.b;
    let ab = lp.a.select_columns(&basic);
    let tol = 1e-12 * ab.amax().max(1e-300);
    let step = ab.pseudo_inverse(tol).ok()? * &r;
    let mut x = s.x.clone();
    for (j, &i) in basic.iter().enumerate() {
        x[i] -= step[j];
    }
    let better = inf_norm(&(&lp.a * &x - &lp.b)) <= inf_norm(&r);
    (better && x.iter().all(|v| *v > 0.0)).then_some(x)
}

/// Minimum-norm `delta` with `A delta = A e - b`, the direction of the primal
/// residual carried by every iterate started from `x = e, tau = 1`.
pub fn primal_correction(lp: &StandardFormLP) -> Option<DVector<f64>> {
    let r0 = lp.a.column_sum() - &lp.b;
    let gram = &lp.a * lp.a.transpose();
    let chol = nalgebra::Cholesky::new(gram)?;
    Some(lp.a.tr_mul(&chol.solve(&r0)))
}

/// Iterates with `tau` below this while `kappa` stays above `KAPPA_FLOOR` certify infeasibility.
const TAU_FLOOR: f64 = 1e-10;
const KAPPA_FLOOR: f64 = 1e-6;

/// Solve `lp` (presolved, full row rank) up to the configured cut-off.
pub fn solve(lp: &StandardFormLP, cfg: &SolverConfig) -> Result<LpSolution> {
    cfg.validate()?;
    let k = lp.num_vars();
    let p = lp.num_rows();
    if k == 0 || p == 0 {
        return Err(Error::Structural(format!(
            "need k, p >= 1 (k = {k}, p = {p})"
        )));
    }
    let mut pt = initialize(k, p);
    let mut iterations = 0;

    while pt.lambda >= cfg.lambda_cutoff {
        if iterations >= cfg.max_iter {
            return Err(Error::Unconverged {
                iterations,
                best: Box::new(LpSolution::from_point(lp, &pt, iterations)),
            });
        }
        let sys = ReducedSystem::factorize(lp, &pt, 0.0, cfg.damping)?;
        let (d, eta) = if cfg.predictor_corrector {
            predictor_corrector_direction(lp, &pt, &sys)
        } else {
            let rhs = newton_rhs(&pt, lp, cfg.gamma, cfg.eta);
            (direction(lp, &pt, &sys, &rhs), cfg.eta)
        };
        check_finite(&d)?;
        let mut omega = step_size(&pt, &d, cfg.step_fraction);
        if cfg.land_on_cutoff
            && !cfg.predictor_corrector
            && (cfg.gamma + cfg.eta - 1.0).abs() < 1e-12
        {
            // lambda_new = (1 - eta omega) lambda exactly; aim just under the cut-off.
            let target = cfg.lambda_cutoff * (1.0 - 1e-9);
            let landing = (1.0 - target / pt.lambda) / eta;
            if landing > 0.0 && landing < omega {
                omega = landing;
            }
        }
        pt.advance(&d, omega);
        pt.theta *= 1.0 - eta * omega;
        iterations += 1;
        if !pt.is_strictly_interior() {
            return Err(Error::NumericalFailure(format!(
                "iterate left the interior at iteration {iterations}"
            )));
        }
        if pt.tau < TAU_FLOOR && pt.kappa > KAPPA_FLOOR {
            return Err(Error::InfeasibleOrUnbounded {
                tau: pt.tau,
                kappa: pt.kappa,
            });
        }
    }

    center(lp, &mut pt, cfg)?;

    // At the cut-off a feasible problem has tau of order one; an infeasible
    // one has tau ~ lambda / kappa.
    if pt.tau < 1e-6 * pt.kappa.min(1.0) {
        return Err(Error::InfeasibleOrUnbounded {
            tau: pt.tau,
            kappa: pt.kappa,
        });
    }
    Ok(LpSolution::from_point(lp, &pt, iterations))
}

/// Centering steps at fixed `lambda` and residuals. Stops early once every
/// product `x_i t_i` and `tau kappa` is within `1e-12` relative of `lambda`.
fn center(lp: &StandardFormLP, pt: &mut InteriorPoint, cfg: &SolverConfig) -> Result<()> {
    for _ in 0..cfg.centering_steps {
        let lam = pt.lambda;
        let off =
            pt.x.iter()
                .zip(pt.t.iter())
                .map(|(x, t)| (x * t - lam).abs())
                .fold((pt.tau * pt.kappa - lam).abs(), f64::max);
        if off <= 1e-12 * lam {
            break;
        }
        let sys = ReducedSystem::factorize(lp, pt, 0.0, cfg.damping)?;
        let rhs = newton_rhs(pt, lp, 1.0, 0.0);
        let d = direction(lp, pt, &sys, &rhs);
        check_finite(&d)?;
        let omega = step_size(pt, &d, cfg.step_fraction);
        pt.advance(&d, omega);
        if !pt.is_strictly_interior() {
            return Err(Error::NumericalFailure(
                "centering step left the interior".into(),
            ));
        }
    }
    Ok(())
}

/// Affine-scaling predictor followed by a centered corrector with the
/// second-order term; returns the corrector and its `eta`.
fn predictor_corrector_direction(
    lp: &StandardFormLP,
    pt: &InteriorPoint,
    sys: &ReducedSystem,
) -> (Direction, f64) {
    let aff_rhs = newton_rhs(pt, lp, 0.0, 1.0);
    let aff = direction(lp, pt, sys, &aff_rhs);
    let w = step_size(pt, &aff, 1.0);
    let k = pt.dim() as f64;
    let gap_aff = (&pt.x + &aff.dx * w).dot(&(&pt.t + &aff.dt * w))
        + (pt.tau + w * aff.dtau) * (pt.kappa + w * aff.dkappa);
    let sigma = ((gap_aff / (k + 1.0)) / pt.lambda)
        .powi(3)
        .clamp(0.0, 1.0 - 1e-3);
    let eta = 1.0 - sigma;
    let mut rhs = newton_rhs(pt, lp, sigma, eta);
    rhs.r_xt -= aff.dx.component_mul(&aff.dt);
    rhs.r_tk -= aff.dtau * aff.dkappa;
    (direction(lp, pt, sys, &rhs), eta)
}

fn check_finite(d: &Direction) -> Result<()> {
    let ok =
        d.dx.iter()
            .chain(d.dy.iter())
            .chain(d.dt.iter())
            .all(|v| v.is_finite())
            && d.dtau.is_finite()
            && d.dkappa.is_finite();
    if ok {
        Ok(())
    } else {
        Err(Error::NumericalFailure(
            "Newton direction is not finite".into(),
        ))
    }
}
