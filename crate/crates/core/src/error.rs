use thiserror::Error;

use crate::solver::LpSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions of the supplied data do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("constraint matrix is rank deficient after presolve")]
    RankDeficient,

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    /// The homogeneous embedding drove tau to zero while kappa stayed positive.
    #[error("primal or dual infeasibility certificate found (tau = {tau:e}, kappa = {kappa:e})")]
    InfeasibleOrUnbounded { tau: f64, kappa: f64 },

    #[error(
        "interior-point iteration did not reach the lambda cut-off within {iterations} iterations"
    )]
    Unconverged {
        iterations: usize,
        best: Box<LpSolution>,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_)
                | Error::Unconverged { .. }
                | Error::InfeasibleOrUnbounded { .. }
        )
    }
}
