//! Benchmark problem families, their exact discrete oracles, and synthetic data.
//!
//! Every family exposes the same shape: a prediction target of length `d`
//! (item values, edge weights or slot prices), a relaxed LP whose standard-form
//! cost is a fixed linear map `S` of the target, and an exact oracle for the
//! discrete problem.

mod dataset;
mod enumerate;
mod generate;
mod knapsack;
mod random;
mod scheduling;
mod shortest_path;

pub use dataset::{Dataset, DatasetSpec, Instance};
pub use enumerate::{brute_force_milp, MAX_BINARIES};
pub use generate::{generate, GeneratorConfig, KnapsackGen, SchedulingGen, ShortestPathGen};
pub use knapsack::{knapsack_oracle, knapsack_to_lp, KnapsackSpec, COST_SCALE};
pub use random::{random_feasible_lp, random_interior_lp};
pub use scheduling::{
    scheduling_oracle, scheduling_to_lp, Machine, SchedulingSpec, StartVar, Task,
};
pub use shortest_path::{
    dijkstra_oracle, endpoint_rhs, grid_graph, path_indicator, random_dag, reachable,
    second_best_gap, shortestpath_to_lp, ShortestPathSpec,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{to_standard_form, GeneralProblem, Sense, StandardFormLP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemSpec {
    Knapsack(KnapsackSpec),
    #[serde(rename = "shortestpath")]
    ShortestPath(ShortestPathSpec),
    Scheduling(SchedulingSpec),
}

/// Standard-form LP with the map from prediction target to its cost vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LpStructure {
    /// The LP with a zero cost vector.
    pub lp: StandardFormLP,
    /// `k x d`; standard-form cost is `cost_map * target`.
    pub cost_map: DMatrix<f64>,
}

impl LpStructure {
    pub fn cost(&self, target: &DVector<f64>) -> DVector<f64> {
        &self.cost_map * target
    }

    pub fn lp_for(&self, target: &DVector<f64>) -> StandardFormLP {
        self.lp.with_cost(self.cost(target))
    }

    /// Gradient with respect to the target from a gradient with respect to the standard-form cost.
    pub fn pull_back(&self, grad_cost: &DVector<f64>) -> DVector<f64> {
        self.cost_map.tr_mul(grad_cost)
    }
}

/// Exact solution of the discrete problem, in the original variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub x: DVector<f64>,
    /// Objective in the problem's own sense.
    pub objective: f64,
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Knapsack(_) => "knapsack",
            ProblemSpec::ShortestPath(_) => "shortestpath",
            ProblemSpec::Scheduling(_) => "scheduling",
        }
    }

    pub fn sense(&self) -> Sense {
        match self {
            ProblemSpec::Knapsack(_) => Sense::Max,
            _ => Sense::Min,
        }
    }

    pub fn target_len(&self) -> usize {
        match self {
            ProblemSpec::Knapsack(s) => s.num_items(),
            ProblemSpec::ShortestPath(s) => s.num_edges(),
            ProblemSpec::Scheduling(s) => s.num_slots,
        }
    }

    fn check_override(&self, b_override: Option<&[f64]>) -> Result<()> {
        match (self, b_override) {
            (ProblemSpec::ShortestPath(_), _) | (_, None) => Ok(()),
            _ => Err(Error::Config(format!(
                "{} instances do not take a right-hand-side override",
                self.name()
            ))),
        }
    }

    /// Original-variable cost as a linear map of the target (`n x d`).
    pub fn original_cost_map(&self) -> Result<DMatrix<f64>> {
        match self {
            ProblemSpec::Knapsack(s) => Ok(DMatrix::identity(s.num_items(), s.num_items())),
            ProblemSpec::ShortestPath(s) => Ok(DMatrix::identity(s.num_edges(), s.num_edges())),
            ProblemSpec::Scheduling(s) => s.cost_map(),
        }
    }

    pub fn to_problem(&self, target: &[f64], b_override: Option<&[f64]>) -> Result<GeneralProblem> {
        self.check_override(b_override)?;
        if target.len() != self.target_len() {
            return Err(Error::Shape(format!(
                "target has {} entries, expected {}",
                target.len(),
                self.target_len()
            )));
        }
        match self {
            ProblemSpec::Knapsack(s) => knapsack_to_lp(s, target),
            ProblemSpec::ShortestPath(s) => shortestpath_to_lp(&s.resolve(b_override)?, target),
            ProblemSpec::Scheduling(s) => scheduling_to_lp(s, target),
        }
    }

    pub fn structure(&self, b_override: Option<&[f64]>) -> Result<LpStructure> {
        let zero = vec![0.0; self.target_len()];
        let lp = to_standard_form(&self.to_problem(&zero, b_override)?)?;
        let m = self.original_cost_map()?;
        let mut cost_map = DMatrix::zeros(lp.num_vars(), m.ncols());
        cost_map
            .rows_mut(0, m.nrows())
            .copy_from(&(m * lp.sense_sign));
        Ok(LpStructure { lp, cost_map })
    }

    /// Exact discrete optimum under `target`.
    pub fn decide(&self, target: &[f64], b_override: Option<&[f64]>) -> Result<Decision> {
        self.check_override(b_override)?;
        if target.len() != self.target_len() {
            return Err(Error::Shape(format!(
                "target has {} entries, expected {}",
                target.len(),
                self.target_len()
            )));
        }
        match self {
            ProblemSpec::Knapsack(s) => {
                let (chosen, objective) = knapsack_oracle(target, &s.costs, s.budget)?;
                let mut x = DVector::zeros(s.num_items());
                for i in chosen {
                    x[i] = 1.0;
                }
                Ok(Decision { x, objective })
            }
            ProblemSpec::ShortestPath(s) => {
                let s = s.resolve(b_override)?;
                let (path, objective) = dijkstra_oracle(&s, target)?;
                Ok(Decision {
                    x: DVector::from_vec(path_indicator(s.num_edges(), &path)),
                    objective,
                })
            }
            ProblemSpec::Scheduling(s) => {
                let (x, objective) = scheduling_oracle(s, target)?;
                Ok(Decision {
                    x: DVector::from_vec(x),
                    objective,
                })
            }
        }
    }

    /// Objective of an original-variable decision under `target`.
    pub fn objective(&self, target: &[f64], x: &DVector<f64>) -> Result<f64> {
        let m = self.original_cost_map()?;
        if x.len() != m.nrows() {
            return Err(Error::Shape(format!(
                "decision has {} entries, expected {}",
                x.len(),
                m.nrows()
            )));
        }
        Ok((m * DVector::from_row_slice(target)).dot(x))
    }

    /// Exact regret of acting on `predicted` when the truth is `truth`.
    pub fn regret(
        &self,
        truth: &[f64],
        predicted: &[f64],
        b_override: Option<&[f64]>,
    ) -> Result<f64> {
        let best = self.decide(truth, b_override)?;
        let chosen = self.decide(predicted, b_override)?;
        let realized = self.objective(truth, &chosen.x)?;
        Ok(self.sense().sign() * (realized - best.objective))
    }
}
