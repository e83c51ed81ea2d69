use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{GeneralProblem, Sense};

/// Fixed-point scale applied to costs and budget before the dynamic program.
pub const COST_SCALE: f64 = 1e6;
/// Largest reduced budget the dynamic program accepts.
pub const MAX_DP_CAPACITY: u64 = 1 << 22;
/// Largest `items * (budget + 1)` table the dynamic program allocates.
pub const MAX_DP_CELLS: usize = 1 << 28;

/// 0-1 knapsack: pick items maximizing total value with total cost at most `budget`.
/// Values are the prediction target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnapsackSpec {
    pub costs: Vec<f64>,
    pub budget: f64,
}

impl KnapsackSpec {
    pub fn new(costs: Vec<f64>, budget: f64) -> Result<Self> {
        let s = Self { costs, budget };
        s.validate()?;
        Ok(s)
    }

    pub fn num_items(&self) -> usize {
        self.costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.costs.is_empty() {
            return Err(Error::Structural("knapsack has no items".into()));
        }
        if self.costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Structural("knapsack costs must be positive".into()));
        }
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::Structural("knapsack budget must be positive".into()));
        }
        Ok(())
    }
}

/// `max values'x s.t. costs'x <= B, x <= 1, x >= 0`, all variables flagged binary.
pub fn knapsack_to_lp(spec: &KnapsackSpec, values: &[f64]) -> Result<GeneralProblem> {
    spec.validate()?;
    let n = spec.num_items();
    if values.len() != n {
        return Err(Error::Shape(format!(
            "{} values for {n} items",
            values.len()
        )));
    }
    let mut a_ub = DMatrix::zeros(n + 1, n);
    for (j, c) in spec.costs.iter().enumerate() {
        a_ub[(0, j)] = *c;
        a_ub[(j + 1, j)] = 1.0;
    }
    let mut b_ub = DVector::from_element(n + 1, 1.0);
    b_ub[0] = spec.budget;
    GeneralProblem::new(
        Sense::Max,
        DVector::from_row_slice(values),
        DMatrix::zeros(0, n),
        DVector::zeros(0),
        a_ub,
        b_ub,
    )?
    .with_integrality(vec![true; n])
}

fn to_fixed(v: f64) -> Result<u64> {
    let s = (v * COST_SCALE).round();
    if !(s >= 0.0) || s > u64::MAX as f64 / 4.0 {
        return Err(Error::Oracle(format!(
            "value {v} overflows the fixed-point scale"
        )));
    }
    Ok(s as u64)
}

/// Exact optimum by dynamic programming over the (fixed-point, gcd-reduced) budget.
/// Returns the chosen item indices in increasing order and the total value.
/// Ties keep the item left out, so the lexicographically smallest optimal set wins.
pub fn knapsack_oracle(values: &[f64], costs: &[f64], budget: f64) -> Result<(Vec<usize>, f64)> {
    if values.len() != costs.len() {
        return Err(Error::Shape(format!(
            "{} values for {} costs",
            values.len(),
            costs.len()
        )));
    }
    if budget < 0.0 || costs.iter().any(|c| *c < 0.0) {
        return Err(Error::Oracle(
            "knapsack costs and budget must be nonnegative".into(),
        ));
    }
    let w: Vec<u64> = costs.iter().map(|c| to_fixed(*c)).collect::<Result<_>>()?;
    let cap = to_fixed(budget)?;
    let g = w.iter().fold(cap, |g, v| g.gcd(v)).max(1);
    let w: Vec<usize> = w.iter().map(|v| (v / g) as usize).collect();
    let cap = cap / g;
    if cap > MAX_DP_CAPACITY {
        return Err(Error::Oracle(format!(
            "reduced budget {cap} exceeds the dynamic-program limit {MAX_DP_CAPACITY}"
        )));
    }
    let cap = cap as usize;
    let n = values.len();
    if n.saturating_mul(cap + 1) > MAX_DP_CELLS {
        return Err(Error::Oracle(format!(
            "{n} items with reduced budget {cap} exceed the dynamic-program table limit"
        )));
    }
    // Items are processed last to first so that `keep[i][b]` describes the
    // optimum over items i.. and reconstruction walks forward.
    let mut best = vec![0.0_f64; cap + 1];
    let mut keep = vec![false; n * (cap + 1)];
    for i in (0..n).rev() {
        for b in (w[i]..=cap).rev() {
            let take = values[i] + best[b - w[i]];
            if take > best[b] {
                best[b] = take;
                keep[i * (cap + 1) + b] = true;
            }
        }
    }
    let mut chosen = Vec::new();
    let mut b = cap;
    for i in 0..n {
        if keep[i * (cap + 1) + b] {
            chosen.push(i);
            b -= w[i];
        }
    }
    let total = chosen.iter().map(|&i| values[i]).sum();
    Ok((chosen, total))
}
