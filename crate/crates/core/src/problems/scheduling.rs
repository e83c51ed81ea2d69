use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{GeneralProblem, Sense};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub duration: usize,
    pub earliest_start: usize,
    /// The task must be finished by this time: a start `t` needs `t + duration <= latest_end`.
    pub latest_end: usize,
    pub power: f64,
    /// Usage of each resource while running.
    pub usage: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    /// Capacity for each resource.
    pub capacity: Vec<f64>,
}

/// Resource-constrained day-ahead scheduling; per-slot prices are the prediction target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulingSpec {
    pub tasks: Vec<Task>,
    pub machines: Vec<Machine>,
    pub num_slots: usize,
}

/// Start variable `x_jmt`: task `j` starts on machine `m` in slot `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartVar {
    pub task: usize,
    pub machine: usize,
    pub slot: usize,
}

impl SchedulingSpec {
    pub fn num_resources(&self) -> usize {
        self.machines.first().map_or(0, |m| m.capacity.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.machines.is_empty() || self.num_slots == 0 {
            return Err(Error::Structural(
                "scheduling needs tasks, machines and slots".into(),
            ));
        }
        let r = self.num_resources();
        for (i, m) in self.machines.iter().enumerate() {
            if m.capacity.len() != r || m.capacity.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::Structural(format!(
                    "machine {i} capacities are invalid"
                )));
            }
        }
        for (j, t) in self.tasks.iter().enumerate() {
            if t.usage.len() != r || t.usage.iter().any(|u| !(*u >= 0.0)) {
                return Err(Error::Structural(format!(
                    "task {j} resource usage is invalid"
                )));
            }
            if t.duration == 0 || t.earliest_start + t.duration > t.latest_end {
                return Err(Error::Structural(format!(
                    "task {j} does not fit its time window"
                )));
            }
            if !t.power.is_finite() {
                return Err(Error::Structural(format!("task {j} power is not finite")));
            }
        }
        Ok(())
    }

    fn fits(&self, j: usize, m: usize) -> bool {
        let task = &self.tasks[j];
        task.usage
            .iter()
            .zip(&self.machines[m].capacity)
            .all(|(u, c)| u <= c)
    }

    /// Start variables in `(task, machine, slot)` lexicographic order, skipping
    /// starts outside the window, past the horizon, or on a machine too small for the task.
    pub fn variables(&self) -> Result<Vec<StartVar>> {
        self.validate()?;
        let mut vars = Vec::new();
        for (j, task) in self.tasks.iter().enumerate() {
            let before = vars.len();
            let end = task.latest_end.min(self.num_slots);
            for m in 0..self.machines.len() {
                if !self.fits(j, m) {
                    continue;
                }
                for t in task.earliest_start..=end.saturating_sub(task.duration) {
                    if t + task.duration <= end {
                        vars.push(StartVar {
                            task: j,
                            machine: m,
                            slot: t,
                        });
                    }
                }
            }
            if vars.len() == before {
                return Err(Error::Infeasible(format!("task {j} has no feasible start")));
            }
        }
        Ok(vars)
    }

    /// `Q` with `cost(x_jmt) = sum_t' Q[v, t'] price_t' = p_j * sum_{t <= t' < t + d_j} price_t'`.
    pub fn cost_map(&self) -> Result<DMatrix<f64>> {
        let vars = self.variables()?;
        let mut q = DMatrix::zeros(vars.len(), self.num_slots);
        for (v, sv) in vars.iter().enumerate() {
            let task = &self.tasks[sv.task];
            for t in sv.slot..sv.slot + task.duration {
                q[(v, t)] = task.power;
            }
        }
        Ok(q)
    }
}

/// Assignment rows `sum_{m,t} x_jmt = 1` and resource rows
/// `sum_j sum_{t - d_j < t' <= t} u_jr x_jmt' <= c_mr` per machine, resource and slot.
/// Resource rows that cannot bind (total coefficient at most the capacity) are omitted.
pub fn scheduling_to_lp(spec: &SchedulingSpec, prices: &[f64]) -> Result<GeneralProblem> {
    if prices.len() != spec.num_slots {
        return Err(Error::Shape(format!(
            "{} prices for {} slots",
            prices.len(),
            spec.num_slots
        )));
    }
    let vars = spec.variables()?;
    let q = spec.cost_map()?;
    let n = vars.len();
    let mut a_eq = DMatrix::zeros(spec.tasks.len(), n);
    for (v, sv) in vars.iter().enumerate() {
        a_eq[(sv.task, v)] = 1.0;
    }
    let mut ub_rows: Vec<Vec<f64>> = Vec::new();
    let mut b_ub = Vec::new();
    for m in 0..spec.machines.len() {
        for r in 0..spec.num_resources() {
            let cap = spec.machines[m].capacity[r];
            for t in 0..spec.num_slots {
                let mut row = vec![0.0; n];
                for (v, sv) in vars.iter().enumerate() {
                    let task = &spec.tasks[sv.task];
                    if sv.machine == m && sv.slot <= t && t < sv.slot + task.duration {
                        row[v] = task.usage[r];
                    }
                }
                // Each task contributes at most once to a row.
                let mut worst = vec![0.0_f64; spec.tasks.len()];
                for (v, sv) in vars.iter().enumerate() {
                    worst[sv.task] = worst[sv.task].max(row[v]);
                }
                if worst.iter().sum::<f64>() > cap {
                    ub_rows.push(row);
                    b_ub.push(cap);
                }
            }
        }
    }
    let a_ub = DMatrix::from_fn(ub_rows.len(), n, |i, j| ub_rows[i][j]);
    GeneralProblem::new(
        Sense::Min,
        &q * DVector::from_row_slice(prices),
        a_eq,
        DVector::from_element(spec.tasks.len(), 1.0),
        a_ub,
        DVector::from_vec(b_ub),
    )?
    .with_integrality(vec![true; n])
}

/// Exact schedule by enumerating one start per task. Returns the 0-1 start
/// vector (ordered as [`SchedulingSpec::variables`]) and its cost. Ties keep
/// the first schedule found, trying earlier variables first for earlier tasks.
pub fn scheduling_oracle(spec: &SchedulingSpec, prices: &[f64]) -> Result<(Vec<f64>, f64)> {
    if prices.len() != spec.num_slots {
        return Err(Error::Shape(format!(
            "{} prices for {} slots",
            prices.len(),
            spec.num_slots
        )));
    }
    let vars = spec.variables()?;
    let cost = spec.cost_map()? * DVector::from_row_slice(prices);
    let options: Vec<Vec<usize>> = (0..spec.tasks.len())
        .map(|j| (0..vars.len()).filter(|&v| vars[v].task == j).collect())
        .collect();
    let combos = options
        .iter()
        .try_fold(1usize, |acc, o| acc.checked_mul(o.len()));
    if combos.is_none_or(|c| c > 50_000_000) {
        return Err(Error::Oracle("too many schedules to enumerate".into()));
    }
    let nr = spec.num_resources();
    let mut load = vec![0.0; spec.machines.len() * nr * spec.num_slots];
    let mut chosen = vec![0usize; spec.tasks.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let tol = 1e-9;
    search(
        spec,
        &vars,
        &cost,
        &options,
        0,
        0.0,
        &mut load,
        &mut chosen,
        &mut best,
        tol,
    );
    let Some((obj, picks)) = best else {
        return Err(Error::Infeasible(
            "no schedule satisfies the resource limits".into(),
        ));
    };
    let mut x = vec![0.0; vars.len()];
    for v in picks {
        x[v] = 1.0;
    }
    Ok((x, obj))
}

#[allow(clippy::too_many_arguments)]
fn search(
    spec: &SchedulingSpec,
    vars: &[StartVar],
    cost: &DVector<f64>,
    options: &[Vec<usize>],
    j: usize,
    acc: f64,
    load: &mut [f64],
    chosen: &mut [usize],
    best: &mut Option<(f64, Vec<usize>)>,
    tol: f64,
) {
    if j == options.len() {
        if best
            .as_ref()
            .is_none_or(|(b, _)| acc < *b - tol * (1.0 + b.abs()))
        {
            *best = Some((acc, chosen.to_vec()));
        }
        return;
    }
    let nr = spec.num_resources();
    let ns = spec.num_slots;
    let task = &spec.tasks[j];
    for &v in &options[j] {
        let sv = vars[v];
        let cap = &spec.machines[sv.machine].capacity;
        let slots = sv.slot..sv.slot + task.duration;
        let ok = (0..nr).all(|r| {
            slots
                .clone()
                .all(|t| load[(sv.machine * nr + r) * ns + t] + task.usage[r] <= cap[r] + tol)
        });
        if !ok {
            continue;
        }
        for r in 0..nr {
            for t in slots.clone() {
                load[(sv.machine * nr + r) * ns + t] += task.usage[r];
            }
        }
        chosen[j] = v;
        search(
            spec,
            vars,
            cost,
            options,
            j + 1,
            acc + cost[v],
            load,
            chosen,
            best,
            tol,
        );
        for r in 0..nr {
            for t in slots.clone() {
                load[(sv.machine * nr + r) * ns + t] -= task.usage[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(duration: usize, earliest_start: usize, latest_end: usize, usage: f64) -> Task {
        Task {
            duration,
            earliest_start,
            latest_end,
            power: 1.0,
            usage: vec![usage],
        }
    }

    #[test]
    fn single_task_two_slots() {
        let spec = SchedulingSpec {
            tasks: vec![task(1, 0, 2, 1.0)],
            machines: vec![Machine {
                capacity: vec![1.0],
            }],
            num_slots: 2,
        };
        let p = scheduling_to_lp(&spec, &[3.0, 1.0]).unwrap();
        assert_eq!(p.num_vars(), 2);
        assert_eq!(p.a_eq.nrows(), 1);
        assert_eq!(p.a_ub.nrows(), 0);
        assert_eq!(p.c.as_slice(), &[3.0, 1.0]);
        assert_eq!(
            scheduling_oracle(&spec, &[3.0, 1.0]).unwrap(),
            (vec![0.0, 1.0], 1.0)
        );
    }

    #[test]
    fn zero_capacity_machine_is_eliminated() {
        let spec = SchedulingSpec {
            tasks: vec![task(1, 0, 3, 1.0)],
            machines: vec![
                Machine {
                    capacity: vec![0.0],
                },
                Machine {
                    capacity: vec![2.0],
                },
            ],
            num_slots: 3,
        };
        assert!(spec.variables().unwrap().iter().all(|v| v.machine == 1));
    }

    #[test]
    fn empty_window_is_infeasible() {
        let spec = SchedulingSpec {
            tasks: vec![task(1, 0, 1, 5.0)],
            machines: vec![Machine {
                capacity: vec![1.0],
            }],
            num_slots: 2,
        };
        assert!(matches!(spec.variables(), Err(Error::Infeasible(_))));
        let bad = SchedulingSpec {
            tasks: vec![task(3, 0, 2, 0.0)],
            machines: vec![Machine {
                capacity: vec![1.0],
            }],
            num_slots: 4,
        };
        assert!(matches!(bad.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn cost_covers_the_whole_duration() {
        let mut t = task(2, 0, 3, 0.0);
        t.power = 2.0;
        let spec = SchedulingSpec {
            tasks: vec![t],
            machines: vec![Machine {
                capacity: vec![1.0],
            }],
            num_slots: 3,
        };
        let p = scheduling_to_lp(&spec, &[1.0, 10.0, 100.0]).unwrap();
        assert_eq!(p.c.as_slice(), &[22.0, 220.0]);
    }

    #[test]
    fn capacity_forces_tasks_apart() {
        let spec = SchedulingSpec {
            tasks: vec![task(1, 0, 2, 1.0), task(1, 0, 2, 1.0)],
            machines: vec![Machine {
                capacity: vec![1.0],
            }],
            num_slots: 2,
        };
        let (x, obj) = scheduling_oracle(&spec, &[1.0, 5.0]).unwrap();
        assert_eq!(obj, 6.0);
        assert_eq!(x, vec![1.0, 0.0, 0.0, 1.0]);
    }
}
