//! Seeded synthetic datasets for the three problem families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    dataset::{Dataset, DatasetSpec, Instance},
    endpoint_rhs, grid_graph, reachable, scheduling_oracle, KnapsackSpec, Machine, ProblemSpec,
    SchedulingSpec, ShortestPathSpec, Task,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum GeneratorConfig {
    Knapsack(KnapsackGen),
    #[serde(rename = "shortestpath")]
    ShortestPath(ShortestPathGen),
    Scheduling(SchedulingGen),
}

impl GeneratorConfig {
    pub fn seed(&self) -> u64 {
        match self {
            GeneratorConfig::Knapsack(g) => g.seed,
            GeneratorConfig::ShortestPath(g) => g.seed,
            GeneratorConfig::Scheduling(g) => g.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            GeneratorConfig::Knapsack(g) => g.seed = seed,
            GeneratorConfig::ShortestPath(g) => g.seed = seed,
            GeneratorConfig::Scheduling(g) => g.seed = seed,
        }
    }

    pub fn set_instances(&mut self, n: usize) {
        match self {
            GeneratorConfig::Knapsack(g) => g.instances = n,
            GeneratorConfig::ShortestPath(g) => g.instances = n,
            GeneratorConfig::Scheduling(g) => g.instances = n,
        }
    }
}

/// Edge weights on a grid DAG from a fixed random ReLU network.
///
/// Each edge's features are the features of its two endpoints followed by a
/// uniform `[0, 1)` draw; the network maps them through two hidden ReLU
/// layers to a scalar, which is scaled, shifted, perturbed with Gaussian
/// noise and clamped to at least `min_weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShortestPathGen {
    pub rows: usize,
    pub cols: usize,
    /// Features per node; edges see `2 * node_features + 1`.
    pub node_features: usize,
    pub hidden: usize,
    pub instances: usize,
    pub noise: f64,
    pub scale: f64,
    pub min_weight: f64,
    /// Draw a fresh source and destination per instance.
    pub random_endpoints: bool,
    pub seed: u64,
}

impl Default for ShortestPathGen {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            node_features: 3,
            hidden: 16,
            instances: 200,
            noise: 0.1,
            scale: 1.0,
            min_weight: 0.05,
            random_endpoints: true,
            seed: 0,
        }
    }
}

/// Item values as a degree-2 polynomial of item features.
///
/// With `s = beta'z / sqrt(f)`: `value = base + spread * s + nonlinearity * s^2 + noise * N(0, 1)`.
/// Costs are integers in `1..=max_cost`; the budget is `budget_fraction` of their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnapsackGen {
    pub items: usize,
    pub feature_width: usize,
    pub instances: usize,
    pub base: f64,
    pub spread: f64,
    pub nonlinearity: f64,
    pub noise: f64,
    pub max_cost: u32,
    pub budget_fraction: f64,
    pub seed: u64,
}

impl Default for KnapsackGen {
    fn default() -> Self {
        Self {
            items: 10,
            feature_width: 4,
            instances: 200,
            base: 5.0,
            spread: 2.0,
            nonlinearity: 1.0,
            noise: 0.5,
            max_cost: 5,
            budget_fraction: 0.4,
            seed: 0,
        }
    }
}

/// Slot prices from slot features, same polynomial form as [`KnapsackGen`];
/// the task set is drawn once per dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulingGen {
    pub tasks: usize,
    pub machines: usize,
    pub resources: usize,
    pub slots: usize,
    pub max_duration: usize,
    pub feature_width: usize,
    pub instances: usize,
    pub base: f64,
    pub spread: f64,
    pub nonlinearity: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SchedulingGen {
    fn default() -> Self {
        Self {
            tasks: 3,
            machines: 2,
            resources: 1,
            slots: 8,
            max_duration: 3,
            feature_width: 4,
            instances: 200,
            base: 5.0,
            spread: 2.0,
            nonlinearity: 1.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    match cfg {
        GeneratorConfig::Knapsack(g) => gen_knapsack(g),
        GeneratorConfig::ShortestPath(g) => gen_shortest_path(g),
        GeneratorConfig::Scheduling(g) => gen_scheduling(g),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn uniform_rows(rng: &mut ChaCha8Rng, rows: usize, width: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..width).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Dense ReLU network with fixed Gaussian weights scaled by `1 / sqrt(fan_in)`.
struct RandomNet {
    layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl RandomNet {
    fn new(rng: &mut ChaCha8Rng, widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| {
                let s = 1.0 / (w[0] as f64).sqrt();
                (
                    DMatrix::from_fn(w[1], w[0], |_, _| s * normal(rng)),
                    DVector::from_fn(w[1], |_, _| 0.5 * normal(rng)),
                )
            })
            .collect();
        Self { layers }
    }

    fn eval(&self, input: &[f64]) -> f64 {
        let mut h = DVector::from_row_slice(input);
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = w * h + b;
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        h[0]
    }
}

fn metadata<T: Serialize>(cfg: &T, extra: serde_json::Value) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let (Some(obj), Some(more)) = (v.as_object_mut(), extra.as_object()) {
        obj.extend(more.clone());
    }
    Ok(v)
}

fn gen_shortest_path(g: &ShortestPathGen) -> Result<Dataset> {
    if g.rows * g.cols < 2 || g.node_features == 0 || g.hidden == 0 {
        return Err(Error::Config(
            "grid needs at least two nodes, features and hidden units".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let n = g.rows * g.cols;
    let edges = grid_graph(g.rows, g.cols);
    let spec = ShortestPathSpec::new(n, edges.clone(), 0, n - 1)?;
    let width = 2 * g.node_features + 1;
    let net = RandomNet::new(&mut rng, &[width, g.hidden, g.hidden, 1]);
    let mut instances = Vec::with_capacity(g.instances);
    for _ in 0..g.instances {
        let nodes = uniform_rows(&mut rng, n, g.node_features);
        let mut z = Vec::with_capacity(edges.len());
        let mut c = Vec::with_capacity(edges.len());
        for &(u, v) in &edges {
            let mut f = nodes[u].clone();
            f.extend_from_slice(&nodes[v]);
            f.push(rng.random::<f64>());
            let w = 1.0 + g.scale * net.eval(&f) + g.noise * normal(&mut rng);
            c.push(w.max(g.min_weight));
            z.push(f);
        }
        let b_override = if g.random_endpoints {
            let (s, d) = loop {
                let s = rng.random_range(0..n);
                let d = rng.random_range(0..n);
                if s != d && reachable(n, &edges, s, d) {
                    break (s, d);
                }
            };
            Some(endpoint_rhs(n, s, d))
        } else {
            None
        };
        instances.push(Instance { z, c, b_override });
    }
    let generator = metadata(
        g,
        serde_json::json!({ "edge_random_input": "uniform[0,1)" }),
    )?;
    Dataset::new(
        DatasetSpec {
            problem: ProblemSpec::ShortestPath(spec),
            feature_width: width,
            generator,
        },
        instances,
    )
}

/// `base + spread * s + nonlinearity * s^2 + noise * eps` with `s = beta'z / sqrt(f)`.
fn polynomial_target(
    rng: &mut ChaCha8Rng,
    beta: &[f64],
    z: &[f64],
    base: f64,
    spread: f64,
    nonlin: f64,
    noise: f64,
) -> f64 {
    let s = beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>() / (beta.len() as f64).sqrt();
    let eps = if noise > 0.0 { normal(rng) } else { 0.0 };
    base + spread * s + nonlin * s * s + noise * eps
}

fn gen_knapsack(g: &KnapsackGen) -> Result<Dataset> {
    if g.items == 0 || g.feature_width == 0 || g.max_cost == 0 {
        return Err(Error::Config(
            "knapsack generator needs items, features and a positive cost range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let costs: Vec<f64> = (0..g.items)
        .map(|_| rng.random_range(1..=g.max_cost) as f64)
        .collect();
    let budget = (g.budget_fraction * costs.iter().sum::<f64>())
        .floor()
        .max(1.0);
    let spec = KnapsackSpec::new(costs, budget)?;
    let beta: Vec<f64> = (0..g.feature_width).map(|_| normal(&mut rng)).collect();
    let mut instances = Vec::with_capacity(g.instances);
    for _ in 0..g.instances {
        let z = (0..g.items)
            .map(|_| {
                (0..g.feature_width)
                    .map(|_| normal(&mut rng))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>();
        let c = z
            .iter()
            .map(|zi| {
                polynomial_target(
                    &mut rng,
                    &beta,
                    zi,
                    g.base,
                    g.spread,
                    g.nonlinearity,
                    g.noise,
                )
            })
            .collect();
        instances.push(Instance {
            z,
            c,
            b_override: None,
        });
    }
    let generator = metadata(g, serde_json::json!({}))?;
    Dataset::new(
        DatasetSpec {
            problem: ProblemSpec::Knapsack(spec),
            feature_width: g.feature_width,
            generator,
        },
        instances,
    )
}

fn random_schedule_spec(rng: &mut ChaCha8Rng, g: &SchedulingGen) -> SchedulingSpec {
    let tasks = (0..g.tasks)
        .map(|_| {
            let duration = rng.random_range(1..=g.max_duration.min(g.slots));
            let earliest_start = rng.random_range(0..=g.slots - duration);
            let latest_end = rng.random_range(earliest_start + duration..=g.slots);
            Task {
                duration,
                earliest_start,
                latest_end,
                power: rng.random_range(0.5..2.0),
                usage: (0..g.resources)
                    .map(|_| rng.random_range(0.2..1.0))
                    .collect(),
            }
        })
        .collect();
    let machines = (0..g.machines)
        .map(|_| Machine {
            capacity: (0..g.resources)
                .map(|_| rng.random_range(1.0..1.5))
                .collect(),
        })
        .collect();
    SchedulingSpec {
        tasks,
        machines,
        num_slots: g.slots,
    }
}

fn gen_scheduling(g: &SchedulingGen) -> Result<Dataset> {
    if g.tasks == 0
        || g.machines == 0
        || g.slots == 0
        || g.max_duration == 0
        || g.feature_width == 0
    {
        return Err(Error::Config(
            "scheduling generator needs tasks, machines, slots and features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut spec = None;
    for _ in 0..100 {
        let candidate = random_schedule_spec(&mut rng, g);
        if scheduling_oracle(&candidate, &vec![1.0; g.slots]).is_ok() {
            spec = Some(candidate);
            break;
        }
    }
    let spec =
        spec.ok_or_else(|| Error::Config("could not draw a feasible scheduling instance".into()))?;
    let beta: Vec<f64> = (0..g.feature_width).map(|_| normal(&mut rng)).collect();
    let mut instances = Vec::with_capacity(g.instances);
    for _ in 0..g.instances {
        let z = (0..g.slots)
            .map(|_| {
                (0..g.feature_width)
                    .map(|_| normal(&mut rng))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>();
        let c = z
            .iter()
            .map(|zi| {
                polynomial_target(
                    &mut rng,
                    &beta,
                    zi,
                    g.base,
                    g.spread,
                    g.nonlinearity,
                    g.noise,
                )
            })
            .collect();
        instances.push(Instance {
            z,
            c,
            b_override: None,
        });
    }
    let generator = metadata(g, serde_json::json!({}))?;
    Dataset::new(
        DatasetSpec {
            problem: ProblemSpec::Scheduling(spec),
            feature_width: g.feature_width,
            generator,
        },
        instances,
    )
}
