//! Training loops for the three methods and exact-regret evaluation.
//!
//! * `two-stage` fits the predictor to the targets by mean squared error.
//! * `intopt` solves the relaxed LP under the prediction and backpropagates the
//!   regret `c'x(c_hat)` through the solver.
//! * `spo` uses the subgradient `x(c) - x(2 c_hat - c)`.
//!
//! The predictor is applied per component: one feature row in, one target
//! component out, with weights shared across components.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{vjp, BackwardContext, GradConfig};
use crate::lp::Sense;
use crate::predictor::{Gradients, ModelConfig, OptimizerConfig, OptimizerState, PredictorModel};
use crate::problems::{Dataset, LpStructure};
use crate::solver::{solve, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "two-stage")]
    TwoStage,
    #[serde(rename = "intopt")]
    IntOpt,
    #[serde(rename = "spo")]
    Spo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TwoStage => "two-stage",
            Method::IntOpt => "intopt",
            Method::Spo => "spo",
        }
    }

    /// Two-stage is selected on validation MSE, the others on validation regret.
    pub fn selects_on_regret(self) -> bool {
        self != Method::TwoStage
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-stage" | "twostage" => Ok(Method::TwoStage),
            "intopt" => Ok(Method::IntOpt),
            "spo" => Ok(Method::Spo),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected two-stage, intopt or spo)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden widths of the predictor; empty for a linear model.
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    /// Forward solver for `intopt`.
    pub solver: SolverConfig,
    pub grad: GradConfig,
    /// Cut-off used for the `spo` solves.
    pub spo_cutoff: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::IntOpt,
            epochs: 10,
            batch_size: 8,
            hidden: Vec::new(),
            optimizer: OptimizerConfig::default(),
            solver: SolverConfig::with_cutoff(0.1),
            grad: GradConfig::default(),
            spo_cutoff: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.optimizer.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        if !(self.spo_cutoff > 0.0) {
            return Err(Error::Config("spo cut-off must be positive".into()));
        }
        self.solver.validate()?;
        self.grad.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_regret: f64,
    pub failures: usize,
    pub seconds: f64,
    /// Mean interior-point iterations per solve this epoch (0 for two-stage).
    pub mean_iterations: f64,
}

/// Learning curve with one row per epoch; epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentRecord {
    pub method: Option<Method>,
    pub rows: Vec<EpochRow>,
}

pub const CURVE_HEADER: [&str; 6] = [
    "epoch",
    "train_mse",
    "val_mse",
    "val_regret",
    "failures",
    "seconds",
];

impl ExperimentRecord {
    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CURVE_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                r.train_mse.to_string(),
                r.val_mse.to_string(),
                r.val_regret.to_string(),
                r.failures.to_string(),
                r.seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Mean squared error and exact regret of a model over a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub regret: f64,
    /// Instances the oracle could not solve; excluded from `regret`.
    pub oracle_failures: usize,
    pub instances: usize,
}

/// `c'(x_hat - x_star)` for minimization, `c'(x_star - x_hat)` for maximization.
pub fn regret(sense: Sense, c: &[f64], x_hat: &[f64], x_star: &[f64]) -> f64 {
    let d: f64 = c
        .iter()
        .zip(x_hat)
        .zip(x_star)
        .map(|((c, h), s)| c * (h - s))
        .sum();
    sense.sign() * d
}

pub fn mse(pred: &DVector<f64>, truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len().max(1) as f64
}

/// Predictions for every instance.
pub fn predict_all(model: &PredictorModel, data: &Dataset) -> Result<Vec<DVector<f64>>> {
    data.instances
        .iter()
        .map(|inst| model.predict(&inst.features()))
        .collect()
}

/// Exact evaluation: the discrete problem is solved by its oracle under the
/// prediction and under the truth.
pub fn evaluate(model: &PredictorModel, data: &Dataset) -> Result<Metrics> {
    let preds = predict_all(model, data)?;
    let problem = data.problem();
    let results: Vec<(f64, Option<f64>)> = data
        .instances
        .par_iter()
        .zip(preds.par_iter())
        .map(|(inst, p)| {
            let r = problem
                .regret(&inst.c, p.as_slice(), inst.b_override.as_deref())
                .ok();
            (mse(p, &inst.c), r)
        })
        .collect();
    let n = results.len();
    let ok: Vec<f64> = results.iter().filter_map(|(_, r)| *r).collect();
    Ok(Metrics {
        mse: results.iter().map(|(m, _)| m).sum::<f64>() / n.max(1) as f64,
        regret: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
        oracle_failures: n - ok.len(),
        instances: n,
    })
}

fn mean_mse(model: &PredictorModel, data: &Dataset) -> Result<f64> {
    let preds = predict_all(model, data)?;
    Ok(preds
        .iter()
        .zip(&data.instances)
        .map(|(p, i)| mse(p, &i.c))
        .sum::<f64>()
        / data.len().max(1) as f64)
}

struct Prepared {
    structures: Vec<LpStructure>,
    features: Vec<DMatrix<f64>>,
    /// Solutions under the true costs, for SPO.
    truth_solutions: Vec<Option<DVector<f64>>>,
}

fn prepare(data: &Dataset, cfg: &TrainConfig) -> Result<Prepared> {
    let structures = data
        .instances
        .iter()
        .map(|i| data.problem().structure(i.b_override.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let features = data.instances.iter().map(|i| i.features()).collect();
    let truth_solutions = if cfg.method == Method::Spo {
        let scfg = spo_solver(cfg);
        data.instances
            .par_iter()
            .zip(structures.par_iter())
            .map(|(inst, s)| {
                solve(&s.lp_for(&DVector::from_row_slice(&inst.c)), &scfg)
                    .ok()
                    .map(|sol| sol.x)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Prepared {
        structures,
        features,
        truth_solutions,
    })
}

fn spo_solver(cfg: &TrainConfig) -> SolverConfig {
    SolverConfig {
        lambda_cutoff: cfg.spo_cutoff,
        ..cfg.solver.clone()
    }
}

/// Gradient of the IntOpt loss `c'x(c_hat)` with respect to the prediction.
pub fn intopt_target_gradient(
    structure: &LpStructure,
    c_hat: &DVector<f64>,
    c_true: &DVector<f64>,
    solver: &SolverConfig,
    grad: &GradConfig,
) -> Result<(DVector<f64>, usize)> {
    let lp = structure.lp_for(c_hat);
    let sol = solve(&lp, solver)?;
    let ctx = BackwardContext::from_solution(&lp, &sol, grad.damping)?;
    let g = vjp(&ctx, grad, &structure.cost(c_true))?;
    let g = structure.pull_back(&g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite gradient".into()));
    }
    Ok((g, sol.iterations))
}

/// SPO subgradient `S'(x(c) - x(2 c_hat - c))` with respect to the prediction.
pub fn spo_target_gradient(
    structure: &LpStructure,
    c_hat: &DVector<f64>,
    c_true: &DVector<f64>,
    x_true: &DVector<f64>,
    solver: &SolverConfig,
) -> Result<(DVector<f64>, usize)> {
    let perturbed = c_hat * 2.0 - c_true;
    let sol = solve(&structure.lp_for(&perturbed), solver)?;
    Ok((structure.pull_back(&(x_true - &sol.x)), sol.iterations))
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PredictorModel,
    pub optimizer: OptimizerState,
    /// Snapshot at the epoch with the best validation score.
    pub best_model: PredictorModel,
    pub best_epoch: usize,
    pub record: ExperimentRecord,
}

enum Step {
    Ok(Gradients, usize),
    Failed,
}

pub fn train(train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if train_set.spec != val_set.spec && !val_set.is_empty() {
        return Err(Error::Config(
            "training and validation sets describe different problems".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mcfg = ModelConfig {
        input: train_set.spec.feature_width,
        hidden: cfg.hidden.clone(),
        output: 1,
    };
    let mut model = PredictorModel::new(&mut rng, &mcfg)?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &model);
    let prep = prepare(train_set, cfg)?;

    let mut record = ExperimentRecord {
        method: Some(cfg.method),
        rows: Vec::new(),
    };
    let score = |m: &Metrics| {
        if cfg.method.selects_on_regret() {
            m.regret
        } else {
            m.mse
        }
    };
    let start = Instant::now();
    let val0 = evaluate(&model, val_set)?;
    record.rows.push(EpochRow {
        epoch: 0,
        train_mse: mean_mse(&model, train_set)?,
        val_mse: val0.mse,
        val_regret: val0.regret,
        failures: 0,
        seconds: start.elapsed().as_secs_f64(),
        mean_iterations: 0.0,
    });
    let mut best = (score(&val0), 0usize, model.clone());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut failures = 0;
        let mut successes = 0;
        let mut iterations = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let steps: Vec<Step> = batch
                .par_iter()
                .map(|&i| instance_gradient(&model, train_set, &prep, cfg, i))
                .collect::<Result<Vec<_>>>()?;
            let mut acc = Gradients::zeros_like(&model);
            let mut n_ok = 0usize;
            for s in &steps {
                match s {
                    Step::Ok(g, it) => {
                        acc.add_scaled(g, 1.0);
                        n_ok += 1;
                        iterations += it;
                    }
                    Step::Failed => failures += 1,
                }
            }
            if n_ok > 0 {
                acc.scale(1.0 / n_ok as f64);
                opt.step(&mut model, &acc)?;
            }
            successes += n_ok;
        }
        if successes == 0 {
            return Err(Error::NumericalFailure(format!(
                "every instance failed numerically in epoch {epoch} ({failures} failures)"
            )));
        }
        let val = evaluate(&model, val_set)?;
        record.rows.push(EpochRow {
            epoch,
            train_mse: mean_mse(&model, train_set)?,
            val_mse: val.mse,
            val_regret: val.regret,
            failures,
            seconds: t0.elapsed().as_secs_f64(),
            mean_iterations: iterations as f64 / successes as f64,
        });
        if score(&val) < best.0 {
            best = (score(&val), epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model,
        optimizer: opt,
        best_model: best.2,
        best_epoch: best.1,
        record,
    })
}

fn instance_gradient(
    model: &PredictorModel,
    data: &Dataset,
    prep: &Prepared,
    cfg: &TrainConfig,
    i: usize,
) -> Result<Step> {
    let inst = &data.instances[i];
    let (pred, cache) = model.forward_cached(&prep.features[i])?;
    let c_hat = pred.column(0).into_owned();
    let c_true = DVector::from_row_slice(&inst.c);
    let target_grad = match cfg.method {
        Method::TwoStage => Ok(((&c_hat - &c_true) * (2.0 / c_true.len() as f64), 0)),
        Method::IntOpt => {
            intopt_target_gradient(&prep.structures[i], &c_hat, &c_true, &cfg.solver, &cfg.grad)
        }
        Method::Spo => match &prep.truth_solutions[i] {
            Some(x_true) => spo_target_gradient(
                &prep.structures[i],
                &c_hat,
                &c_true,
                x_true,
                &spo_solver(cfg),
            ),
            None => Err(Error::NumericalFailure(
                "no solution under the true costs".into(),
            )),
        },
    };
    match target_grad {
        Ok((g, it)) => Ok(Step::Ok(model.backward_vector(&cache, &g)?, it)),
        Err(e) if e.is_numerical() || matches!(e, Error::Infeasible(_)) => Ok(Step::Failed),
        Err(e) => Err(e),
    }
}

pub fn train_twostage(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        train_set,
        val_set,
        &TrainConfig {
            method: Method::TwoStage,
            ..cfg.clone()
        },
    )
}

pub fn train_intopt(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        train_set,
        val_set,
        &TrainConfig {
            method: Method::IntOpt,
            ..cfg.clone()
        },
    )
}

pub fn train_spo(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        train_set,
        val_set,
        &TrainConfig {
            method: Method::Spo,
            ..cfg.clone()
        },
    )
}
