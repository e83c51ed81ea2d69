//! Multi-seed benchmark sweeps with model selection on validation data.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::{generate, Dataset, GeneratorConfig, ShortestPathGen};
use crate::train::{evaluate, train, ExperimentRecord, Method, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 120,
            val: 40,
            test: 40,
        }
    }
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub master_seed: u64,
    pub split: SplitCounts,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    /// Cut-offs swept for `intopt`; empty uses `train.solver.lambda_cutoff`.
    pub cutoffs: Vec<f64>,
    /// Concurrent runs; 0 uses all cores.
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::TwoStage, Method::IntOpt, Method::Spo],
            seeds: 5,
            master_seed: 0,
            split: SplitCounts::default(),
            generator: GeneratorConfig::ShortestPath(ShortestPathGen::default()),
            train: TrainConfig::default(),
            cutoffs: Vec::new(),
            workers: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("bench needs at least one method".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("bench needs at least one seed".into()));
        }
        if self.split.train == 0 || self.split.test == 0 {
            return Err(Error::Config(
                "train and test splits must be nonempty".into(),
            ));
        }
        if self.cutoffs.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("cut-offs must be positive".into()));
        }
        self.train.validate()
    }

    /// `(method, cutoff)` columns of the sweep; only `intopt` is swept over cut-offs.
    pub fn variants(&self) -> Vec<(Method, Option<f64>)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m == Method::IntOpt && !self.cutoffs.is_empty() {
                out.extend(self.cutoffs.iter().map(|&c| (m, Some(c))));
            } else if m == Method::IntOpt {
                out.push((m, Some(self.train.solver.lambda_cutoff)));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

/// Seed number `counter` of the stream rooted at `master`.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(counter);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub cutoff: Option<f64>,
    pub seed_index: usize,
    pub data_seed: u64,
    pub train_seed: u64,
    pub test_mse: Option<f64>,
    pub test_regret: Option<f64>,
    pub best_epoch: Option<usize>,
    pub numerical_failures: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub seeds: usize,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
    pub regret_mean: Option<f64>,
    pub regret_std: Option<f64>,
    pub failed_runs: usize,
    pub numerical_failures: usize,
}

pub const REPORT_HEADER: [&str; 8] = [
    "method",
    "seeds",
    "mse_mean",
    "mse_std",
    "regret_mean",
    "regret_std",
    "failed_runs",
    "numerical_failures",
];

/// Test-set results; timing is deliberately absent so reports are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub manifest_hash: String,
    pub rows: Vec<BenchRow>,
    pub runs: Vec<RunResult>,
}

pub struct BenchOutput {
    pub report: BenchReport,
    /// Learning curve per run, keyed by a file-friendly run name.
    pub curves: BTreeMap<String, ExperimentRecord>,
}

pub fn variant_label(method: Method, cutoff: Option<f64>) -> String {
    match cutoff {
        Some(c) => format!("{method}@{c:e}"),
        None => method.name().to_string(),
    }
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() >= 2)
        .then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// SHA-256 of the canonical JSON of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn datasets(cfg: &BenchConfig) -> Result<Vec<(u64, Dataset, Dataset, Dataset)>> {
    (0..cfg.seeds)
        .map(|s| {
            let data_seed = derive_seed(cfg.master_seed, 2 * s as u64);
            let mut g = cfg.generator.clone();
            g.set_seed(data_seed);
            g.set_instances(cfg.split.total());
            let d = generate(&g)?;
            let (a, b, c) = d.split(cfg.split.train, cfg.split.val, cfg.split.test)?;
            Ok((data_seed, a, b, c))
        })
        .collect()
}

fn run_cell(
    cfg: &BenchConfig,
    method: Method,
    cutoff: Option<f64>,
    seed_index: usize,
    data: &(u64, Dataset, Dataset, Dataset),
) -> (RunResult, Option<ExperimentRecord>) {
    let train_seed = derive_seed(cfg.master_seed, 2 * seed_index as u64 + 1);
    let mut tc = TrainConfig {
        method,
        seed: train_seed,
        ..cfg.train.clone()
    };
    if let Some(c) = cutoff {
        tc.solver.lambda_cutoff = c;
    }
    let mut result = RunResult {
        method,
        cutoff,
        seed_index,
        data_seed: data.0,
        train_seed,
        test_mse: None,
        test_regret: None,
        best_epoch: None,
        numerical_failures: 0,
        error: None,
    };
    let outcome =
        train(&data.1, &data.2, &tc).and_then(|o| evaluate(&o.best_model, &data.3).map(|m| (o, m)));
    match outcome {
        Ok((o, m)) => {
            result.test_mse = Some(m.mse);
            result.test_regret = Some(m.regret);
            result.best_epoch = Some(o.best_epoch);
            result.numerical_failures = o.record.total_failures();
            (result, Some(o.record))
        }
        Err(e) => {
            if e.is_numerical() {
                result.numerical_failures = 1;
            }
            result.error = Some(e.to_string());
            (result, None)
        }
    }
}

/// Run every `(variant, seed)` cell and aggregate test metrics per variant.
///
/// Seed `s` uses data seed `derive_seed(master, 2s)` and training seed
/// `derive_seed(master, 2s + 1)`, so all methods of one seed see the same data.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    // The worker count changes scheduling only, never results.
    let manifest_hash = content_hash(&BenchConfig {
        workers: 0,
        ..cfg.clone()
    })?;
    let data = datasets(cfg)?;
    let variants = cfg.variants();
    let cells: Vec<(Method, Option<f64>, usize)> = variants
        .iter()
        .flat_map(|&(m, c)| (0..cfg.seeds).map(move |s| (m, c, s)))
        .collect();

    let work = || {
        cells
            .par_iter()
            .map(|&(m, c, s)| run_cell(cfg, m, c, s, &data[s]))
            .collect::<Vec<_>>()
    };
    let results = if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)
    };

    let mut curves = BTreeMap::new();
    let mut runs = Vec::with_capacity(results.len());
    for (r, curve) in results {
        if let Some(curve) = curve {
            curves.insert(
                format!("{}_seed{}", variant_label(r.method, r.cutoff), r.seed_index),
                curve,
            );
        }
        runs.push(r);
    }
    let rows = variants
        .iter()
        .map(|&(m, c)| {
            let cell: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.method == m && r.cutoff == c)
                .collect();
            let mses: Vec<f64> = cell.iter().filter_map(|r| r.test_mse).collect();
            let regrets: Vec<f64> = cell.iter().filter_map(|r| r.test_regret).collect();
            let (mse_mean, mse_std) = mean_std(&mses);
            let (regret_mean, regret_std) = mean_std(&regrets);
            BenchRow {
                method: variant_label(m, c),
                seeds: cfg.seeds,
                mse_mean,
                mse_std,
                regret_mean,
                regret_std,
                failed_runs: cell.iter().filter(|r| r.error.is_some()).count(),
                numerical_failures: cell.iter().map(|r| r.numerical_failures).sum(),
            }
        })
        .collect();
    Ok(BenchOutput {
        report: BenchReport {
            manifest_hash,
            rows,
            runs,
        },
        curves,
    })
}

impl BenchReport {
    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == label)
    }

    /// One row per variant; empty cells are blank, a variant with no successful run reads `failed`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER)
            .map_err(|e| Error::Config(e.to_string()))?;
        for r in &self.rows {
            let all_failed = r.failed_runs == r.seeds;
            let cell = |v: Option<f64>| match v {
                Some(x) => x.to_string(),
                None if all_failed => "failed".to_string(),
                None => String::new(),
            };
            w.write_record([
                r.method.clone(),
                r.seeds.to_string(),
                cell(r.mse_mean),
                cell(r.mse_std),
                cell(r.regret_mean),
                cell(r.regret_std),
                r.failed_runs.to_string(),
                r.numerical_failures.to_string(),
            ])
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
