use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;

use lpdiff::bench::{content_hash, run_bench, BenchConfig};
use lpdiff::grad::Formulation;
use lpdiff::gradcheck::{grad_check, GradCheckConfig};
use lpdiff::lp::{presolve, to_standard_form, GeneralProblem};
use lpdiff::predictor::{Checkpoint, PredictorModel};
use lpdiff::problems::{
    generate, Dataset, GeneratorConfig, KnapsackGen, SchedulingGen, ShortestPathGen,
};
use lpdiff::solver::{solve, SolverConfig};
use lpdiff::train::{evaluate, train, Method, TrainConfig};

/// Exit code for usage, configuration and missing-input errors.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "lpdiff",
    version,
    about = "Differentiable LP layer: solve, check gradients, generate data, train, evaluate, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an LP given as JSON and print the solution.
    Solve(SolveArgs),
    /// Compare analytic and finite-difference Jacobians of x* with respect to c.
    GradCheck(GradCheckArgs),
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train a predictor on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained predictor on a dataset.
    Eval(EvalArgs),
    /// Run a multi-seed benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// LP file with fields sense, c, A_eq, b_eq, A_ub, b_ub.
    lp: PathBuf,
    #[arg(long = "lambda-cutoff", default_value_t = 1e-8)]
    lambda_cutoff: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradCheckArgs {
    /// LP file; a built-in six-variable toy is used when omitted.
    lp: Option<PathBuf>,
    #[arg(long, default_value = "hsd")]
    formulation: Formulation,
    #[arg(long = "lambda-cutoff", default_value_t = 0.1)]
    lambda_cutoff: f64,
    #[arg(long = "fd-step", default_value_t = 1e-4)]
    fd_step: f64,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    #[arg(long = "squared-weight", default_value_t = 0.1)]
    squared_weight: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemKind {
    Knapsack,
    Shortestpath,
    Scheduling,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    problem: ProblemKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    instances: Option<usize>,
    /// Output directory for spec.json and instances.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (TOML or JSON); flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long = "feature-width")]
    feature_width: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory, or an instances file with spec.json beside it.
    dataset: PathBuf,
    /// Training settings (TOML or JSON); flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "lambda-cutoff")]
    lambda_cutoff: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    formulation: Option<Formulation>,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of instances held out for validation.
    #[arg(long = "val-fraction", default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Bench settings (TOML or JSON), or a manifest written by an earlier bench.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long = "master-seed")]
    master_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
}

/// Record of one invocation: resolved config, seed, input hash and outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    subcommand: String,
    config: serde_json::Value,
    seed: u64,
    input_hash: String,
    outputs: Vec<String>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let report =
                json!({ "error": { "kind": error_kind(&e), "message": format!("{e:#}") } });
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&report).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::from(code)
        }
    }
}

fn lib_error(e: &anyhow::Error) -> Option<&lpdiff::Error> {
    e.chain().find_map(|c| c.downcast_ref::<lpdiff::Error>())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.downcast_ref::<UsageError>().is_some() {
        return "usage";
    }
    match lib_error(e) {
        Some(lpdiff::Error::Io(io)) if io.kind() == std::io::ErrorKind::NotFound => "not-found",
        Some(lpdiff::Error::Config(_)) => "config",
        Some(err) if err.is_numerical() => "numerical",
        Some(_) => "solver",
        None => "io",
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match error_kind(e) {
        "usage" | "not-found" | "config" => EXIT_USAGE,
        _ => 1,
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => usage(format!("file not found: {}", path.display())),
        _ => anyhow!(e).context(format!("reading {}", path.display())),
    })
}

/// Parse a TOML or JSON config; the format follows the file extension.
fn load_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_input(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    Ok(parsed)
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Ok(Dataset::load(path)?)
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => write(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<()> {
    let cfg = SolverConfig::with_cutoff(a.lambda_cutoff);
    cfg.validate()?;
    let problem = GeneralProblem::from_json(&read_input(&a.lp)?)?;
    let (lp, _) = presolve(&to_standard_form(&problem)?)?;
    let sol = solve(&lp, &cfg)?;
    let report = json!({
        "x": lp.original_x(&sol.x).as_slice(),
        "y": sol.y.as_slice(),
        "t": sol.t.as_slice(),
        "objective": lp.original_objective(&sol.x),
        "lambda_final": sol.lambda_final,
        "iterations": sol.iterations,
        "residuals": sol.residuals,
    });
    emit(a.out.as_deref(), &report)
}

const TOY_LP: &str = r#"{
  "c": [1.0, 2.0, 0.5, 1.5, 1.0, 3.0],
  "A_eq": [[1.0, 1.0, 1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0, 1.0, 1.0]],
  "b_eq": [2.0, 1.5, 1.0]
}"#;

fn cmd_grad_check(a: GradCheckArgs) -> anyhow::Result<()> {
    let text = match &a.lp {
        Some(p) => read_input(p)?,
        None => TOY_LP.to_string(),
    };
    let (lp, _) = presolve(&to_standard_form(&GeneralProblem::from_json(&text)?)?)?;
    let cfg = GradCheckConfig {
        formulation: a.formulation,
        lambda_cutoff: a.lambda_cutoff,
        fd_step: a.fd_step,
        damping: a.damping,
        squared_weight: a.squared_weight,
    };
    emit(None, &grad_check(&lp, &cfg)?)
}

fn gen_config(a: &GenArgs) -> anyhow::Result<GeneratorConfig> {
    let mut cfg = match (&a.config, a.problem) {
        (Some(p), _) => load_config::<GeneratorConfig>(p)?,
        (None, ProblemKind::Knapsack) => GeneratorConfig::Knapsack(KnapsackGen::default()),
        (None, ProblemKind::Shortestpath) => {
            GeneratorConfig::ShortestPath(ShortestPathGen::default())
        }
        (None, ProblemKind::Scheduling) => GeneratorConfig::Scheduling(SchedulingGen::default()),
    };
    let matches = matches!(
        (&cfg, a.problem),
        (GeneratorConfig::Knapsack(_), ProblemKind::Knapsack)
            | (GeneratorConfig::ShortestPath(_), ProblemKind::Shortestpath)
            | (GeneratorConfig::Scheduling(_), ProblemKind::Scheduling)
    );
    if !matches {
        return Err(usage("--problem does not match the problem in --config"));
    }
    let reject = |flag: &str| usage(format!("--{flag} does not apply to this problem"));
    match &mut cfg {
        GeneratorConfig::ShortestPath(g) => {
            if a.items.is_some() || a.tasks.is_some() || a.machines.is_some() || a.slots.is_some() {
                return Err(reject("items/tasks/machines/slots"));
            }
            g.rows = a.rows.unwrap_or(g.rows);
            g.cols = a.cols.unwrap_or(g.cols);
            g.node_features = a.feature_width.unwrap_or(g.node_features);
            g.noise = a.noise.unwrap_or(g.noise);
        }
        GeneratorConfig::Knapsack(g) => {
            if a.rows.is_some()
                || a.cols.is_some()
                || a.tasks.is_some()
                || a.machines.is_some()
                || a.slots.is_some()
            {
                return Err(reject("rows/cols/tasks/machines/slots"));
            }
            g.items = a.items.unwrap_or(g.items);
            g.feature_width = a.feature_width.unwrap_or(g.feature_width);
            g.noise = a.noise.unwrap_or(g.noise);
        }
        GeneratorConfig::Scheduling(g) => {
            if a.rows.is_some() || a.cols.is_some() || a.items.is_some() {
                return Err(reject("rows/cols/items"));
            }
            g.tasks = a.tasks.unwrap_or(g.tasks);
            g.machines = a.machines.unwrap_or(g.machines);
            g.slots = a.slots.unwrap_or(g.slots);
            g.feature_width = a.feature_width.unwrap_or(g.feature_width);
            g.noise = a.noise.unwrap_or(g.noise);
        }
    }
    cfg.set_seed(a.seed);
    if let Some(n) = a.instances {
        cfg.set_instances(n);
    }
    Ok(cfg)
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let cfg = gen_config(&a)?;
    let data = generate(&cfg)?;
    data.save(&a.out)?;
    let manifest = RunManifest {
        subcommand: "gen".into(),
        config: serde_json::to_value(&cfg)?,
        seed: a.seed,
        input_hash: content_hash(&cfg)?,
        outputs: vec!["spec.json".into(), "instances.jsonl".into()],
    };
    write(
        &a.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    emit(None, &json!({ "instances": data.len(), "out": a.out }))
}

fn train_config(a: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    cfg.method = a.method.unwrap_or(cfg.method);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.optimizer.lr = a.lr.unwrap_or(cfg.optimizer.lr);
    cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
    cfg.solver.lambda_cutoff = a.lambda_cutoff.unwrap_or(cfg.solver.lambda_cutoff);
    cfg.grad.damping = a.damping.unwrap_or(cfg.grad.damping);
    cfg.grad.formulation = a.formulation.unwrap_or(cfg.grad.formulation);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(usage("--val-fraction must lie in [0, 1)"));
    }
    let cfg = train_config(&a)?;
    let data = load_dataset(&a.dataset)?;
    let n_val = (data.len() as f64 * a.val_fraction).round() as usize;
    if n_val >= data.len() {
        bail!(usage(
            "dataset too small for the requested validation split"
        ));
    }
    let (tr, va, _) = data.split(data.len() - n_val, n_val, 0)?;
    let outcome = train(&tr, &va, &cfg)?;

    let checkpoint = outcome.model.to_checkpoint(Some(&outcome.optimizer));
    write(
        &a.out.join("checkpoint.json"),
        &serde_json::to_string(&checkpoint)?,
    )?;
    write(
        &a.out.join("best.json"),
        &serde_json::to_string(&outcome.best_model.to_checkpoint(None))?,
    )?;
    write(&a.out.join("curve.csv"), &outcome.record.to_csv()?)?;
    let manifest = RunManifest {
        subcommand: "train".into(),
        config: json!({ "train": cfg, "val_fraction": a.val_fraction, "dataset": a.dataset }),
        seed: cfg.seed,
        input_hash: content_hash(
            &json!({ "train": cfg, "spec": data.spec, "instances": data.instances_jsonl()? }),
        )?,
        outputs: vec![
            "checkpoint.json".into(),
            "best.json".into(),
            "curve.csv".into(),
        ],
    };
    write(
        &a.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    let last = outcome
        .record
        .rows
        .last()
        .ok_or_else(|| anyhow!("empty learning curve"))?;
    emit(
        None,
        &json!({
            "method": cfg.method,
            "epochs": cfg.epochs,
            "best_epoch": outcome.best_epoch,
            "final": last,
            "failures": outcome.record.total_failures(),
            "out": a.out,
        }),
    )
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.dataset)?;
    let cp: Checkpoint = serde_json::from_str(&read_input(&a.checkpoint)?)
        .map_err(|e| usage(format!("{}: {e}", a.checkpoint.display())))?;
    let (model, _) = PredictorModel::from_checkpoint(&cp)?;
    if model.input_width() != data.spec.feature_width {
        return Err(usage(format!(
            "checkpoint expects {} features, dataset has {}",
            model.input_width(),
            data.spec.feature_width
        )));
    }
    emit(None, &evaluate(&model, &data)?)
}

fn bench_config(a: &BenchArgs) -> anyhow::Result<BenchConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let value: serde_json::Value = load_config(p)?;
            // A manifest carries the resolved config under "config".
            let inner = match value.get("subcommand") {
                Some(s) if s == "bench" => value["config"].clone(),
                Some(_) => return Err(usage("manifest is not from a bench run")),
                None => value,
            };
            serde_json::from_value(inner).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => BenchConfig::default(),
    };
    cfg.seeds = a.seeds.unwrap_or(cfg.seeds);
    cfg.master_seed = a.master_seed.unwrap_or(cfg.master_seed);
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if let Some(c) = &a.cutoffs {
        cfg.cutoffs = c.clone();
    }
    cfg.train.epochs = a.epochs.unwrap_or(cfg.train.epochs);
    cfg.workers = a.workers.unwrap_or(cfg.workers);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    let cfg = bench_config(&a)?;
    let out = run_bench(&cfg)?;
    let mut outputs = vec!["report.json".to_string(), "report.csv".to_string()];
    write(&a.out.join("report.json"), &out.report.to_json()?)?;
    write(&a.out.join("report.csv"), &out.report.to_csv()?)?;
    for (name, curve) in &out.curves {
        let rel = format!("curves/{name}.csv");
        write(&a.out.join(&rel), &curve.to_csv()?)?;
        outputs.push(rel);
    }
    let manifest = RunManifest {
        subcommand: "bench".into(),
        config: serde_json::to_value(&cfg)?,
        seed: cfg.master_seed,
        input_hash: out.report.manifest_hash.clone(),
        outputs,
    };
    write(
        &a.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    print!("{}", out.report.to_csv()?);
    Ok(())
}
