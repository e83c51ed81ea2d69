//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints a PASS or FAIL line even when all of them pass.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpdiff::bench::{run_bench, BenchConfig, BenchOutput};
use lpdiff::grad::Formulation;
use lpdiff::gradcheck::{grad_check, GradCheckConfig};
use lpdiff::lp::{to_standard_form, StandardFormLP};
use lpdiff::predictor::{ModelConfig, PredictorModel};
use lpdiff::problems::{
    brute_force_milp, dijkstra_oracle, generate, knapsack_oracle, knapsack_to_lp, path_indicator,
    random_dag, random_feasible_lp, random_interior_lp, second_best_gap, shortestpath_to_lp,
    GeneratorConfig, KnapsackGen, KnapsackSpec, SchedulingGen, ShortestPathGen, ShortestPathSpec,
};
use lpdiff::solver::{solve, LpSolution, SolverConfig};
use lpdiff::train::{spo_target_gradient, Method};

use common::{rel_diff, vertex_enumeration};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct SolverSuite {
    lps: Vec<StandardFormLP>,
    solutions: Vec<Result<LpSolution, String>>,
    elapsed: Duration,
}

fn solver_suite() -> &'static SolverSuite {
    static SUITE: OnceLock<SolverSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lps: Vec<StandardFormLP> = (0..100)
            .map(|_| {
                let p = rng.random_range(1..=6);
                let k = rng.random_range(p + 1..=12);
                random_feasible_lp(&mut rng, k, p)
            })
            .collect();
        let cfg = SolverConfig::with_cutoff(1e-8);
        let start = Instant::now();
        let solutions = lps
            .iter()
            .map(|lp| solve(lp, &cfg).map_err(|e| e.to_string()))
            .collect();
        SolverSuite {
            lps,
            solutions,
            elapsed: start.elapsed(),
        }
    })
}

fn oracle_equivalence() -> Outcome {
    let suite = solver_suite();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (i, (lp, sol)) in suite.lps.iter().zip(&suite.solutions).enumerate() {
        let (_, opt) = vertex_enumeration(lp).expect("generated LPs are feasible");
        match sol {
            Ok(s) => {
                let r = rel_diff(s.objective, opt);
                worst = worst.max(r);
                if r > 1e-5 {
                    bad.push(i);
                }
            }
            Err(e) => bad.push({
                eprintln!("  lp {i}: {e}");
                i
            }),
        }
    }
    let secs = suite.elapsed.as_secs_f64();
    outcome(
        bad.is_empty() && secs < 60.0,
        format!("100 LPs, worst relative objective error {worst:.2e}, failures {bad:?}, solve time {secs:.2}s"),
    )
}

fn feasibility_and_duality() -> Outcome {
    let suite = solver_suite();
    let mut violations = 0;
    let (mut wp, mut wd) = (0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (lp, sol) in suite.lps.iter().zip(&suite.solutions) {
        let Ok(s) = sol else {
            violations += 1;
            continue;
        };
        let k = lp.num_vars() as f64;
        let primal = (&lp.a * &s.x - &lp.b).amax() / (1.0 + lp.b.amax());
        let dual = (lp.a.tr_mul(&s.y) + &s.t - &lp.c).amax() / (1.0 + lp.c.amax());
        let ratio = s.x.dot(&s.t) / (k * s.lambda_final);
        wp = wp.max(primal);
        wd = wd.max(dual);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        if primal > 1e-6 || dual > 1e-6 || !(0.5..=2.0).contains(&ratio) {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("scaled primal {wp:.1e}, scaled dual {wd:.1e}, x't / (k lambda) in [{lo:.4}, {hi:.4}], violations {violations}"),
    )
}

/// Square system with a strictly positive unique solution.
fn square_lp(rng: &mut ChaCha8Rng, k: usize) -> StandardFormLP {
    loop {
        let a = DMatrix::<f64>::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        if a.clone().lu().determinant().abs() < 0.1 {
            continue;
        }
        let x0 = DVector::from_fn(k, |_, _| rng.random_range(0.5..2.0));
        let c = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        return StandardFormLP::new(c, a.clone(), a * x0).unwrap();
    }
}

fn hsd_gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = GradCheckConfig {
        formulation: Formulation::Hsd,
        lambda_cutoff: 0.1,
        fd_step: 1e-4,
        damping: 0.0,
        ..GradCheckConfig::default()
    };
    let (mut above, mut total, mut errors) = (0usize, 0usize, 0usize);
    let mut instances_above = 0;
    for _ in 0..50 {
        let p = rng.random_range(1..=5);
        let k = rng.random_range(p + 1..=10);
        match grad_check(&random_feasible_lp(&mut rng, k, p), &cfg) {
            Ok(r) => {
                let n = r.column_cosines.iter().filter(|c| **c >= 0.99).count();
                above += n;
                total += k;
                if n * 10 >= 9 * k {
                    instances_above += 1;
                }
            }
            Err(e) => {
                eprintln!("  grad check failed: {e}");
                errors += 1;
                total += k;
            }
        }
    }
    let mut zero_max = 0.0f64;
    for k in 1..=6 {
        let lp = square_lp(&mut rng, k);
        for f in Formulation::ALL {
            let r = grad_check(
                &lp,
                &GradCheckConfig {
                    formulation: f,
                    ..cfg.clone()
                },
            )
            .expect("square systems solve");
            zero_max = zero_max.max(r.analytic_max_abs);
        }
    }
    let frac = above as f64 / total as f64;
    outcome(
        frac >= 0.9 && zero_max <= 1e-8 && errors == 0,
        format!(
            "{above}/{total} columns at cosine >= 0.99 ({:.1}%), {instances_above}/50 instances at >= 90%, \
             square systems max |J| = {zero_max:.1e}",
            100.0 * frac
        ),
    )
}

fn formulation_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lines = Vec::new();
    let mut pass = true;
    for f in [Formulation::KktLogBarrier, Formulation::KktSquared] {
        let cfg = GradCheckConfig {
            formulation: f,
            lambda_cutoff: 0.1,
            fd_step: 1e-6,
            ..GradCheckConfig::default()
        };
        let (mut worst_res, mut worst_err, mut failures) = (0.0f64, 0.0f64, 0);
        for _ in 0..20 {
            let p = rng.random_range(1..=5);
            let k = rng.random_range(p + 1..=10);
            match grad_check(&random_interior_lp(&mut rng, k, p), &cfg) {
                Ok(r) => {
                    worst_res = worst_res.max(r.system_residual);
                    worst_err = worst_err.max(r.frobenius_relative_error);
                }
                Err(e) => {
                    eprintln!("  {f}: {e}");
                    failures += 1;
                }
            }
        }
        pass &= worst_res <= 1e-8 && worst_err <= 1e-2 && failures == 0;
        lines.push(format!(
            "{f}: residual {worst_res:.1e}, fd error {worst_err:.1e}, failures {failures}"
        ));
    }
    // The HSD system residual is covered by the same harness.
    let mut worst_hsd = 0.0f64;
    for _ in 0..20 {
        let p = rng.random_range(1..=5);
        let k = rng.random_range(p + 1..=10);
        let cfg = GradCheckConfig {
            formulation: Formulation::Hsd,
            lambda_cutoff: 0.1,
            ..GradCheckConfig::default()
        };
        if let Ok(r) = grad_check(&random_feasible_lp(&mut rng, k, p), &cfg) {
            worst_hsd = worst_hsd.max(r.system_residual);
        }
    }
    pass &= worst_hsd <= 1e-8;
    lines.push(format!("hsd: residual {worst_hsd:.1e}"));
    outcome(pass, lines.join("; "))
}

struct BenchRun {
    output: BenchOutput,
    elapsed: Duration,
}

fn shortest_path_bench() -> &'static Result<BenchRun, String> {
    static RUN: OnceLock<Result<BenchRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = BenchConfig {
            methods: vec![Method::TwoStage, Method::IntOpt],
            seeds: 5,
            master_seed: 2024,
            generator: GeneratorConfig::ShortestPath(ShortestPathGen::default()),
            cutoffs: vec![0.1, 1e-6],
            ..BenchConfig::default()
        };
        let start = Instant::now();
        run_bench(&cfg)
            .map(|output| BenchRun {
                output,
                elapsed: start.elapsed(),
            })
            .map_err(|e| e.to_string())
    })
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |x| format!("{x:.4}"))
}

fn cutoff_direction() -> Outcome {
    let run = match shortest_path_bench() {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("bench failed: {e}")),
    };
    let report = &run.output.report;
    let loose = report.row("intopt@1e-1").and_then(|r| r.regret_mean);
    let tight = report.row("intopt@1e-6").and_then(|r| r.regret_mean);
    let tight_failures_per_seed = report
        .runs
        .iter()
        .filter(|r| r.method == Method::IntOpt && r.cutoff == Some(1e-6))
        .all(|r| r.numerical_failures >= 1);
    let pass = matches!((loose, tight), (Some(a), Some(b)) if a <= b) || tight_failures_per_seed;
    outcome(
        pass,
        format!(
            "mean test regret at cut-off 0.1: {}, at 1e-6: {}, numerical failures at 1e-6: {}",
            show(loose),
            show(tight),
            report
                .row("intopt@1e-6")
                .map_or(0, |r| r.numerical_failures)
        ),
    )
}

fn end_to_end_direction() -> Outcome {
    let run = match shortest_path_bench() {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("bench failed: {e}")),
    };
    let report = &run.output.report;
    let intopt = report.row("intopt@1e-1").and_then(|r| r.regret_mean);
    let two_stage = report.row("two-stage").and_then(|r| r.regret_mean);
    let secs = run.elapsed.as_secs_f64();
    let pass = matches!((intopt, two_stage), (Some(a), Some(b)) if a <= b) && secs < 1800.0;
    outcome(
        pass,
        format!(
            "mean test regret intopt {} vs two-stage {} over 5 seeds, bench time {secs:.1}s",
            show(intopt),
            show(two_stage)
        ),
    )
}

fn spo_stationarity() -> Outcome {
    let gens = [
        GeneratorConfig::ShortestPath(ShortestPathGen {
            instances: 7,
            seed: 70,
            ..ShortestPathGen::default()
        }),
        GeneratorConfig::Knapsack(KnapsackGen {
            instances: 7,
            seed: 71,
            ..KnapsackGen::default()
        }),
        GeneratorConfig::Scheduling(SchedulingGen {
            instances: 6,
            seed: 72,
            ..SchedulingGen::default()
        }),
    ];
    let solver = SolverConfig::with_cutoff(1e-8);
    let (mut checked, mut nonzero) = (0, 0);
    for g in &gens {
        let data = generate(g).expect("generator runs");
        for inst in &data.instances {
            let s = data
                .problem()
                .structure(inst.b_override.as_deref())
                .unwrap();
            let c = DVector::from_row_slice(&inst.c);
            let x_true = solve(&s.lp_for(&c), &solver).expect("true costs solve").x;
            let (g, _) =
                spo_target_gradient(&s, &c, &c, &x_true, &solver).expect("perturbed costs solve");
            checked += 1;
            if g.iter().any(|v| *v != 0.0) {
                nonzero += 1;
            }
        }
    }
    outcome(
        checked == 20 && nonzero == 0,
        format!("{checked} instances, {nonzero} with a nonzero gradient at c_hat = c"),
    )
}

fn integrality_and_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let solver = SolverConfig::with_cutoff(1e-8);

    let (mut graphs, mut sp_bad, mut worst_sp, mut worst_round) = (0, 0, 0.0f64, 0.0f64);
    while graphs < 100 {
        let n = rng.random_range(5..=12);
        let edges = random_dag(&mut rng, n, 0.4);
        let spec = ShortestPathSpec::new(n, edges, 0, n - 1).unwrap();
        let w: Vec<f64> = (0..spec.num_edges())
            .map(|_| rng.random_range(0.1..5.0))
            .collect();
        if second_best_gap(&spec, &w)
            .unwrap()
            .is_some_and(|g| g < 1e-6)
        {
            continue;
        }
        graphs += 1;
        let (path, cost) = dijkstra_oracle(&spec, &w).unwrap();
        let lp = to_standard_form(&shortestpath_to_lp(&spec, &w).unwrap()).unwrap();
        match solve(&lp, &solver) {
            Ok(s) => {
                let x = lp.original_x(&s.x);
                let r = rel_diff(lp.original_objective(&s.x), cost);
                let round = x
                    .iter()
                    .zip(path_indicator(spec.num_edges(), &path))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_sp = worst_sp.max(r);
                worst_round = worst_round.max(round);
                if r > 1e-5 || round > 2e-3 {
                    sp_bad += 1;
                }
            }
            Err(_) => sp_bad += 1,
        }
    }

    let (mut ks_bad, mut min_margin) = (0, f64::INFINITY);
    for _ in 0..100 {
        let n = rng.random_range(3..=15);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(1..=6) as f64).collect();
        let budget = (costs.iter().sum::<f64>() * rng.random_range(0.2..0.8))
            .floor()
            .max(1.0);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let spec = KnapsackSpec::new(costs.clone(), budget).unwrap();
        let (_, dp) = knapsack_oracle(&values, &costs, budget).unwrap();
        let lp = to_standard_form(&knapsack_to_lp(&spec, &values).unwrap()).unwrap();
        match solve(&lp, &solver) {
            Ok(s) => {
                let relaxed = lp.original_objective(&s.x);
                min_margin = min_margin.min(relaxed - dp);
                if relaxed < dp - 1e-6 * dp.abs().max(1.0) {
                    ks_bad += 1;
                }
            }
            Err(_) => ks_bad += 1,
        }
    }

    let (mut enum_checked, mut enum_bad) = (0, 0);
    for n in (1..=20).chain(1..=16) {
        // Cent-valued costs keep the scaled DP table small.
        let costs: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0.5..4.0) * 100.0_f64).round() / 100.0)
            .collect();
        let budget =
            (costs.iter().sum::<f64>() * rng.random_range(0.2..0.8) * 100.0).floor() / 100.0;
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let spec = KnapsackSpec::new(costs.clone(), budget).unwrap();
        let (_, dp) = knapsack_oracle(&values, &costs, budget).unwrap();
        let (_, bf) = brute_force_milp(&knapsack_to_lp(&spec, &values).unwrap()).unwrap();
        enum_checked += 1;
        if (dp - bf).abs() > 1e-9 * dp.abs().max(1.0) {
            enum_bad += 1;
        }
    }

    outcome(
        sp_bad == 0 && ks_bad == 0 && enum_bad == 0,
        format!(
            "shortest path: 100 graphs, worst cost error {worst_sp:.1e}, worst rounding {worst_round:.1e}, bad {sp_bad}; \
             knapsack bound: min LP - DP {min_margin:.2e}, bad {ks_bad}; enumeration vs DP: {enum_checked} instances, bad {enum_bad}"
        ),
    )
}

fn predictor_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-4;
    let (mut bad, mut worst, mut compared) = (0, 0.0f64, 0usize);
    for _ in 0..100 {
        let input = rng.random_range(1..=5);
        let depth = rng.random_range(0..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
        let output = rng.random_range(1..=3);
        let samples = rng.random_range(1..=4);
        let model = PredictorModel::new(
            &mut rng,
            &ModelConfig {
                input,
                hidden,
                output,
            },
        )
        .unwrap();
        let z = DMatrix::from_fn(samples, input, |_, _| rng.random_range(-2.0..2.0));
        let g = DMatrix::from_fn(samples, output, |_, _| rng.random_range(-1.0..1.0));
        let loss = |m: &PredictorModel| m.forward(&z).unwrap().component_mul(&g).sum();
        let (_, cache) = model.forward_cached(&z).unwrap();
        let grads = model.backward(&cache, &g).unwrap();
        let mut case_bad = false;
        for (li, layer) in model.layers.iter().enumerate() {
            let n_w = layer.weight.len();
            for idx in 0..n_w + layer.bias.len() {
                let perturbed = |delta: f64| {
                    let mut m = model.clone();
                    if idx < n_w {
                        m.layers[li].weight[idx] += delta;
                    } else {
                        m.layers[li].bias[idx - n_w] += delta;
                    }
                    loss(&m)
                };
                let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let an = if idx < n_w {
                    grads.layers[li].weight[idx]
                } else {
                    grads.layers[li].bias[idx - n_w]
                };
                if fd.abs().max(an.abs()) <= 1e-8 {
                    continue;
                }
                compared += 1;
                let r = (an - fd).abs() / fd.abs().max(an.abs());
                worst = worst.max(r);
                case_bad |= r > 1e-5;
            }
        }
        bad += case_bad as usize;
    }
    outcome(bad == 0, format!("100 configurations, {compared} components, worst relative error {worst:.1e}, bad {bad}"))
}

fn reproducibility() -> Outcome {
    let cfg = BenchConfig {
        methods: vec![Method::TwoStage, Method::IntOpt, Method::Spo],
        seeds: 3,
        master_seed: 77,
        split: lpdiff::bench::SplitCounts {
            train: 40,
            val: 15,
            test: 15,
        },
        generator: GeneratorConfig::Knapsack(KnapsackGen::default()),
        train: lpdiff::train::TrainConfig {
            epochs: 3,
            ..Default::default()
        },
        ..BenchConfig::default()
    };
    let first = run_bench(&cfg).expect("bench runs");
    let manifest = serde_json::to_string(&cfg).unwrap();
    let restored: BenchConfig = serde_json::from_str(&manifest).unwrap();
    let second = run_bench(&BenchConfig {
        workers: 1,
        ..restored
    })
    .expect("bench reruns");
    let same_json = first.report.to_json().unwrap() == second.report.to_json().unwrap();
    let same_csv = first.report.to_csv().unwrap() == second.report.to_csv().unwrap();
    outcome(
        same_json && same_csv,
        format!("report JSON identical: {same_json}, CSV identical: {same_csv} (rerun from serialized config on one worker)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("solver matches vertex enumeration", oracle_equivalence),
        ("feasibility and duality contract", feasibility_and_duality),
        (
            "hsd gradient agrees with finite differences",
            hsd_gradient_fidelity,
        ),
        (
            "kkt formulations satisfy their systems",
            formulation_consistency,
        ),
        ("loose cut-off beats tight cut-off", cutoff_direction),
        (
            "intopt regret at most two-stage regret",
            end_to_end_direction,
        ),
        ("spo gradient vanishes at the truth", spo_stationarity),
        ("integrality and oracle agreement", integrality_and_oracles),
        (
            "predictor backprop matches finite differences",
            predictor_gradients,
        ),
        ("bench reports are reproducible", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += (!result.pass) as usize;
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
