//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion, and exits nonzero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use srmdp::bounds;
use srmdp::domains;
use srmdp::experiments::{self, Algorithm, EvalSet, ExperimentConfig};
use srmdp::mdp::{self, Policy, TabularMdp};
use srmdp::milp;
use srmdp::posterior::ModelEnsemble;
use srmdp::risk::{self, DiscreteDist, SoftRobustParams};
use srmdp::rng::stream_rng;
use srmdp::robust::{self, RectangularMode};
use srmdp::srvi::{self, FeatureMap, SrviConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn params(alpha: f64, lambda: f64) -> SoftRobustParams {
    SoftRobustParams::new(alpha, lambda).unwrap()
}

/// Random Dirichlet MDP with `n` further Dirichlet models as the ensemble.
fn instance(s: usize, a: usize, n: usize, seed: u64) -> (TabularMdp, ModelEnsemble) {
    let (mdp, _) = domains::random_dirichlet_mdp(s, a, seed).unwrap();
    let models = (0..n).map(|k| domains::random_dirichlet_mdp(s, a, seed * 1000 + k as u64 + 1).unwrap().1).collect();
    (mdp, ModelEnsemble::uniform(models).unwrap())
}

fn random_policy(s: usize, a: usize, seed: u64) -> Policy {
    let mut rng = stream_rng(seed, 99);
    let probs: Vec<f64> = (0..s).flat_map(|_| srmdp::rng::dirichlet(&mut rng, &vec![1.0; a])).collect();
    Policy::randomized(a, probs).unwrap()
}

fn milp_matches_enumeration() -> Outcome {
    let mut rng = stream_rng(1, 0);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let (s, a, n) = (rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=4));
        let (mdp, e) = instance(s, a, n, 100 + i);
        let p = params([0.5, 0.9][i as usize % 2], [0.0, 0.5, 1.0][(i / 2) as usize % 3]);
        let model = milp::build_model(&mdp, &e, p).unwrap();
        let bb = milp::solve_branch_and_bound(&model, milp::DEFAULT_GAP_TOL, milp::DEFAULT_NODE_LIMIT).unwrap();
        let brute = milp::brute_force_deterministic(&mdp, &e, p).unwrap();
        let d = (bb.objective - brute.objective).abs();
        worst = worst.max(d);
        ensure(bb.complete && d <= 1e-6, || format!("instance {i} (S={s}, A={a}, N={n}): {} vs {}", bb.objective, brute.objective))?;
    }
    Ok(format!("20 instances, max |difference| {worst:.2e}"))
}

fn weight_box_equivalence() -> Outcome {
    let mut rng = stream_rng(2, 0);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let n = rng.gen_range(1..=50);
        let returns: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 3.0 } else { rng.gen_range(-10.0..10.0) }).collect();
        let raw: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>() }).collect();
        let total: f64 = raw.iter().sum();
        let f: Vec<f64> = if total > 0.0 { raw.iter().map(|x| x / total).collect() } else { vec![1.0 / n as f64; n] };
        let p = params(rng.gen_range(0.0..0.99), rng.gen());
        let direct = risk::soft_robust_combine(&returns, &f, p).unwrap();
        let (boxed, _) = risk::xi_minimize(&returns, &risk::xi_box(&f, p).unwrap()).unwrap();
        worst = worst.max((direct - boxed).abs());
        ensure((direct - boxed).abs() <= 1e-9, || format!("tuple {i}: {direct} vs {boxed}"))?;
    }
    Ok(format!("500 tuples, max |difference| {worst:.2e}"))
}

fn cvar_primal_dual() -> Outcome {
    let mut rng = stream_rng(3, 0);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let n = rng.gen_range(1..=30);
        let values: Vec<f64> = (0..n).map(|_| (rng.gen_range(-5.0..5.0) * 2.0f64).round() / 2.0).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let dist = DiscreteDist::new(&values, &probs).unwrap();
        let alpha = [0.0, 0.25, 0.75, 0.99][i % 4];
        let a = risk::cvar_primal(&dist, alpha).unwrap();
        let b = risk::cvar_dual(&dist, alpha).unwrap();
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= 1e-9, || format!("distribution {i}, alpha {alpha}: {a} vs {b}"))?;
    }
    Ok(format!("500 distributions with ties, max |difference| {worst:.2e}"))
}

fn check_contraction(mdp: &TabularMdp, e: &ModelEnsemble, p: SoftRobustParams, tol: f64) -> Result<f64, String> {
    let g = mdp.discount();
    let mut worst = 0.0f64;
    for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
        let out = robust::robust_value_iteration(mdp, e, p, mode, tol, 100_000).map_err(|x| x.to_string())?;
        // each residual is a difference of computed values, so it carries
        // rounding error on the order of eps * ||v||
        let v_inf = out.value.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let rounding = 64.0 * f64::EPSILON * (1.0 + v_inf);
        for w in out.residuals.windows(2) {
            worst = worst.max(w[1] / w[0]);
            ensure(w[1] <= (g + 1e-9) * w[0] + rounding, || format!("{mode:?}: residual {} after {}", w[1], w[0]))?;
        }
    }
    Ok(worst)
}

fn robust_vi_contraction() -> Outcome {
    let tol = 1e-6;
    let mut worst = 0.0f64;
    let cfg = ExperimentConfig { domain: "riverswim".into(), n_models: Some(30), seed: 1, ..Default::default() };
    let sc = experiments::build_scenario(&cfg).unwrap();
    worst = worst.max(check_contraction(&sc.mdp, &sc.train, params(0.8, 0.5), tol)?);
    let mut max_gap = 0.0f64;
    for i in 0..10u64 {
        let (mdp, e) = instance(4, 3, 5, 300 + i);
        worst = worst.max(check_contraction(&mdp, &e, params(0.7, 0.6), tol)?);
        let single = ModelEnsemble::single(e.models()[0].clone());
        let vi = mdp::value_iteration(&mdp, &single.models()[0], tol, 100_000).unwrap();
        for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
            let r = robust::robust_value_iteration(&mdp, &single, params(0.7, 0.6), mode, tol, 100_000).unwrap();
            let gap = r.value.max_abs_diff(&vi.value);
            max_gap = max_gap.max(gap);
            ensure(gap <= 2.0 * tol, || format!("instance {i} {mode:?}: single-model gap {gap}"))?;
        }
    }
    Ok(format!("max residual ratio {worst:.6} (riverswim gamma 0.95, random gamma 0.9), single-model gap {max_gap:.2e}"))
}

fn rectangularization_ordering() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let mut min_slack = f64::INFINITY;
    for i in 0..20u64 {
        let n = rng.gen_range(1..=3);
        let (mdp, e) = instance(3, 2, n, 400 + i);
        let p = params(rng.gen_range(0.0..0.95), rng.gen());
        for k in 0..5 {
            let pi = random_policy(3, 2, i * 10 + k);
            let rect = robust::rho_r(&mdp, &e, p, &pi).unwrap();
            let grid = risk::rho_d_grid(&mdp, &e, &pi, p, 60).unwrap();
            let slack = grid.value + grid.error - rect;
            min_slack = min_slack.min(slack);
            // the rectangular evaluation stops at a residual of POLICY_EVAL_TOL
            let eval_error = robust::POLICY_EVAL_TOL / (1.0 - mdp.discount());
            ensure(slack >= -eval_error, || format!("instance {i} policy {k}: rectangular {rect} > dynamic {} + {}", grid.value, grid.error))?;
        }
        let tol = 1e-9;
        let s = robust::robust_value_iteration(&mdp, &e, p, RectangularMode::SRect, tol, 100_000).unwrap();
        let sa = robust::robust_value_iteration(&mdp, &e, p, RectangularMode::SaRect, tol, 100_000).unwrap();
        for (x, y) in sa.value.values().iter().zip(s.value.values()) {
            ensure(*x <= y + 1e-8, || format!("instance {i}: sa value {x} above s value {y}"))?;
        }
    }
    Ok(format!("20 instances x 5 policies, min slack {min_slack:.3e}; sa <= s everywhere"))
}

fn static_dynamic_bound() -> Outcome {
    let mut rng = stream_rng(6, 0);
    let mut min_slack = f64::INFINITY;
    for i in 0..20u64 {
        let n = rng.gen_range(1..=3);
        let (mdp, e) = instance(3, 2, n, 500 + i);
        let p = params(rng.gen_range(0.0..0.95), rng.gen());
        let c = bounds::check_static_dynamic_gap(&mdp, &e, &random_policy(3, 2, 500 + i), p, 60).unwrap();
        min_slack = min_slack.min(c.slack);
        ensure(c.pass, || format!("instance {i}: {c:?}"))?;
    }
    Ok(format!("20 instances, min slack {min_slack:.3e}"))
}

fn rectangular_gap_bound() -> Outcome {
    let mut rng = stream_rng(7, 0);
    let mut min_slack = f64::INFINITY;
    for i in 0..10u64 {
        let n = rng.gen_range(1..=3);
        let (mdp, e) = instance(3, 2, n, 600 + i);
        let p = params(rng.gen_range(0.0..0.95), rng.gen());
        let r = bounds::check_rectangular_gap(&mdp, &e, p, 40).unwrap();
        min_slack = min_slack.min(r.checks[0].slack);
        ensure(r.passed(), || format!("instance {i}: {r:?}"))?;
    }
    Ok(format!("10 instances, min slack {min_slack:.3e} (witness: best deterministic policy)"))
}

fn occupancy_mixture_bound() -> Outcome {
    let mut rng = stream_rng(8, 0);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100u64 {
        let (mdp, e) = instance(4, 2, 2, 700 + i);
        let pi = random_policy(4, 2, i);
        let b: f64 = rng.gen();
        let gap = bounds::occupancy_convexity_gap(&mdp, e.models(), &[b, 1.0 - b], &pi).unwrap();
        let g = mdp.discount();
        let bound = g * bounds::epsilon1(&mdp, &e, &pi).unwrap() / (1.0 - g);
        worst = worst.max(gap - bound);
        ensure(gap <= bound + 1e-9, || format!("mixture {i}: gap {gap} > bound {bound}"))?;
    }
    Ok(format!("100 mixtures, max (gap - bound) {worst:.3e}"))
}

fn post_decision_surprise() -> Outcome {
    let cfg = ExperimentConfig {
        domain: "random".into(),
        lambda_grid: vec![0.0, 0.5],
        trials: Some(200),
        n_models: Some(1000),
        ..Default::default()
    };
    let (_, summary) = experiments::cmd_surprise(&cfg, 1).map_err(|e| e.to_string())?;
    let get = |m: &str| summary.iter().find(|s| s.method == m).cloned().unwrap();
    let s0 = get(&experiments::static_method_name(0.0));
    let s5 = get(&experiments::static_method_name(0.5));
    let emp = get("empirical");
    let line = format!(
        "static(0) {:+.4} (SE {:.4}), static(0.5) {:+.4} (SE {:.4}), empirical {:+.4} (SE {:.4})",
        s0.mean_surprise, s0.std_error, s5.mean_surprise, s5.std_error, emp.mean_surprise, emp.std_error
    );
    ensure(s0.mean_surprise.abs() <= 2.0 * s0.std_error, || format!("static lambda 0 biased: {line}"))?;
    ensure(emp.mean_surprise < -2.0 * emp.std_error, || format!("empirical not negative: {line}"))?;
    ensure(s5.mean_surprise >= -2.0 * s5.std_error, || format!("static lambda 0.5 negative: {line}"))?;
    Ok(line)
}

fn srvi_consistency() -> Outcome {
    let cfg = ExperimentConfig { domain: "riverswim".into(), n_models: Some(100), seed: 1, ..Default::default() };
    let sc = experiments::build_scenario(&cfg).unwrap();
    let p = params(0.8, 0.5);
    let mode = RectangularMode::SRect;
    let tabular = robust::robust_value_iteration(&sc.mdp, &sc.train, p, mode, 1e-9, 100_000).unwrap();
    let one_hot = FeatureMap::one_hot(sc.mdp.num_states());
    let full = SrviConfig { full_coverage: true, tol: 1e-7, max_iters: 2000, ..SrviConfig::default() };
    let sol = srvi::srvi_solve(&sc.mdp, &sc.train, p, &one_hot, &full, mode).unwrap();
    let gap = one_hot.values(&sol.weights).iter().zip(tabular.value.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(gap <= 1e-3, || format!("one-hot gap {gap}"))?;
    let poly = FeatureMap::poly2_index(sc.mdp.num_states());
    let sol = srvi::srvi_solve(&sc.mdp, &sc.train, p, &poly, &SrviConfig { seed: 1, ..SrviConfig::default() }, mode).unwrap();
    let p0 = sc.mdp.initial_dist();
    let approx: f64 = poly.values(&sol.weights).iter().zip(p0).map(|(a, b)| a * b).sum();
    let exact = tabular.value.dot(p0);
    let rel = (approx - exact).abs() / exact.abs();
    ensure(rel <= 0.10, || format!("poly2 return {approx} vs tabular {exact}"))?;
    Ok(format!(
        "one-hot max gap {gap:.2e}; poly2 return {approx:.4} vs tabular {exact:.4} ({:.2}%, {} iterations, converged {})",
        100.0 * rel,
        sol.iterations,
        sol.converged
    ))
}

fn monotone_tradeoff(sc: &experiments::Scenario, cfg: &ExperimentConfig, alg: Algorithm) -> Result<String, String> {
    let mut c = cfg.clone();
    c.algorithm = alg;
    c.eval_on = EvalSet::Train;
    c.lambda_grid = vec![0.0, 0.5, 1.0];
    c.gap_tol = 1e-9;
    let rows = experiments::cmd_solve(sc, &c).map_err(|e| e.to_string())?;
    let (means, cvars): (Vec<f64>, Vec<f64>) = rows.iter().map(|(r, _)| (r.mean_return, r.cvar_return)).unzip();
    ensure(rows.iter().all(|(_, s)| !s.incomplete), || "branch and bound incomplete".into())?;
    for k in 1..3 {
        ensure(cvars[k] >= cvars[k - 1] - 1e-6, || format!("{}: CVaR {cvars:?}", sc.name))?;
        ensure(means[k] <= means[k - 1] + 1e-6, || format!("{}: mean {means:?}", sc.name))?;
    }
    Ok(format!("{} ({}, N={}): mean {:.4?} cvar {:.4?}", sc.name, alg.name(), sc.train.len(), means, cvars))
}

fn tradeoff_sanity() -> Outcome {
    let river = ExperimentConfig { domain: "riverswim".into(), alpha: 0.8, n_models: Some(5), seed: 1, ..Default::default() };
    let sc = experiments::build_scenario(&river).unwrap();
    let a = monotone_tradeoff(&sc, &river, Algorithm::Milp)?;
    let inv = ExperimentConfig { domain: "inventory_small".into(), alpha: 0.8, n_models: Some(100), seed: 1, ..Default::default() };
    let sc = experiments::build_scenario(&inv).unwrap();
    let b = monotone_tradeoff(&sc, &inv, Algorithm::Brute)?;
    Ok(format!("{a}; {b}"))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_srmdp");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands: Vec<Vec<&str>> = vec![
        vec!["solve", "--domain", "riverswim", "--algorithm", "rvi_s", "--alpha", "0.8", "--lambda", "0.5", "--seed", "1"],
        vec!["solve", "--domain", "toy", "--algorithm", "milp", "--lambda-grid", "0,0.5,1", "--models", "10"],
        vec!["solve", "--domain", "riverswim", "--algorithm", "srvi", "--models", "20", "--seed", "3"],
        vec!["tradeoff", "--domain", "inventory_small", "--models", "20", "--seed", "2"],
        vec!["surprise", "--trials", "8", "--models", "50", "--seed", "4"],
    ];
    for args in &commands {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("out{run}.csv"));
            let status = Command::new(bin).args(args).arg("--out").arg(&path).output().map_err(|e| e.to_string())?;
            ensure(status.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))?;
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1] && !outputs[0].is_empty(), || format!("{args:?}: outputs differ"))?;
    }
    Ok(format!("{} commands, byte-identical CSV on rerun", commands.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("mixed-integer program equals enumeration", milp_matches_enumeration),
        ("soft-robust combination equals weight-box minimum", weight_box_equivalence),
        ("CVaR primal equals dual", cvar_primal_dual),
        ("robust value iteration contracts; single model reduces to VI", robust_vi_contraction),
        ("rectangular return below dynamic return; sa below s", rectangularization_ordering),
        ("static vs dynamic gap bound", static_dynamic_bound),
        ("static vs rectangular optimum gap bound", rectangular_gap_bound),
        ("occupancy of mixture bound", occupancy_mixture_bound),
        ("post-decision surprise", post_decision_surprise),
        ("projected value iteration consistency", srvi_consistency),
        ("mean/CVaR tradeoff monotone in lambda", tradeoff_sanity),
        ("CLI determinism", cli_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:2}: PASS  {name} [{secs:.1}s] {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:2}: FAIL  {name} [{secs:.1}s] {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
