//! Domain recipes, solver dispatch and the batch experiments behind the
//! command-line front-end.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::domains::{self, InventorySpec};
use crate::error::{argument, Error, Result};
use crate::io::{self, WeightsFile};
use crate::mdp::{self, return_distribution, value_iteration, Policy, TabularMdp, TransitionModel};
use crate::milp::{self, BRUTE_FORCE_LIMIT};
use crate::posterior::{self, Fallback, ModelEnsemble, TransitionBatch};
use crate::risk::{self, DiscreteDist, SoftRobustParams};
use crate::rng::{self, derive_seed, stream_rng};
use crate::robust::{self, RectangularMode};
use crate::srvi::{self, FeatureKind, FeatureMap, SrviConfig};

/// Offset between the seeds of the training and test ensembles.
pub const TEST_SEED_OFFSET: u64 = 1_000_000;

/// Largest `S * A * N` for which the tradeoff experiment runs the
/// mixed-integer program when enumeration is out of reach.
pub const MILP_MAX_SIZE: usize = 1000;

const DIRICHLET_PRIOR: f64 = 1.0;
const DEMAND_PRIOR_SHAPE: f64 = 4.0;
const DEMAND_PRIOR_SCALE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Value iteration on the true model.
    #[value(name = "vi")]
    Vi,
    /// Value iteration on the ensemble's mean model.
    #[value(name = "mean_vi")]
    MeanVi,
    /// Value iteration on the maximum-likelihood model of the batch.
    #[value(name = "empirical_vi")]
    EmpiricalVi,
    #[value(name = "rvi_s")]
    RviS,
    #[value(name = "rvi_sa")]
    RviSa,
    #[value(name = "srvi")]
    Srvi,
    #[value(name = "milp")]
    Milp,
    #[value(name = "brute")]
    Brute,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vi => "vi",
            Algorithm::MeanVi => "mean_vi",
            Algorithm::EmpiricalVi => "empirical_vi",
            Algorithm::RviS => "rvi_s",
            Algorithm::RviSa => "rvi_sa",
            Algorithm::Srvi => "srvi",
            Algorithm::Milp => "milp",
            Algorithm::Brute => "brute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSet {
    Train,
    #[default]
    Test,
}

/// Settings shared by all commands; unset options take per-command or
/// per-domain defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: String,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub lambda_grid: Vec<f64>,
    pub n_models: Option<usize>,
    pub test_models: usize,
    pub seed: u64,
    pub trials: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub batch_size: Option<usize>,
    pub features: Option<FeatureKind>,
    pub srvi: SrviConfig,
    pub gap_tol: f64,
    pub node_limit: usize,
    pub eval_on: EvalSet,
    /// Fill `runtime_ms`; off by default so that output is reproducible.
    pub record_timing: bool,
    pub out: Option<PathBuf>,
    pub mdp: Option<PathBuf>,
    pub batch: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: "riverswim".into(),
            algorithm: Algorithm::RviS,
            alpha: 0.8,
            lambda_grid: vec![0.5],
            n_models: None,
            test_models: 100,
            seed: 0,
            trials: None,
            tol: 1e-6,
            max_iters: 1_000_000,
            batch_size: None,
            features: None,
            srvi: SrviConfig::default(),
            gap_tol: milp::DEFAULT_GAP_TOL,
            node_limit: milp::DEFAULT_NODE_LIMIT,
            eval_on: EvalSet::Test,
            record_timing: false,
            out: None,
            mdp: None,
            batch: None,
            ensemble: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(argument("lambda grid must be a nonempty subset of [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(argument("alpha must lie in [0, 1]"));
        }
        if self.trials == Some(0) || self.n_models == Some(0) || self.test_models == 0 {
            return Err(argument("trials and ensemble sizes must be positive"));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(argument("tolerance and iteration limit must be positive"));
        }
        Ok(())
    }

    pub fn params(&self, lambda: f64) -> Result<SoftRobustParams> {
        SoftRobustParams::new(self.alpha, lambda)
    }

    fn train_models(&self) -> usize {
        self.n_models.unwrap_or(100)
    }
}

/// One evaluated policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub domain: String,
    pub algorithm: String,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    pub mean_return: f64,
    pub cvar_return: f64,
    pub var_return: f64,
    pub soft_robust_return: f64,
    pub runtime_ms: u64,
    pub iterations: usize,
}

/// A domain instance with its data and posterior ensembles.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mdp: TabularMdp,
    pub truth: Option<TransitionModel>,
    pub batch: Option<TransitionBatch>,
    /// Maximum-likelihood model of the data.
    pub empirical: Option<TransitionModel>,
    pub train: ModelEnsemble,
    pub test: ModelEnsemble,
    pub default_features: FeatureKind,
}

impl Scenario {
    pub fn ensemble(&self, set: EvalSet) -> &ModelEnsemble {
        match set {
            EvalSet::Train => &self.train,
            EvalSet::Test => &self.test,
        }
    }

    pub fn features(&self, kind: Option<FeatureKind>) -> FeatureMap {
        match kind.unwrap_or(self.default_features) {
            FeatureKind::OneHot => FeatureMap::one_hot(self.mdp.num_states()),
            FeatureKind::Poly2 => FeatureMap::poly2_index(self.mdp.num_states()),
        }
    }
}

/// The reduced inventory used where exact solvers must stay tractable.
pub fn small_inventory_spec() -> InventorySpec {
    InventorySpec { capacity: 6, max_order: 4, demand_max: 8, ..InventorySpec::default() }
}

pub const DOMAINS: &[&str] = &["riverswim", "inventory", "inventory_small", "random", "toy"];

fn dirichlet_scenario(
    name: &str,
    mdp: TabularMdp,
    truth: TransitionModel,
    cfg: &ExperimentConfig,
    batch_size: usize,
    episode_length: usize,
    features: FeatureKind,
) -> Result<Scenario> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let batch = domains::generate_batch(
        &truth,
        &Policy::uniform(ns, na),
        batch_size,
        mdp.initial_dist(),
        episode_length,
        derive_seed(cfg.seed, 1),
    )?;
    let post = posterior::dirichlet_from_batch(&batch, DIRICHLET_PRIOR)?;
    let train = posterior::sample_ensemble(&post, cfg.train_models(), derive_seed(cfg.seed, 2))?;
    let test = posterior::sample_ensemble(&post, cfg.test_models, derive_seed(cfg.seed + TEST_SEED_OFFSET, 2))?;
    let empirical = posterior::empirical_model(&batch, Fallback::Uniform)?;
    Ok(Scenario {
        name: name.into(),
        mdp,
        truth: Some(truth),
        batch: Some(batch),
        empirical: Some(empirical),
        train,
        test,
        default_features: features,
    })
}

fn inventory_scenario(name: &str, spec: &InventorySpec, true_rate: f64, cfg: &ExperimentConfig) -> Result<Scenario> {
    let (mdp, truth) = domains::inventory(spec, true_rate)?;
    let mut rng = stream_rng(derive_seed(cfg.seed, 1), 0);
    let demands: Vec<u64> = (0..cfg.batch_size.unwrap_or(50)).map(|_| rng::poisson(&mut rng, true_rate)).collect();
    let post = posterior::gamma_poisson_from_demands(&demands, DEMAND_PRIOR_SHAPE, DEMAND_PRIOR_SCALE)?;
    let train = posterior::sample_demand_ensemble(&post, cfg.train_models(), derive_seed(cfg.seed, 2), spec)?;
    let test = posterior::sample_demand_ensemble(&post, cfg.test_models, derive_seed(cfg.seed + TEST_SEED_OFFSET, 2), spec)?;
    let observed = demands.iter().sum::<u64>() as f64 / demands.len().max(1) as f64;
    let empirical = domains::inventory_transitions(spec, observed.max(1e-9))?;
    Ok(Scenario {
        name: name.into(),
        mdp,
        truth: Some(truth),
        batch: None,
        empirical: Some(empirical),
        train,
        test,
        default_features: FeatureKind::Poly2,
    })
}

fn file_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    let path = cfg.mdp.as_ref().expect("checked by caller");
    let (mdp, model) = io::load_mdp(path)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let batch = match &cfg.batch {
        Some(p) => Some(io::read_batch(std::fs::File::open(p)?, ns, na)?),
        None => None,
    };
    let (train, test) = match (&cfg.ensemble, &batch) {
        (Some(p), _) => {
            let e = io::load_ensemble(p)?;
            if e.num_states() != ns || e.num_actions() != na {
                return Err(Error::Input("ensemble dimensions do not match the MDP".into()));
            }
            (e.clone(), e)
        }
        (None, Some(b)) => {
            let post = posterior::dirichlet_from_batch(b, DIRICHLET_PRIOR)?;
            (
                posterior::sample_ensemble(&post, cfg.train_models(), derive_seed(cfg.seed, 2))?,
                posterior::sample_ensemble(&post, cfg.test_models, derive_seed(cfg.seed + TEST_SEED_OFFSET, 2))?,
            )
        }
        (None, None) => (ModelEnsemble::single(model.clone()), ModelEnsemble::single(model.clone())),
    };
    let empirical = batch.as_ref().map(|b| posterior::empirical_model(b, Fallback::Uniform)).transpose()?;
    Ok(Scenario {
        name: path.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned()),
        mdp,
        truth: Some(model),
        batch,
        empirical,
        train,
        test,
        default_features: FeatureKind::OneHot,
    })
}

/// Builds the domain named in the configuration, or the MDP file given by
/// `mdp` (with an optional batch CSV or ensemble JSON).
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    if cfg.mdp.is_some() {
        return file_scenario(cfg);
    }
    match cfg.domain.as_str() {
        "riverswim" => {
            let (mdp, truth) = domains::riverswim();
            let n = cfg.batch_size.unwrap_or(2000);
            dirichlet_scenario("riverswim", mdp, truth, cfg, n, 100, FeatureKind::Poly2)
        }
        "inventory" => inventory_scenario("inventory", &InventorySpec::default(), 10.0, cfg),
        "inventory_small" => inventory_scenario("inventory_small", &small_inventory_spec(), 2.0, cfg),
        "random" | "toy" => {
            let (ns, na) = if cfg.domain == "random" { (5, 3) } else { (3, 2) };
            let (mdp, truth) = domains::random_dirichlet_mdp(ns, na, cfg.seed)?;
            let n = cfg.batch_size.unwrap_or(100);
            dirichlet_scenario(&cfg.domain, mdp, truth, cfg, n, 20, FeatureKind::OneHot)
        }
        other => Err(argument(format!("unknown domain {other:?}; expected one of {}", DOMAINS.join(", ")))),
    }
}

/// Policy returned by a solver with its iteration (or node) count.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub policy: Policy,
    pub iterations: usize,
    pub weights: Option<WeightsFile>,
    /// Set when branch and bound stopped at the node limit.
    pub incomplete: bool,
}

impl SolveOutput {
    fn plain(policy: Policy, iterations: usize) -> Self {
        SolveOutput { policy, iterations, weights: None, incomplete: false }
    }
}

pub fn solve(sc: &Scenario, cfg: &ExperimentConfig, algorithm: Algorithm, params: SoftRobustParams) -> Result<SolveOutput> {
    let mdp = &sc.mdp;
    let vi = |model: &TransitionModel| -> Result<SolveOutput> {
        let out = value_iteration(mdp, model, cfg.tol, cfg.max_iters)?;
        Ok(SolveOutput::plain(out.policy, out.iterations))
    };
    match algorithm {
        Algorithm::Vi => vi(sc.truth.as_ref().ok_or_else(|| argument("domain has no true model"))?),
        Algorithm::MeanVi => vi(&sc.train.mean_model()?),
        Algorithm::EmpiricalVi => vi(sc.empirical.as_ref().ok_or_else(|| argument("domain has no batch data"))?),
        Algorithm::RviS | Algorithm::RviSa => {
            let mode = if algorithm == Algorithm::RviS { RectangularMode::SRect } else { RectangularMode::SaRect };
            let out = robust::robust_value_iteration(mdp, &sc.train, params, mode, cfg.tol, cfg.max_iters)?;
            Ok(SolveOutput::plain(out.policy, out.iterations))
        }
        Algorithm::Srvi => {
            let features = sc.features(cfg.features);
            let sol = srvi::srvi_solve(mdp, &sc.train, params, &features, &cfg.srvi, RectangularMode::SRect)?;
            let policy = sol.policy(&features, mdp, &sc.train, params, RectangularMode::SRect)?;
            Ok(SolveOutput {
                policy,
                iterations: sol.iterations,
                weights: Some(WeightsFile::from_solution(features.kind(), &sol)),
                incomplete: false,
            })
        }
        Algorithm::Milp => {
            let model = milp::build_model(mdp, &sc.train, params)?;
            let sol = milp::solve_branch_and_bound(&model, cfg.gap_tol, cfg.node_limit)?;
            Ok(SolveOutput { policy: sol.policy, iterations: sol.nodes_explored, weights: None, incomplete: !sol.complete })
        }
        Algorithm::Brute => {
            let sol = milp::brute_force_deterministic(mdp, &sc.train, params)?;
            Ok(SolveOutput::plain(sol.policy, sol.nodes_explored))
        }
    }
}

/// Mean, CVaR, VaR and soft-robust return over an ensemble.
pub fn evaluate(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    policy: &Policy,
    params: SoftRobustParams,
) -> Result<(f64, f64, f64, f64)> {
    let returns = return_distribution(mdp, ensemble, policy)?;
    let dist = DiscreteDist::new(&returns, ensemble.weights())?;
    let mean = dist.mean();
    let cvar = risk::cvar_primal(&dist, params.alpha)?;
    let var = risk::value_at_risk(&dist, params.alpha)?;
    let soft = (1.0 - params.lambda) * mean + params.lambda * cvar;
    Ok((mean, cvar, var, soft))
}

#[allow(clippy::too_many_arguments)]
fn make_row(
    sc: &Scenario,
    cfg: &ExperimentConfig,
    algorithm: &str,
    params: SoftRobustParams,
    policy: &Policy,
    set: EvalSet,
    iterations: usize,
    started: Instant,
) -> Result<ResultRow> {
    let (mean_return, cvar_return, var_return, soft_robust_return) = evaluate(&sc.mdp, sc.ensemble(set), policy, params)?;
    Ok(ResultRow {
        domain: sc.name.clone(),
        algorithm: algorithm.into(),
        alpha: params.alpha,
        lambda: params.lambda,
        seed: cfg.seed,
        mean_return,
        cvar_return,
        var_return,
        soft_robust_return,
        runtime_ms: if cfg.record_timing { started.elapsed().as_millis() as u64 } else { 0 },
        iterations,
    })
}

/// Solves once per lambda in the grid and evaluates each policy.
pub fn cmd_solve(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Vec<(ResultRow, SolveOutput)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.lambda_grid.len());
    for &lambda in &cfg.lambda_grid {
        let params = cfg.params(lambda)?;
        let started = Instant::now();
        let sol = solve(sc, cfg, cfg.algorithm, params)?;
        let row = make_row(sc, cfg, cfg.algorithm.name(), params, &sol.policy, cfg.eval_on, sol.iterations, started)?;
        out.push((row, sol));
    }
    Ok(out)
}

/// Evaluates a fixed policy for every lambda in the grid.
pub fn cmd_eval(sc: &Scenario, cfg: &ExperimentConfig, policy: &Policy) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    policy.validate(sc.mdp.num_states(), sc.mdp.num_actions()).map_err(|e| match e {
        Error::Argument(m) => Error::Input(m),
        other => other,
    })?;
    cfg.lambda_grid
        .iter()
        .map(|&l| make_row(sc, cfg, "eval", cfg.params(l)?, policy, cfg.eval_on, 0, Instant::now()))
        .collect()
}

/// Exact solver used by the tradeoff experiment for this instance, if any.
pub fn exact_algorithm(sc: &Scenario) -> Option<Algorithm> {
    let (ns, na, n) = (sc.mdp.num_states(), sc.mdp.num_actions(), sc.train.len());
    let count = (na as u64).checked_pow(ns as u32);
    if count.is_some_and(|c| c <= BRUTE_FORCE_LIMIT) {
        Some(Algorithm::Brute)
    } else if ns * na * n <= MILP_MAX_SIZE {
        Some(Algorithm::Milp)
    } else {
        None
    }
}

/// SRVI and, where tractable, an exact solver at every lambda of the grid.
/// Rows are ordered by lambda, then algorithm.
pub fn cmd_tradeoff(sc: &Scenario, cfg: &ExperimentConfig, threads: usize) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut algorithms = vec![Algorithm::Srvi];
    algorithms.extend(exact_algorithm(sc));
    algorithms.sort();
    let jobs: Vec<(f64, Algorithm)> =
        cfg.lambda_grid.iter().flat_map(|&l| algorithms.iter().map(move |&a| (l, a))).collect();
    if algorithms.contains(&Algorithm::Brute) && threads <= 1 {
        // one enumeration pass serves the whole grid
        let params = cfg.lambda_grid.iter().map(|&l| cfg.params(l)).collect::<Result<Vec<_>>>()?;
        let started = Instant::now();
        let exact = milp::brute_force_multi(&sc.mdp, &sc.train, &params)?;
        let mut rows = Vec::with_capacity(jobs.len());
        for (i, &lambda) in cfg.lambda_grid.iter().enumerate() {
            for &alg in &algorithms {
                let params = cfg.params(lambda)?;
                let row = if alg == Algorithm::Brute {
                    make_row(sc, cfg, alg.name(), params, &exact[i].policy, cfg.eval_on, exact[i].nodes_explored, started)?
                } else {
                    let t = Instant::now();
                    let sol = solve(sc, cfg, alg, params)?;
                    make_row(sc, cfg, alg.name(), params, &sol.policy, cfg.eval_on, sol.iterations, t)?
                };
                rows.push(row);
            }
        }
        return Ok(rows);
    }
    parallel_map(jobs.len(), threads, |j| {
        let (lambda, alg) = jobs[j];
        let params = cfg.params(lambda)?;
        let t = Instant::now();
        let sol = solve(sc, cfg, alg, params)?;
        make_row(sc, cfg, alg.name(), params, &sol.policy, cfg.eval_on, sol.iterations, t)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseRecord {
    pub trial: usize,
    pub method: String,
    pub estimated_return: f64,
    pub true_return: f64,
    pub surprise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseSummary {
    pub method: String,
    pub trials: usize,
    pub mean_surprise: f64,
    pub std_error: f64,
}

pub fn static_method_name(lambda: f64) -> String {
    format!("static_lambda_{lambda}")
}

/// Per trial: draws a true model from the uniform Dirichlet prior, collects
/// a batch under the uniform policy, and compares the estimated return of
/// each method's policy with its return under the true model. Static methods
/// use the soft-robust objective at each lambda of the grid (exact, by
/// enumeration); `mean_model` and `empirical` plan on a single model.
pub fn cmd_surprise(cfg: &ExperimentConfig, threads: usize) -> Result<(Vec<SurpriseRecord>, Vec<SurpriseSummary>)> {
    cfg.validate()?;
    let trials = cfg.trials.unwrap_or(200);
    let n_models = cfg.n_models.unwrap_or(1000);
    let (ns, na) = match cfg.domain.as_str() {
        "random" => (5, 3),
        "toy" => (3, 2),
        other => return Err(argument(format!("surprise experiment runs on random or toy MDPs, not {other:?}"))),
    };
    let base = derive_seed(cfg.seed, 0x7375_7270);
    let per_trial = parallel_map(trials, threads, |t| -> Result<Vec<SurpriseRecord>> {
        let seed = derive_seed(base, t as u64);
        let (mdp, truth) = domains::random_dirichlet_mdp(ns, na, seed)?;
        let batch = domains::generate_batch(
            &truth,
            &Policy::uniform(ns, na),
            cfg.batch_size.unwrap_or(100),
            mdp.initial_dist(),
            20,
            derive_seed(seed, 1),
        )?;
        let post = posterior::dirichlet_from_batch(&batch, DIRICHLET_PRIOR)?;
        let ensemble = posterior::sample_ensemble(&post, n_models, derive_seed(seed, 2))?;
        let mut records = Vec::new();
        let mut push = |method: String, policy: &Policy, estimate: f64| -> Result<()> {
            let true_return = mdp::expected_return(&mdp, &truth, policy)?;
            records.push(SurpriseRecord { trial: t, method, estimated_return: estimate, true_return, surprise: true_return - estimate });
            Ok(())
        };
        let params = cfg.lambda_grid.iter().map(|&l| cfg.params(l)).collect::<Result<Vec<_>>>()?;
        for (sol, p) in milp::brute_force_multi(&mdp, &ensemble, &params)?.iter().zip(&params) {
            push(static_method_name(p.lambda), &sol.policy, sol.objective)?;
        }
        for (name, model) in [("mean_model", ensemble.mean_model()?), ("empirical", posterior::empirical_model(&batch, Fallback::Uniform)?)] {
            let out = value_iteration(&mdp, &model, cfg.tol, cfg.max_iters)?;
            let estimate = mdp::expected_return(&mdp, &model, &out.policy)?;
            push(name.into(), &out.policy, estimate)?;
        }
        Ok(records)
    })?;
    let records: Vec<SurpriseRecord> = per_trial.into_iter().flatten().collect();
    let mut methods: Vec<String> = Vec::new();
    for r in &records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let summary = methods
        .into_iter()
        .map(|method| {
            let xs: Vec<f64> = records.iter().filter(|r| r.method == method).map(|r| r.surprise).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            SurpriseSummary { method, trials: xs.len(), mean_surprise: mean, std_error: (var / n).sqrt() }
        })
        .collect();
    Ok((records, summary))
}

/// Worker count from `SRMDP_THREADS` (default 1).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("SRMDP_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| argument(format!("SRMDP_THREADS must be a positive integer, got {v:?}"))),
    }
}

/// `(0..n).map(f)` on up to `threads` workers; results keep index order.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every index is processed")).collect()
}

pub fn write_csv<W: std::io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
