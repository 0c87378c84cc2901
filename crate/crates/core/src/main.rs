use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use srmdp::bounds;
use srmdp::error::{Error, Result};
use srmdp::experiments::{self, Algorithm, EvalSet, ExperimentConfig};
use srmdp::io::{self, EnsembleFile, MdpFile, PolicyFile};
use srmdp::milp;
use srmdp::robust::{self, RectangularMode};
use srmdp::srvi::FeatureKind;

#[derive(Parser)]
#[command(name = "srmdp", version, about = "Soft-robust policies for batch RL on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a domain and evaluate the policy on the test (or training) ensemble.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write the policy as JSON (single lambda only).
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// Write fitted SRVI feature weights as JSON.
        #[arg(long)]
        weights_out: Option<PathBuf>,
        /// Write the mixed-integer program in LP text form.
        #[arg(long)]
        lp_out: Option<PathBuf>,
    },
    /// Evaluate a policy file without solving.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Post-decision surprise of static, mean-model and empirical planning.
    Surprise {
        #[command(flatten)]
        common: Common,
        /// Write per-method mean surprise and standard error here (default: stderr).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Mean and CVaR over a lambda grid.
    Tradeoff {
        #[command(flatten)]
        common: Common,
    },
    /// Write a domain's MDP and true model as JSON.
    DomainExport {
        #[command(flatten)]
        common: Common,
        /// Also write the domain's batch as CSV.
        #[arg(long)]
        batch_out: Option<PathBuf>,
    },
    /// Write the posterior ensemble as JSON.
    Posterior {
        #[command(flatten)]
        common: Common,
    },
    /// Bound checks on a small instance (at most 3 training models).
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "lambda_grid")]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Training ensemble size.
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    test_models: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = parse_features)]
    features: Option<FeatureKind>,
    #[arg(long, value_enum)]
    eval_on: Option<EvalSet>,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Report wall-clock time in runtime_ms (output is then not reproducible).
    #[arg(long)]
    record_timing: bool,
    /// MDP JSON file used instead of a named domain.
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Batch CSV (s,a,sp) for the posterior of an MDP file.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Ensemble JSON used as the training and test ensemble of an MDP file.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_features(s: &str) -> std::result::Result<FeatureKind, String> {
    match s {
        "one_hot" => Ok(FeatureKind::OneHot),
        "poly2" => Ok(FeatureKind::Poly2),
        _ => Err(format!("unknown feature kind {s:?} (one_hot, poly2)")),
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => io::read_json::<ExperimentConfig>(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $flag:expr),* $(,)?) => { $(if let Some(v) = $flag.clone() { c.$field = v; })* };
        }
        set!(domain <- self.domain, algorithm <- self.algorithm, alpha <- self.alpha, test_models <- self.test_models,
             seed <- self.seed, tol <- self.tol, max_iters <- self.max_iters, eval_on <- self.eval_on,
             gap_tol <- self.gap_tol, node_limit <- self.node_limit);
        if let Some(l) = self.lambda {
            c.lambda_grid = vec![l];
        }
        if let Some(g) = &self.lambda_grid {
            c.lambda_grid = g.clone();
        }
        if self.models.is_some() {
            c.n_models = self.models;
        }
        if self.trials.is_some() {
            c.trials = self.trials;
        }
        if self.batch_size.is_some() {
            c.batch_size = self.batch_size;
        }
        if self.features.is_some() {
            c.features = self.features;
        }
        if self.record_timing {
            c.record_timing = true;
        }
        for (dst, src) in [(&mut c.mdp, &self.mdp), (&mut c.batch, &self.batch), (&mut c.ensemble, &self.ensemble), (&mut c.out, &self.out)] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        c.srvi.seed = c.seed;
        c.validate()?;
        Ok(c)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json_to<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let threads = experiments::threads_from_env()?;
    match cli.command {
        Command::Solve { common, policy_out, weights_out, lp_out } => {
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            if let Some(p) = lp_out {
                let model = milp::build_model(&sc.mdp, &sc.train, cfg.params(cfg.lambda_grid[0])?)?;
                std::fs::write(p, model.to_lp_text())?;
            }
            let results = experiments::cmd_solve(&sc, &cfg)?;
            if results.iter().any(|(_, s)| s.incomplete) {
                eprintln!("warning: branch and bound hit the node limit; the policy may be suboptimal");
            }
            if policy_out.is_some() || weights_out.is_some() {
                if results.len() != 1 {
                    return Err(Error::Argument("policy and weight output need a single lambda".into()));
                }
                let sol = &results[0].1;
                if let Some(p) = policy_out {
                    io::write_json(&p, &PolicyFile::from_policy(&sol.policy))?;
                }
                if let Some(p) = weights_out {
                    let w = sol.weights.as_ref().ok_or_else(|| Error::Argument("only srvi produces weights".into()))?;
                    io::write_json(&p, w)?;
                }
            }
            let rows: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
            experiments::write_csv(output(&cfg.out)?, &rows)
        }
        Command::Eval { common, policy } => {
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            let policy = io::load_policy(&policy)?;
            let rows = experiments::cmd_eval(&sc, &cfg, &policy)?;
            experiments::write_csv(output(&cfg.out)?, &rows)
        }
        Command::Surprise { mut common, summary } => {
            if common.domain.is_none() && common.config.is_none() {
                common.domain = Some("random".into());
            }
            if common.lambda.is_none() && common.lambda_grid.is_none() && common.config.is_none() {
                common.lambda_grid = Some(vec![0.0, 0.5]);
            }
            let cfg = common.config()?;
            let (records, stats) = experiments::cmd_surprise(&cfg, threads)?;
            experiments::write_csv(output(&cfg.out)?, &records)?;
            match summary {
                Some(p) => experiments::write_csv(File::create(p)?, &stats),
                None => experiments::write_csv(std::io::stderr().lock(), &stats),
            }
        }
        Command::Tradeoff { mut common } => {
            if common.lambda.is_none() && common.lambda_grid.is_none() && common.config.is_none() {
                common.lambda_grid = Some(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
            }
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            let rows = experiments::cmd_tradeoff(&sc, &cfg, threads)?;
            experiments::write_csv(output(&cfg.out)?, &rows)
        }
        Command::DomainExport { common, batch_out } => {
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            let model = match &sc.truth {
                Some(m) => m.clone(),
                None => sc.train.mean_model()?,
            };
            if let Some(p) = batch_out {
                let batch = sc.batch.as_ref().ok_or_else(|| Error::Argument("domain has no transition batch".into()))?;
                io::write_batch(File::create(p)?, batch)?;
            }
            write_json_to(&cfg.out, &MdpFile::from_parts(&sc.mdp, &model))
        }
        Command::Posterior { common } => {
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            write_json_to(&cfg.out, &EnsembleFile::from_ensemble(sc.ensemble(cfg.eval_on)))
        }
        Command::Bounds { common, grid } => {
            let cfg = common.config()?;
            let sc = experiments::build_scenario(&cfg)?;
            let params = cfg.params(cfg.lambda_grid[0])?;
            let mut report = bounds::check_rectangular_gap(&sc.mdp, &sc.train, params, grid)?;
            let robust = robust::robust_value_iteration(&sc.mdp, &sc.train, params, RectangularMode::SRect, cfg.tol, cfg.max_iters)?;
            report.checks.push(bounds::check_static_dynamic_gap(&sc.mdp, &sc.train, &robust.policy, params, grid)?);
            write_json_to(&cfg.out, &report)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) => "argument",
        Error::Input(_) | Error::Json(_) | Error::Csv(_) => "input",
        Error::Io(_) => "io",
        Error::Numeric(_) => "numeric",
        Error::Convergence { .. } => "convergence",
        Error::Unsupported(_) => "unsupported",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = serde_json::json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{diag}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
