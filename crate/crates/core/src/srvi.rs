//! Soft-robust value iteration with a linear value function `v = Phi w`.
//!
//! Each iteration simulates episodes under the mean model while acting with
//! the robust decision rule at the current weights, computes robust Bellman
//! targets at the visited states and refits the weights by regularized
//! least squares on the visitation averages.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domains;
use crate::error::{argument, Error, Result};
use crate::linalg::Lu;
use crate::mdp::{Policy, TabularMdp};
use crate::posterior::ModelEnsemble;
use crate::rng::{self, derive_seed, stream_rng};
use crate::risk::SoftRobustParams;
use crate::robust::{decisions_to_policy, BellmanResult, Decision, RectangularMode, RobustProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Poly2,
}

/// Precomputed feature vector of every state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: FeatureKind,
    dimension: usize,
    rows: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn one_hot(num_states: usize) -> Self {
        let rows = (0..num_states)
            .map(|s| {
                let mut e = vec![0.0; num_states];
                e[s] = 1.0;
                e
            })
            .collect();
        FeatureMap { kind: FeatureKind::OneHot, dimension: num_states, rows }
    }

    /// Bias, the declared features and all their pairwise products.
    pub fn poly2(declared: &[Vec<f64>]) -> Result<Self> {
        let d = declared.first().map(|x| x.len()).ok_or_else(|| argument("no states to encode"))?;
        if declared.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
            return Err(argument("declared state features must be finite and of equal length"));
        }
        let rows: Vec<Vec<f64>> = declared
            .iter()
            .map(|x| {
                let mut phi = Vec::with_capacity(1 + d + d * (d + 1) / 2);
                phi.push(1.0);
                phi.extend_from_slice(x);
                for i in 0..d {
                    for j in i..d {
                        phi.push(x[i] * x[j]);
                    }
                }
                phi
            })
            .collect();
        Ok(FeatureMap { kind: FeatureKind::Poly2, dimension: rows[0].len(), rows })
    }

    /// Quadratic features of the normalized state index.
    pub fn poly2_index(num_states: usize) -> Self {
        let declared: Vec<Vec<f64>> = (0..num_states).map(|s| domains::index_feature(s, num_states)).collect();
        Self::poly2(&declared).expect("index features are finite")
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }
    pub fn phi(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn value(&self, s: usize, w: &[f64]) -> f64 {
        self.rows[s].iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn values(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows.len()).map(|s| self.value(s, w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrviConfig {
    pub episodes_per_iter: usize,
    pub episode_length: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub ridge: f64,
    pub seed: u64,
    /// Use every state once per iteration instead of simulated episodes.
    pub full_coverage: bool,
}

impl Default for SrviConfig {
    fn default() -> Self {
        SrviConfig {
            episodes_per_iter: 30,
            episode_length: 100,
            max_iters: 150,
            tol: 1e-4,
            ridge: 1e-8,
            seed: 0,
            full_coverage: false,
        }
    }
}

impl SrviConfig {
    fn validate(&self) -> Result<()> {
        if self.episodes_per_iter == 0 || self.episode_length == 0 || self.max_iters == 0 {
            return Err(argument("episode counts, lengths and iteration limits must be positive"));
        }
        if !(self.tol > 0.0) || !(self.ridge >= 0.0) {
            return Err(argument("tolerance must be positive and ridge nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrviSolution {
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Largest change of the fitted value over the states visited in the
    /// last iteration.
    pub final_residual: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl SrviSolution {
    /// Decision rule of every state at `v = Phi w`.
    pub fn policy(
        &self,
        features: &FeatureMap,
        mdp: &TabularMdp,
        ensemble: &ModelEnsemble,
        params: SoftRobustParams,
        mode: RectangularMode,
    ) -> Result<Policy> {
        let problem = RobustProblem::new(mdp, ensemble, params)?;
        let v = features.values(&self.weights);
        let results = (0..mdp.num_states()).map(|s| problem.backup(mode, &v, s)).collect::<Result<Vec<_>>>()?;
        Ok(decisions_to_policy(&results, mdp.num_actions(), mode))
    }
}

/// `w = (G + ridge I)^-1 g` with `G = mean phi phi^T`, `g = mean phi sigma`.
/// Returns the weights and the root-mean-square fit residual.
pub fn projected_update(features: &[&[f64]], targets: &[f64], ridge: f64) -> Result<(Vec<f64>, f64)> {
    let m = features.len();
    if m == 0 || targets.len() != m {
        return Err(argument("need one target per visited state and at least one visit"));
    }
    let l = features[0].len();
    let mut gram = vec![0.0; l * l];
    let mut moment = vec![0.0; l];
    for (phi, &t) in features.iter().zip(targets) {
        for i in 0..l {
            if phi[i] == 0.0 {
                continue;
            }
            moment[i] += phi[i] * t;
            for j in 0..l {
                gram[i * l + j] += phi[i] * phi[j];
            }
        }
    }
    let scale = 1.0 / m as f64;
    gram.iter_mut().for_each(|x| *x *= scale);
    moment.iter_mut().for_each(|x| *x *= scale);
    for i in 0..l {
        gram[i * l + i] += ridge;
    }
    let w = Lu::factor(gram, l)
        .map_err(|_| {
            Error::Numeric(format!("feature Gram matrix ({l}x{l}, {m} visits) is rank deficient; increase ridge"))
        })?
        .solve(&moment);
    let sq: f64 = features
        .iter()
        .zip(targets)
        .map(|(phi, t)| {
            let fit: f64 = phi.iter().zip(&w).map(|(a, b)| a * b).sum();
            (fit - t).powi(2)
        })
        .sum();
    Ok((w, (sq * scale).sqrt()))
}

/// Robust Bellman backups at the given states, memoized per state.
pub fn bellman_targets(
    problem: &RobustProblem,
    mode: RectangularMode,
    v: &[f64],
    states: &[usize],
    cache: &mut HashMap<usize, BellmanResult>,
) -> Result<Vec<f64>> {
    states
        .iter()
        .map(|&s| {
            if let Some(r) = cache.get(&s) {
                return Ok(r.value);
            }
            let r = problem.backup(mode, v, s)?;
            let value = r.value;
            cache.insert(s, r);
            Ok(value)
        })
        .collect()
}

pub fn srvi_solve(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    features: &FeatureMap,
    config: &SrviConfig,
    mode: RectangularMode,
) -> Result<SrviSolution> {
    config.validate()?;
    if features.num_states() != mdp.num_states() {
        return Err(argument("feature map does not cover the MDP states"));
    }
    let problem = RobustProblem::new(mdp, ensemble, params)?;
    let mean = ensemble.mean_model()?;
    let na = mdp.num_actions();
    let base = derive_seed(config.seed, 0x7372_7669);
    let mut w = vec![0.0; features.dimension()];
    let mut residuals = Vec::new();
    for k in 0..config.max_iters {
        let v = features.values(&w);
        let mut cache: HashMap<usize, BellmanResult> = HashMap::new();
        let visited: Vec<usize> = if config.full_coverage {
            (0..mdp.num_states()).collect()
        } else {
            let mut states = Vec::with_capacity(config.episodes_per_iter * config.episode_length);
            for e in 0..config.episodes_per_iter {
                let mut rng = stream_rng(base, (k * config.episodes_per_iter + e) as u64);
                let mut s = rng::categorical(&mut rng, mdp.initial_dist());
                for _ in 0..config.episode_length {
                    states.push(s);
                    if !cache.contains_key(&s) {
                        cache.insert(s, problem.backup(mode, &v, s)?);
                    }
                    let a = match &cache[&s].decision {
                        Decision::Action(a) => *a,
                        Decision::Randomized(d) => rng::categorical(&mut rng, d),
                    };
                    debug_assert!(a < na);
                    s = rng::categorical(&mut rng, mean.row(s, a));
                }
            }
            states
        };
        let targets = bellman_targets(&problem, mode, &v, &visited, &mut cache)?;
        let phis: Vec<&[f64]> = visited.iter().map(|&s| features.phi(s)).collect();
        let (next, _) = projected_update(&phis, &targets, config.ridge)?;
        let res = distinct(&visited)
            .into_iter()
            .map(|s| (features.value(s, &next) - v[s]).abs())
            .fold(0.0, f64::max);
        residuals.push(res);
        w = next;
        if res <= config.tol {
            return Ok(SrviSolution { weights: w, iterations: k + 1, final_residual: res, residuals, converged: true });
        }
    }
    let final_residual = residuals.last().copied().unwrap_or(f64::NAN);
    Ok(SrviSolution { weights: w, iterations: config.max_iters, final_residual, residuals, converged: false })
}

fn distinct(states: &[usize]) -> Vec<usize> {
    let mut s = states.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Robust decision at one state for `v = Phi w`.
pub fn extract_decision(
    w: &[f64],
    features: &FeatureMap,
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    mode: RectangularMode,
    state: usize,
) -> Result<Decision> {
    if state >= mdp.num_states() || w.len() != features.dimension() {
        return Err(argument("state or weight vector out of range"));
    }
    let problem = RobustProblem::new(mdp, ensemble, params)?;
    Ok(problem.backup(mode, &features.values(w), state)?.decision)
}
