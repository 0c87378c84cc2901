//! Occupancy-distance and rectangularization constants, and numerical
//! checks of the bounds relating the static, dynamic and rectangular
//! objectives on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::mdp::{evaluate_policy, occupancy_frequency, Policy, TabularMdp, TransitionModel, ValueFunction};
use crate::milp::brute_force_deterministic;
use crate::posterior::ModelEnsemble;
use crate::risk::{self, rho_d_grid, soft_robust_box, xi_minimize, GridEstimate, SoftRobustParams};
use crate::rng::{derive_seed, dirichlet, stream_rng};
use crate::robust::{robust_value_iteration, RectangularMode};

/// Deterministic policies enumerated when maximizing the dynamic objective.
pub const DYNAMIC_ENUMERATION_LIMIT: usize = 4096;

/// Randomized policies added to the deterministic ones when maximizing
/// `epsilon1` over all policies.
pub const RANDOM_POLICY_SAMPLES: usize = 100;

const NUMERIC_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Allowance for grid and solver error added to `rhs`.
    pub margin: f64,
    /// `rhs + margin - lhs`.
    pub slack: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, rhs: f64, margin: f64) -> Self {
        let slack = rhs + margin - lhs;
        BoundCheck { name: name.to_string(), lhs, rhs, margin, slack, pass: slack >= 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon1: f64,
    /// Which policies `epsilon1` was maximized over.
    pub epsilon1_scope: String,
    pub epsilon2: Option<f64>,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Largest L1 distance between the occupancy frequencies of two models.
pub fn epsilon1(mdp: &TabularMdp, ensemble: &ModelEnsemble, policy: &Policy) -> Result<f64> {
    let occ = ensemble
        .models()
        .iter()
        .map(|m| occupancy_frequency(mdp, m, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(max_pairwise_l1(&occ))
}

fn max_pairwise_l1(occ: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..occ.len() {
        for j in i + 1..occ.len() {
            let d: f64 = occ[i].iter().zip(&occ[j]).map(|(a, b)| (a - b).abs()).sum();
            best = best.max(d);
        }
    }
    best
}

/// `max_{s,a} min_xi [sum_w xi_w P^w(s,a)^T (r(s,a) + gamma v) - v(s)]`.
pub fn epsilon2(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    v_star: &ValueFunction,
) -> Result<f64> {
    if v_star.0.len() != mdp.num_states() {
        return Err(argument("value function has wrong length"));
    }
    let b = soft_robust_box(ensemble.weights(), params)?;
    let v = v_star.values();
    let mut best = f64::NEG_INFINITY;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let q: Vec<f64> = ensemble.models().iter().map(|m| mdp.q_value(m, s, a, v)).collect();
            let (obj, _) = xi_minimize(&q, &b)?;
            best = best.max(obj - v[s]);
        }
    }
    Ok(best)
}

/// `|rho_D - rho_S| <= gamma r_max epsilon1(pi) / (1 - gamma)`, with the
/// dynamic objective taken from the grid oracle and its error added to the
/// margin.
pub fn check_static_dynamic_gap(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    policy: &Policy,
    params: SoftRobustParams,
    grid_resolution: usize,
) -> Result<BoundCheck> {
    if ensemble.len() > 3 {
        return Err(Error::Unsupported("bound checks support at most 3 models".into()));
    }
    let grid = rho_d_grid(mdp, ensemble, policy, params, grid_resolution)?;
    let static_value = risk::rho_s(mdp, ensemble, policy, params)?;
    let g = mdp.discount();
    let rhs = g * mdp.r_max() * epsilon1(mdp, ensemble, policy)? / (1.0 - g);
    Ok(BoundCheck::new("static_dynamic_gap", (grid.value - static_value).abs(), rhs, grid.error + NUMERIC_SLACK))
}

/// Maximizer of the dynamic objective over deterministic policies.
#[derive(Debug, Clone)]
pub struct DynamicOptimum {
    pub policy: Policy,
    pub estimate: GridEstimate,
    /// Value of `policy` under the minimizing mixture.
    pub value: ValueFunction,
}

/// Enumerates deterministic policies (lowest action vector on ties) and
/// evaluates each with the grid oracle.
pub fn dynamic_optimum(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    grid_resolution: usize,
) -> Result<DynamicOptimum> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let count = na.checked_pow(ns as u32).filter(|c| *c <= DYNAMIC_ENUMERATION_LIMIT).ok_or_else(|| {
        Error::Unsupported(format!("{na}^{ns} policies exceed the dynamic enumeration limit {DYNAMIC_ENUMERATION_LIMIT}"))
    })?;
    let mut best: Option<(GridEstimate, Vec<usize>)> = None;
    for actions in (0..count).map(|code| decode(code, ns, na)) {
        let est = rho_d_grid(mdp, ensemble, &Policy::Deterministic(actions.clone()), params, grid_resolution)?;
        if best.as_ref().map_or(true, |(b, _)| est.value > b.value) {
            best = Some((est, actions));
        }
    }
    let (estimate, actions) = best.expect("at least one policy");
    let policy = Policy::Deterministic(actions);
    let mixed = TransitionModel::mixture(ensemble.models(), &estimate.xi)?;
    let value = evaluate_policy(mdp, &mixed, &policy)?;
    Ok(DynamicOptimum { policy, estimate, value })
}

/// Action vector with index `code`, state 0 most significant.
fn decode(mut code: usize, ns: usize, na: usize) -> Vec<usize> {
    let mut acts = vec![0; ns];
    for s in (0..ns).rev() {
        acts[s] = code % na;
        code /= na;
    }
    acts
}

/// `epsilon1` maximized over every deterministic policy plus
/// [`RANDOM_POLICY_SAMPLES`] seeded randomized ones.
pub fn epsilon1_over_policies(mdp: &TabularMdp, ensemble: &ModelEnsemble, seed: u64) -> Result<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let count = na
        .checked_pow(ns as u32)
        .filter(|c| *c <= DYNAMIC_ENUMERATION_LIMIT)
        .ok_or_else(|| Error::Unsupported("too many deterministic policies to maximize epsilon1".into()))?;
    let mut best = 0.0f64;
    for code in 0..count {
        best = best.max(epsilon1(mdp, ensemble, &Policy::Deterministic(decode(code, ns, na)))?);
    }
    let base = derive_seed(seed, 0x65707331);
    let ones = vec![1.0; na];
    for k in 0..RANDOM_POLICY_SAMPLES {
        let mut rng = stream_rng(base, k as u64);
        let probs: Vec<f64> = (0..ns).flat_map(|_| dirichlet(&mut rng, &ones)).collect();
        best = best.max(epsilon1(mdp, ensemble, &Policy::randomized(na, probs)?)?);
    }
    Ok(best)
}

/// Checks `rho_S(pi_S) - rho_S(pi_R) <= (2 gamma epsilon1 r_max + epsilon2) / (1 - gamma)`.
///
/// `pi_S` is the best deterministic policy (a lower witness for the
/// randomized optimum, so the checked left side never exceeds the true one),
/// `pi_R` comes from s-rectangular robust value iteration, `epsilon1` is
/// maximized over deterministic and sampled randomized policies, and
/// `epsilon2` uses the value of the grid-based dynamic maximizer.
pub fn check_rectangular_gap(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    grid_resolution: usize,
) -> Result<BoundReport> {
    if ensemble.len() > 3 {
        return Err(Error::Unsupported("bound checks support at most 3 models".into()));
    }
    let witness = brute_force_deterministic(mdp, ensemble, params)?;
    let robust = robust_value_iteration(mdp, ensemble, params, RectangularMode::SRect, 1e-10, 1_000_000)?;
    let lhs = witness.objective - risk::rho_s(mdp, ensemble, &robust.policy, params)?;
    let e1 = epsilon1_over_policies(mdp, ensemble, 0)?;
    let dynamic = dynamic_optimum(mdp, ensemble, params, grid_resolution)?;
    let e2 = epsilon2(mdp, ensemble, params, &dynamic.value)?;
    let g = mdp.discount();
    let rhs = (2.0 * g * e1 * mdp.r_max() + e2) / (1.0 - g);
    Ok(BoundReport {
        epsilon1: e1,
        epsilon1_scope: format!("deterministic policies and {RANDOM_POLICY_SAMPLES} sampled randomized policies"),
        epsilon2: Some(e2),
        checks: vec![BoundCheck::new("static_rectangular_gap", lhs, rhs, dynamic.estimate.error + NUMERIC_SLACK)],
    })
}

/// L1 distance between the occupancy of the beta-mixed model and the
/// beta-mixture of per-model occupancies.
pub fn occupancy_convexity_gap(
    mdp: &TabularMdp,
    models: &[TransitionModel],
    beta: &[f64],
    policy: &Policy,
) -> Result<f64> {
    if models.len() != beta.len() || models.is_empty() {
        return Err(argument("one weight per model required"));
    }
    let mixed = occupancy_frequency(mdp, &TransitionModel::mixture(models, beta)?, policy)?;
    let mut blend = vec![0.0; mdp.num_states()];
    for (m, w) in models.iter().zip(beta) {
        let h = occupancy_frequency(mdp, m, policy)?;
        blend.iter_mut().zip(&h).for_each(|(b, x)| *b += w * x);
    }
    Ok(mixed.iter().zip(&blend).map(|(a, b)| (a - b).abs()).sum())
}
