//! Tabular MDPs: exact policy evaluation, occupancy frequencies and plain
//! value iteration.
//!
//! Tensors indexed by `(s, a, s')` are stored densely in row-major order, so
//! the next-state distribution of a state-action pair is a contiguous slice.

use std::borrow::Cow;

use crate::error::{argument, Error, Result};
use crate::linalg::{self, Lu};
use crate::posterior::ModelEnsemble;

/// Tolerance on row sums for a transition model to be accepted as is.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Largest row-sum drift that is silently renormalized by
/// [`TransitionModel::normalized`].
pub const RENORMALIZE_TOL: f64 = 1e-8;

/// The known part of the decision problem: rewards, discount and initial
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
    r_max: f64,
}

impl TabularMdp {
    /// `reward` is indexed `(s, a, s')`; `r_max` is set to `max |r|`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(argument("MDP needs at least one state and one action"));
        }
        if reward.len() != num_states * num_actions * num_states {
            return Err(argument(format!(
                "reward tensor has {} entries, expected {}",
                reward.len(),
                num_states * num_actions * num_states
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(argument("reward tensor contains non-finite entries"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(argument(format!("discount {discount} not in (0, 1)")));
        }
        check_distribution(&initial_dist, num_states, 1e-12, "initial distribution")?;
        let r_max = reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Ok(TabularMdp { num_states, num_actions, reward, discount, initial_dist, r_max })
    }

    /// Overrides the reward bound with a looser (larger) value.
    pub fn with_r_max(mut self, r_max: f64) -> Result<Self> {
        if r_max < self.r_max {
            return Err(argument(format!(
                "r_max {r_max} is below the largest reward magnitude {}",
                self.r_max
            )));
        }
        self.r_max = r_max;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(argument(format!("discount {discount} not in (0, 1)")));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn with_initial_dist(mut self, p0: Vec<f64>) -> Result<Self> {
        check_distribution(&p0, self.num_states, 1e-12, "initial distribution")?;
        self.initial_dist = p0;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn reward_tensor(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, sp: usize) -> f64 {
        self.reward[(s * self.num_actions + a) * self.num_states + sp]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.reward[start..start + self.num_states]
    }

    /// Bound on `|v(s)|` for any policy and model.
    pub fn value_bound(&self) -> f64 {
        self.r_max / (1.0 - self.discount)
    }

    pub(crate) fn check_model(&self, model: &TransitionModel) -> Result<()> {
        if model.num_states != self.num_states || model.num_actions != self.num_actions {
            return Err(argument(format!(
                "model is {}x{}, MDP is {}x{}",
                model.num_states, model.num_actions, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        policy.validate(self.num_states, self.num_actions)
    }

    /// `P(s,a,.)^T (r(s,a,.) + discount * v)`.
    #[inline]
    pub fn q_value(&self, model: &TransitionModel, s: usize, a: usize, v: &[f64]) -> f64 {
        let p = model.row(s, a);
        let r = self.reward_row(s, a);
        let g = self.discount;
        let mut acc = 0.0;
        for sp in 0..self.num_states {
            let pk = p[sp];
            if pk != 0.0 {
                acc += pk * (r[sp] + g * v[sp]);
            }
        }
        acc
    }

    /// Expected one-step reward `sum_s' P(s,a,s') r(s,a,s')`.
    pub fn expected_reward(&self, model: &TransitionModel, s: usize, a: usize) -> f64 {
        model.row(s, a).iter().zip(self.reward_row(s, a)).map(|(p, r)| p * r).sum()
    }
}

fn check_distribution(p: &[f64], n: usize, tol: f64, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(argument(format!("{what} has length {}, expected {n}", p.len())));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(argument(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(argument(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Transition probabilities `P(s, a, s')`; every `(s, a)` row is a
/// probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionModel {
    /// Validates rows at [`ROW_SUM_TOL`] without modifying them.
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let model = Self::unchecked(num_states, num_actions, probs)?;
        if let Some((s, a, sum)) = model.first_bad_row(ROW_SUM_TOL) {
            return Err(Error::Input(format!(
                "transition row (s={s}, a={a}) is not a probability vector (sum {sum})"
            )));
        }
        Ok(model)
    }

    /// Renormalizes rows whose sum drifts from one by at most
    /// [`RENORMALIZE_TOL`]; larger drift is rejected.
    pub fn normalized(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let mut model = Self::unchecked(num_states, num_actions, probs)?;
        if let Some((s, a, sum)) = model.first_bad_row(RENORMALIZE_TOL) {
            return Err(Error::Input(format!(
                "transition row (s={s}, a={a}) is not a probability vector (sum {sum})"
            )));
        }
        let n = num_states;
        for row in model.probs.chunks_mut(n) {
            let total: f64 = row.iter().sum();
            if total != 1.0 {
                row.iter_mut().for_each(|p| *p /= total);
            }
        }
        Ok(model)
    }

    fn unchecked(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(argument("model needs at least one state and one action"));
        }
        if probs.len() != num_states * num_actions * num_states {
            return Err(argument(format!(
                "transition tensor has {} entries, expected {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        Ok(TransitionModel { num_states, num_actions, probs })
    }

    fn first_bad_row(&self, tol: f64) -> Option<(usize, usize, f64)> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > tol {
                    return Some((s, a, sum));
                }
            }
        }
        None
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, sp: usize) -> f64 {
        self.probs[(s * self.num_actions + a) * self.num_states + sp]
    }

    /// Convex combination `sum_i weights[i] * models[i]`.
    pub fn mixture(models: &[TransitionModel], weights: &[f64]) -> Result<Self> {
        let first = models.first().ok_or_else(|| argument("mixture of zero models"))?;
        if models.len() != weights.len() {
            return Err(argument("one weight per model required"));
        }
        let mut probs = vec![0.0; first.probs.len()];
        for (m, &w) in models.iter().zip(weights) {
            if m.num_states != first.num_states || m.num_actions != first.num_actions {
                return Err(argument("models in a mixture must share dimensions"));
            }
            if w != 0.0 {
                probs.iter_mut().zip(&m.probs).for_each(|(p, q)| *p += w * q);
            }
        }
        Self::normalized(first.num_states, first.num_actions, probs)
    }

    /// Policy-induced `S x S` transition matrix (row-major).
    pub fn policy_matrix(&self, policy: &Policy) -> Vec<f64> {
        let n = self.num_states;
        let mut p = vec![0.0; n * n];
        for s in 0..n {
            let dst = &mut p[s * n..(s + 1) * n];
            for (a, w) in policy.action_probs(s, self.num_actions).iter().enumerate() {
                if *w != 0.0 {
                    dst.iter_mut().zip(self.row(s, a)).for_each(|(d, q)| *d += w * q);
                }
            }
        }
        p
    }
}

/// A stationary policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// One action index per state.
    Deterministic(Vec<usize>),
    /// Row-stochastic `S x A` matrix, row-major.
    Randomized { num_actions: usize, probs: Vec<f64> },
}

impl Policy {
    pub fn randomized(num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || probs.len() % num_actions != 0 {
            return Err(argument("randomized policy matrix has wrong shape"));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(argument(format!("policy row {s} is not a distribution (sum {sum})")));
            }
        }
        Ok(Policy::Randomized { num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy::Randomized {
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            Policy::Deterministic(a) => a.len(),
            Policy::Randomized { num_actions, probs } => probs.len() / num_actions,
        }
    }

    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states() != num_states {
            return Err(argument(format!(
                "policy covers {} states, MDP has {num_states}",
                self.num_states()
            )));
        }
        match self {
            Policy::Deterministic(acts) => {
                if let Some(s) = acts.iter().position(|&a| a >= num_actions) {
                    return Err(argument(format!("action {} at state {s} out of range", acts[s])));
                }
            }
            Policy::Randomized { num_actions: na, .. } => {
                if *na != num_actions {
                    return Err(argument(format!("policy has {na} actions, MDP has {num_actions}")));
                }
            }
        }
        Ok(())
    }

    /// Action distribution at `s`.
    pub fn action_probs(&self, s: usize, num_actions: usize) -> Cow<'_, [f64]> {
        match self {
            Policy::Deterministic(acts) => {
                let mut row = vec![0.0; num_actions];
                row[acts[s]] = 1.0;
                Cow::Owned(row)
            }
            Policy::Randomized { num_actions: na, probs } => Cow::Borrowed(&probs[s * na..(s + 1) * na]),
        }
    }

    pub fn to_randomized(&self, num_actions: usize) -> Policy {
        match self {
            Policy::Deterministic(acts) => {
                let mut probs = vec![0.0; acts.len() * num_actions];
                for (s, &a) in acts.iter().enumerate() {
                    probs[s * num_actions + a] = 1.0;
                }
                Policy::Randomized { num_actions, probs }
            }
            p => p.clone(),
        }
    }

    /// The deterministic action at each state when every row is one-hot.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        match self {
            Policy::Deterministic(a) => Some(a.clone()),
            Policy::Randomized { num_actions, probs } => probs
                .chunks(*num_actions)
                .map(|row| row.iter().position(|&p| p == 1.0))
                .collect(),
        }
    }
}

/// State values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(v, w)| v * w).sum()
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Result of a value-iteration style solver.
#[derive(Debug, Clone)]
pub struct ViOutcome {
    pub value: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    /// `||v_k - v_{k-1}||_inf` for every sweep.
    pub residuals: Vec<f64>,
}

fn policy_reward(mdp: &TabularMdp, model: &TransitionModel, policy: &Policy) -> Vec<f64> {
    (0..mdp.num_states)
        .map(|s| {
            policy
                .action_probs(s, mdp.num_actions)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(a, w)| w * mdp.expected_reward(model, s, a))
                .sum()
        })
        .collect()
}

/// Unique solution of `v = r_pi + discount * P_pi v`.
pub fn evaluate_policy(mdp: &TabularMdp, model: &TransitionModel, policy: &Policy) -> Result<ValueFunction> {
    mdp.check_model(model)?;
    mdp.check_policy(policy)?;
    let n = mdp.num_states;
    let p = model.policy_matrix(policy);
    let r = policy_reward(mdp, model, policy);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = -mdp.discount * p[i * n + j];
        }
        a[i * n + i] += 1.0;
    }
    let v = linalg::solve(a.clone(), n, &r)?;
    let res = linalg::residual_inf(&a, n, &v, &r);
    if !(res <= 1e-9 * (1.0 + mdp.value_bound())) {
        return Err(Error::Numeric(format!("policy evaluation residual {res:e}")));
    }
    Ok(ValueFunction(v))
}

/// `rho(pi, P) = p0^T v_pi`.
pub fn expected_return(mdp: &TabularMdp, model: &TransitionModel, policy: &Policy) -> Result<f64> {
    Ok(evaluate_policy(mdp, model, policy)?.dot(&mdp.initial_dist))
}

/// Discounted state occupancy `h = (I - discount * P_pi^T)^{-1} p0`.
pub fn occupancy_frequency(mdp: &TabularMdp, model: &TransitionModel, policy: &Policy) -> Result<Vec<f64>> {
    mdp.check_model(model)?;
    mdp.check_policy(policy)?;
    let p = model.policy_matrix(policy);
    occupancy_from_matrix(&p, mdp.num_states, mdp.discount, &mdp.initial_dist)
}

pub(crate) fn occupancy_from_matrix(p: &[f64], n: usize, discount: f64, p0: &[f64]) -> Result<Vec<f64>> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // transpose
            a[i * n + j] = -discount * p[j * n + i];
        }
        a[i * n + i] += 1.0;
    }
    let mut h = Lu::factor(a, n)?.solve(p0);
    // round-off can leave tiny negatives
    h.iter_mut().for_each(|x| {
        if *x < 0.0 && *x > -1e-12 {
            *x = 0.0
        }
    });
    Ok(h)
}

fn greedy(mdp: &TabularMdp, model: &TransitionModel, v: &[f64], s: usize) -> (usize, f64) {
    let mut best = (0, mdp.q_value(model, s, 0, v));
    for a in 1..mdp.num_actions {
        let q = mdp.q_value(model, s, a, v);
        // strict: lowest index wins ties
        if q > best.1 {
            best = (a, q);
        }
    }
    best
}

/// Standard value iteration from `v = 0`, stopping when
/// `||v_k - v_{k-1}||_inf <= tol`.
pub fn value_iteration(mdp: &TabularMdp, model: &TransitionModel, tol: f64, max_iter: usize) -> Result<ViOutcome> {
    mdp.check_model(model)?;
    if !(tol > 0.0) {
        return Err(argument("tolerance must be positive"));
    }
    let n = mdp.num_states;
    let mut v = vec![0.0; n];
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let next: Vec<f64> = (0..n).map(|s| greedy(mdp, model, &v, s).1).collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        residuals.push(res);
        v = next;
        if res <= tol {
            let actions = (0..n).map(|s| greedy(mdp, model, &v, s).0).collect();
            return Ok(ViOutcome {
                value: ValueFunction(v),
                policy: Policy::Deterministic(actions),
                iterations: it,
                residuals,
            });
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

/// `rho(pi, P^w)` for every model in the ensemble, in ensemble order.
pub fn return_distribution(mdp: &TabularMdp, ensemble: &ModelEnsemble, policy: &Policy) -> Result<Vec<f64>> {
    ensemble.models().iter().map(|m| expected_return(mdp, m, policy)).collect()
}

/// Value iteration against the weighted mean model `sum_w f_w P^w`.
pub fn mean_model_solve(mdp: &TabularMdp, ensemble: &ModelEnsemble, tol: f64, max_iter: usize) -> Result<ViOutcome> {
    let mean = ensemble.mean_model()?;
    value_iteration(mdp, &mean, tol, max_iter)
}
