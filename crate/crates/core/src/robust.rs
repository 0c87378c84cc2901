//! Soft-robust Bellman operators over the ensemble, robust value iteration
//! and robust evaluation of a fixed policy.
//!
//! The adversary picks mixture weights `xi` from the soft-robust box per
//! state (s-rectangular) or per state-action pair (sa-rectangular).

use crate::error::{argument, Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::mdp::{Policy, TabularMdp, ValueFunction, ViOutcome};
use crate::posterior::ModelEnsemble;
use crate::risk::{self, SoftRobustParams, XiBox};

/// Below this a decision-rule entry is treated as zero.
const DECISION_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectangularMode {
    SRect,
    SaRect,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Distribution over actions.
    Randomized(Vec<f64>),
    Action(usize),
}

impl Decision {
    pub fn probs(&self, num_actions: usize) -> Vec<f64> {
        match self {
            Decision::Randomized(d) => d.clone(),
            Decision::Action(a) => {
                let mut d = vec![0.0; num_actions];
                d[*a] = 1.0;
                d
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanResult {
    pub value: f64,
    pub decision: Decision,
    /// Adversarial mixture weights for the chosen decision.
    pub adversarial_xi: Vec<f64>,
}

/// Problem data shared by all state backups.
#[derive(Debug, Clone)]
pub struct RobustProblem<'a> {
    pub mdp: &'a TabularMdp,
    pub ensemble: &'a ModelEnsemble,
    pub params: SoftRobustParams,
    xi_box: XiBox,
}

impl<'a> RobustProblem<'a> {
    pub fn new(mdp: &'a TabularMdp, ensemble: &'a ModelEnsemble, params: SoftRobustParams) -> Result<Self> {
        if ensemble.num_states() != mdp.num_states() || ensemble.num_actions() != mdp.num_actions() {
            return Err(argument("ensemble dimensions do not match the MDP"));
        }
        let xi_box = risk::soft_robust_box(ensemble.weights(), params)?;
        Ok(RobustProblem { mdp, ensemble, params, xi_box })
    }

    pub fn xi_box(&self) -> &XiBox {
        &self.xi_box
    }

    /// `q[a][w] = P^w(s,a,.)^T (r(s,a,.) + gamma v)`.
    pub fn q_matrix(&self, v: &[f64], s: usize) -> Vec<Vec<f64>> {
        (0..self.mdp.num_actions())
            .map(|a| self.ensemble.models().iter().map(|m| self.mdp.q_value(m, s, a, v)).collect())
            .collect()
    }

    fn worst_case(&self, values: &[f64]) -> (f64, Vec<f64>) {
        risk::xi_minimize(values, &self.xi_box).expect("box validated at construction")
    }

    pub fn backup(&self, mode: RectangularMode, v: &[f64], s: usize) -> Result<BellmanResult> {
        match mode {
            RectangularMode::SRect => self.srect(v, s),
            RectangularMode::SaRect => Ok(self.sarect(v, s)),
        }
    }

    pub fn srect(&self, v: &[f64], s: usize) -> Result<BellmanResult> {
        let q = self.q_matrix(v, s);
        let na = q.len();
        let d = if na == 1 {
            vec![1.0]
        } else if self.params.lambda == 0.0 {
            // a single mixture: the best action against the mean model
            let f = self.ensemble.weights();
            let means: Vec<f64> = q.iter().map(|row| row.iter().zip(f).map(|(x, w)| x * w).sum()).collect();
            let mut d = vec![0.0; na];
            d[argmax(&means)] = 1.0;
            d
        } else {
            let prog = srect_program(&q, self.ensemble.weights(), self.params);
            let sol = lp::solve(&prog)?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Numeric(format!(
                    "state {s} Bellman program reported {:?}\n{}",
                    sol.status,
                    prog.to_lp_text(None)
                )));
            }
            clamp_decision(&sol.x[..na])
        };
        let mixed: Vec<f64> =
            (0..self.ensemble.len()).map(|w| (0..na).map(|a| d[a] * q[a][w]).sum()).collect();
        let (value, xi) = self.worst_case(&mixed);
        Ok(BellmanResult { value, decision: Decision::Randomized(d), adversarial_xi: xi })
    }

    pub fn sarect(&self, v: &[f64], s: usize) -> BellmanResult {
        let q = self.q_matrix(v, s);
        let mut order = Vec::with_capacity(self.ensemble.len());
        let values: Vec<f64> = q.iter().map(|row| risk::xi_min_value(row, &self.xi_box, &mut order)).collect();
        let a = argmax(&values);
        let (value, xi) = self.worst_case(&q[a]);
        BellmanResult { value, decision: Decision::Action(a), adversarial_xi: xi }
    }

    /// `min_xi sum_w xi_w sum_a pi(a|s) q[a][w]`.
    pub fn policy_backup(&self, v: &[f64], s: usize, pi: &[f64], order: &mut Vec<usize>) -> f64 {
        let n = self.ensemble.len();
        let mut mixed = vec![0.0; n];
        for (a, &p) in pi.iter().enumerate() {
            if p != 0.0 {
                for (w, m) in self.ensemble.models().iter().enumerate() {
                    mixed[w] += p * self.mdp.q_value(m, s, a, v);
                }
            }
        }
        risk::xi_min_value(&mixed, &self.xi_box, order)
    }
}

/// Lowest index among the maximizers.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn clamp_decision(raw: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = raw.iter().map(|&x| if x < DECISION_CLAMP { 0.0 } else { x }).collect();
    let total: f64 = d.iter().sum();
    if total <= 0.0 {
        // cannot happen for a feasible solution; fall back to the largest entry
        let a = argmax(raw);
        d = vec![0.0; raw.len()];
        d[a] = 1.0;
    } else {
        d.iter_mut().for_each(|x| *x /= total);
    }
    d
}

/// The linear program of an s-rectangular backup for `q[a][w]`.
///
/// Variables are the decision rule `d` (one per action), the CVaR level `b`
/// (free) and the shortfalls `y` (one per model, dropped when `alpha = 1`).
/// Each model contributes `b - sum_a d_a q[a][w] - y_w <= 0` and the decision
/// rule sums to one.
pub fn srect_program(q: &[Vec<f64>], f: &[f64], params: SoftRobustParams) -> LinearProgram {
    let na = q.len();
    let n = f.len();
    let SoftRobustParams { alpha, lambda } = params;
    let essinf = alpha >= 1.0;
    let nv = na + 1 + if essinf { 0 } else { n };
    let mut obj = vec![0.0; nv];
    for a in 0..na {
        obj[a] = (1.0 - lambda) * q[a].iter().zip(f).map(|(x, w)| x * w).sum::<f64>();
    }
    obj[na] = lambda;
    if !essinf {
        for w in 0..n {
            obj[na + 1 + w] = -lambda * f[w] / (1.0 - alpha);
        }
    }
    let mut prog = LinearProgram::new(obj);
    prog.var_lower[na] = f64::NEG_INFINITY;
    for w in 0..n {
        if essinf && f[w] == 0.0 {
            continue;
        }
        let mut row = vec![0.0; nv];
        for a in 0..na {
            row[a] = -q[a][w];
        }
        row[na] = 1.0;
        if !essinf {
            row[na + 1 + w] = -1.0;
        }
        prog.add_ub(row, 0.0);
    }
    let mut simplex = vec![0.0; nv];
    simplex[..na].iter_mut().for_each(|x| *x = 1.0);
    prog.add_eq(simplex, 1.0);
    prog
}

pub fn srect_bellman_state(
    v: &ValueFunction,
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    s: usize,
) -> Result<BellmanResult> {
    check_state(mdp, v, s)?;
    RobustProblem::new(mdp, ensemble, params)?.srect(&v.0, s)
}

pub fn sarect_bellman_state(
    v: &ValueFunction,
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    s: usize,
) -> Result<BellmanResult> {
    check_state(mdp, v, s)?;
    Ok(RobustProblem::new(mdp, ensemble, params)?.sarect(&v.0, s))
}

fn check_state(mdp: &TabularMdp, v: &ValueFunction, s: usize) -> Result<()> {
    if v.0.len() != mdp.num_states() {
        return Err(argument("value function length differs from the state count"));
    }
    if s >= mdp.num_states() {
        return Err(argument(format!("state {s} out of range")));
    }
    Ok(())
}

/// One synchronous sweep of the chosen operator over all states.
pub fn bellman_sweep(problem: &RobustProblem, mode: RectangularMode, v: &[f64]) -> Result<Vec<BellmanResult>> {
    (0..problem.mdp.num_states()).map(|s| problem.backup(mode, v, s)).collect()
}

/// Robust value iteration from `v = 0`.
pub fn robust_value_iteration(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    mode: RectangularMode,
    tol: f64,
    max_iter: usize,
) -> Result<ViOutcome> {
    robust_value_iteration_from(mdp, ensemble, params, mode, tol, max_iter, vec![0.0; mdp.num_states()])
}

pub fn robust_value_iteration_from(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    mode: RectangularMode,
    tol: f64,
    max_iter: usize,
    v0: Vec<f64>,
) -> Result<ViOutcome> {
    if !(tol > 0.0) {
        return Err(argument("tolerance must be positive"));
    }
    if v0.len() != mdp.num_states() {
        return Err(argument("initial value has wrong length"));
    }
    let problem = RobustProblem::new(mdp, ensemble, params)?;
    let mut v = v0;
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let results = bellman_sweep(&problem, mode, &v)?;
        let next: Vec<f64> = results.iter().map(|r| r.value).collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        residuals.push(res);
        v = next;
        if res <= tol {
            let policy = decisions_to_policy(&results, mdp.num_actions(), mode);
            return Ok(ViOutcome { value: ValueFunction(v), policy, iterations: it, residuals });
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

pub(crate) fn decisions_to_policy(results: &[BellmanResult], num_actions: usize, mode: RectangularMode) -> Policy {
    match mode {
        RectangularMode::SaRect => Policy::Deterministic(
            results
                .iter()
                .map(|r| match r.decision {
                    Decision::Action(a) => a,
                    Decision::Randomized(ref d) => argmax(d),
                })
                .collect(),
        ),
        RectangularMode::SRect => Policy::Randomized {
            num_actions,
            probs: results.iter().flat_map(|r| r.decision.probs(num_actions)).collect(),
        },
    }
}

/// Tolerance of [`robust_policy_evaluation`].
pub const POLICY_EVAL_TOL: f64 = 1e-8;

/// Fixed point of `v(s) = min_xi sum_w xi_w sum_a pi(a|s) q_w(s, a)`, with
/// the adversary choosing independently in every state.
pub fn robust_policy_evaluation(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
    policy: &Policy,
) -> Result<ValueFunction> {
    policy.validate(mdp.num_states(), mdp.num_actions())?;
    let problem = RobustProblem::new(mdp, ensemble, params)?;
    let na = mdp.num_actions();
    let rows: Vec<Vec<f64>> = (0..mdp.num_states()).map(|s| policy.action_probs(s, na).into_owned()).collect();
    let mut order = Vec::new();
    let mut v = vec![0.0; mdp.num_states()];
    // the residual shrinks by gamma per sweep from at most the value bound
    let sweeps = ((POLICY_EVAL_TOL / (1.0 + mdp.value_bound())).ln() / mdp.discount().ln()).ceil() as usize + 1000;
    let mut res = f64::INFINITY;
    for _ in 0..sweeps {
        let next: Vec<f64> = (0..mdp.num_states()).map(|s| problem.policy_backup(&v, s, &rows[s], &mut order)).collect();
        res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res <= POLICY_EVAL_TOL {
            return Ok(ValueFunction(v));
        }
    }
    Err(Error::Convergence { iterations: sweeps, residual: res })
}

/// `p0^T` of the s-rectangular robust value of the policy.
pub fn rho_r(mdp: &TabularMdp, ensemble: &ModelEnsemble, params: SoftRobustParams, policy: &Policy) -> Result<f64> {
    Ok(robust_policy_evaluation(mdp, ensemble, params, policy)?.dot(mdp.initial_dist()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::mdp::tests::{random_instance, random_policy};
    use crate::mdp::{evaluate_policy, expected_return, value_iteration, TransitionModel};
    use crate::posterior::{dirichlet_from_batch, sample_ensemble};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn params(alpha: f64, lambda: f64) -> SoftRobustParams {
        SoftRobustParams::new(alpha, lambda).unwrap()
    }

    pub fn random_ensemble(s: usize, a: usize, n: usize, gamma: f64, seed: u64) -> (TabularMdp, ModelEnsemble) {
        let (mdp, m0) = random_instance(s, a, gamma, seed);
        let mut models = vec![m0];
        for k in 1..n {
            models.push(random_instance(s, a, gamma, seed * 1000 + k as u64).1);
        }
        let mut rng = stream_rng(seed, 3);
        let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.gen::<f64>()).collect();
        let t: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / t).collect();
        let s2: f64 = w.iter().sum();
        w[0] += 1.0 - s2;
        (mdp, ModelEnsemble::new(models, w).unwrap())
    }

    fn random_values(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect()
    }

    #[test]
    fn program_shape() {
        let q = vec![vec![1.0, 2.0, 3.0], vec![0.0, 5.0, 1.0]];
        let prog = srect_program(&q, &[0.2, 0.3, 0.5], params(0.5, 0.5));
        assert_eq!(prog.num_vars(), 2 + 1 + 3);
        assert_eq!(prog.ub_matrix.len(), 3);
        assert_eq!(prog.eq_matrix.len(), 1);
    }

    #[test]
    fn single_model_reduces_to_standard_backup() {
        let (mdp, m) = random_instance(4, 3, 0.9, 2);
        let e = ModelEnsemble::single(m.clone());
        let v = ValueFunction(vec![1.0, -2.0, 0.5, 3.0]);
        for s in 0..4 {
            let best = (0..3).map(|a| mdp.q_value(&m, s, a, &v.0)).fold(f64::NEG_INFINITY, f64::max);
            let r = srect_bellman_state(&v, &mdp, &e, params(0.7, 0.6), s).unwrap();
            assert!((r.value - best).abs() < 1e-9);
            let Decision::Randomized(d) = &r.decision else { panic!() };
            assert!(d.iter().filter(|x| **x > 0.0).count() == 1);
            let r = sarect_bellman_state(&v, &mdp, &e, params(0.7, 0.6), s).unwrap();
            assert!((r.value - best).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lambda_uses_mean_model() {
        let (mdp, e) = random_ensemble(4, 3, 3, 0.9, 5);
        let mean = e.mean_model().unwrap();
        let v = ValueFunction(vec![0.3, 1.0, -0.4, 2.0]);
        for s in 0..4 {
            let best = (0..3).map(|a| mdp.q_value(&mean, s, a, &v.0)).fold(f64::NEG_INFINITY, f64::max);
            let r = srect_bellman_state(&v, &mdp, &e, params(0.9, 0.0), s).unwrap();
            assert!((r.value - best).abs() < 1e-10);
        }
    }

    #[test]
    fn srect_matches_decision_grid() {
        for seed in 0..10 {
            let (mdp, e) = random_ensemble(2, 2, 2, 0.9, 10 + seed);
            let p = params(0.5 + 0.04 * seed as f64, 0.2 + 0.08 * seed as f64);
            let v = ValueFunction(vec![1.5, -0.5]);
            let problem = RobustProblem::new(&mdp, &e, p).unwrap();
            for s in 0..2 {
                let q = problem.q_matrix(&v.0, s);
                let mut grid_best = f64::NEG_INFINITY;
                for i in 0..=1000 {
                    let t = i as f64 / 1000.0;
                    let mixed: Vec<f64> = (0..2).map(|w| t * q[0][w] + (1.0 - t) * q[1][w]).collect();
                    let (val, _) = risk::xi_minimize(&mixed, problem.xi_box()).unwrap();
                    grid_best = grid_best.max(val);
                }
                let r = srect_bellman_state(&v, &mdp, &e, p, s).unwrap();
                assert!(r.value >= grid_best - 1e-9);
                // lattice error: spacing times the slope bound in t
                let slope = (0..2).map(|w| (q[0][w] - q[1][w]).abs()).fold(0.0, f64::max);
                assert!(r.value - grid_best <= slope / 1000.0 + 1e-9, "seed {seed}: {} vs {grid_best}", r.value);
            }
        }
    }

    #[test]
    fn program_agrees_with_sort_for_a_forced_action() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..30 {
            let n = rng.gen_range(1..8);
            let na = rng.gen_range(1..4);
            let q: Vec<Vec<f64>> = (0..na).map(|_| random_values(n, 10.0, &mut rng)).collect();
            let f = crate::rng::dirichlet(&mut rng, &vec![1.0; n]);
            let alpha = [0.0, 0.3, 0.8, 0.95][rng.gen_range(0..4)];
            let p = params(alpha, 1.0);
            let forced = rng.gen_range(0..na);
            let mut prog = srect_program(&q, &f, p);
            for a in 0..na {
                if a != forced {
                    prog.var_upper[a] = 0.0;
                }
            }
            let sol = lp::solve(&prog).unwrap();
            let combined = risk::soft_robust_combine(&q[forced], &f, p).unwrap();
            assert!((sol.objective_value - combined).abs() < 1e-9);
        }
    }

    #[test]
    fn operator_properties() {
        let mut rng = stream_rng(6, 0);
        for seed in 0..10 {
            let (mdp, e) = random_ensemble(5, 3, 4, 0.85, 30 + seed);
            let p = params(rng.gen::<f64>() * 0.95, rng.gen());
            let problem = RobustProblem::new(&mdp, &e, p).unwrap();
            let v = random_values(5, 5.0, &mut rng);
            let bump: Vec<f64> = v.iter().map(|x| x + rng.gen::<f64>()).collect();
            let w = random_values(5, 5.0, &mut rng);
            let c = 2.5;
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
                let tv: Vec<f64> = bellman_sweep(&problem, mode, &v).unwrap().iter().map(|r| r.value).collect();
                let tb: Vec<f64> = bellman_sweep(&problem, mode, &bump).unwrap().iter().map(|r| r.value).collect();
                let tw: Vec<f64> = bellman_sweep(&problem, mode, &w).unwrap().iter().map(|r| r.value).collect();
                let ts: Vec<f64> = bellman_sweep(&problem, mode, &shifted).unwrap().iter().map(|r| r.value).collect();
                for s in 0..5 {
                    assert!(tb[s] >= tv[s] - 1e-9, "monotonicity");
                    assert!((ts[s] - tv[s] - 0.85 * c).abs() < 1e-9, "constant shift");
                }
                let dv = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let dt = tv.iter().zip(&tw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(dt <= 0.85 * dv + 1e-9, "contraction");
            }
            let sa: Vec<f64> = bellman_sweep(&problem, RectangularMode::SaRect, &v).unwrap().iter().map(|r| r.value).collect();
            let sr: Vec<f64> = bellman_sweep(&problem, RectangularMode::SRect, &v).unwrap().iter().map(|r| r.value).collect();
            for s in 0..5 {
                assert!(sa[s] <= sr[s] + 1e-8);
            }
        }
    }

    #[test]
    fn essential_infimum_mode_takes_worst_model() {
        let (mdp, e) = random_ensemble(3, 2, 3, 0.9, 77);
        let v = ValueFunction(vec![0.0, 1.0, 2.0]);
        let problem = RobustProblem::new(&mdp, &e, params(1.0, 1.0)).unwrap();
        for s in 0..3 {
            let q = problem.q_matrix(&v.0, s);
            let best = q.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).fold(f64::NEG_INFINITY, f64::max);
            let r = sarect_bellman_state(&v, &mdp, &e, params(1.0, 1.0), s).unwrap();
            assert!((r.value - best).abs() < 1e-12);
            let rs = srect_bellman_state(&v, &mdp, &e, params(1.0, 1.0), s).unwrap();
            assert!(rs.value >= best - 1e-9);
        }
    }

    #[test]
    fn value_iteration_contracts_and_reduces() {
        for seed in 0..10 {
            let (mdp, e) = random_ensemble(4, 2, 3, 0.9, 200 + seed);
            for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
                let out = robust_value_iteration(&mdp, &e, params(0.7, 0.5), mode, 1e-8, 100_000).unwrap();
                for w in out.residuals.windows(2) {
                    assert!(w[1] <= 0.9 * w[0] + 1e-9);
                }
            }
            let single = ModelEnsemble::single(e.models()[0].clone());
            let plain = value_iteration(&mdp, &e.models()[0], 1e-8, 100_000).unwrap();
            for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
                let out = robust_value_iteration(&mdp, &single, params(0.7, 0.5), mode, 1e-8, 100_000).unwrap();
                assert!(out.value.max_abs_diff(&plain.value) <= 2e-8);
            }
        }
    }

    #[test]
    fn fixed_point_ignores_initialization() {
        let (mdp, e) = random_ensemble(4, 3, 3, 0.8, 9);
        let bound = mdp.value_bound();
        let p = params(0.6, 0.7);
        for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
            let base = robust_value_iteration(&mdp, &e, p, mode, 1e-7, 100_000).unwrap();
            for init in [bound, -bound] {
                let out = robust_value_iteration_from(&mdp, &e, p, mode, 1e-7, 100_000, vec![init; 4]).unwrap();
                // each run is within tol * gamma / (1 - gamma) of the fixed point
                assert!(out.value.max_abs_diff(&base.value) <= 2.0 * 1e-7 * 0.8 / 0.2 + 1e-12);
            }
        }
    }

    #[test]
    fn riverswim_posterior_converges() {
        let (mdp, truth) = domains::riverswim();
        let batch =
            domains::generate_batch(&truth, &Policy::uniform(20, 2), 2000, mdp.initial_dist(), 100, 1).unwrap();
        let e = sample_ensemble(&dirichlet_from_batch(&batch, 1.0).unwrap(), 15, 2).unwrap();
        for mode in [RectangularMode::SRect, RectangularMode::SaRect] {
            let out = robust_value_iteration(&mdp, &e, params(0.8, 0.5), mode, 1e-6, 10_000).unwrap();
            assert!(out.iterations < 10_000);
            for w in out.residuals.windows(2) {
                assert!(w[1] <= 0.95 * w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn policy_evaluation_reductions() {
        let (mdp, e) = random_ensemble(4, 2, 3, 0.9, 50);
        let pi = random_policy(4, 2, 1);
        let single = ModelEnsemble::single(e.models()[1].clone());
        let v = robust_policy_evaluation(&mdp, &single, params(0.9, 1.0), &pi).unwrap();
        let exact = evaluate_policy(&mdp, &e.models()[1], &pi).unwrap();
        assert!(v.max_abs_diff(&exact) < 1e-6);

        let reward = vec![2.0; 4 * 2 * 4];
        let flat = TabularMdp::new(4, 2, reward, 0.9, vec![0.25; 4]).unwrap();
        let v = robust_policy_evaluation(&flat, &e, params(0.9, 1.0), &pi).unwrap();
        assert!(v.0.iter().all(|x| (x - 20.0).abs() < 1e-7));
    }

    #[test]
    fn rectangular_return_is_pessimistic() {
        for seed in 0..10 {
            let (mdp, e) = random_ensemble(4, 3, 3, 0.9, 300 + seed);
            let p = params(0.75, 0.6);
            for k in 0..3 {
                let pi = random_policy(4, 3, seed * 10 + k);
                let r = rho_r(&mdp, &e, p, &pi).unwrap();
                // every grid point is a feasible mixture, so the grid value
                // bounds the dynamic objective from above
                let d = risk::rho_d_grid(&mdp, &e, &pi, p, 30).unwrap();
                assert!(r <= d.value + 1e-9, "{r} > {}", d.value);
            }
            let single = ModelEnsemble::single(e.models()[0].clone());
            let pi = random_policy(4, 3, seed);
            let r = rho_r(&mdp, &single, p, &pi).unwrap();
            assert!((r - expected_return(&mdp, &e.models()[0], &pi).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn sa_policy_is_deterministic_and_s_policy_is_valid() {
        let (mdp, e) = random_ensemble(3, 3, 4, 0.9, 8);
        let out = robust_value_iteration(&mdp, &e, params(0.9, 0.9), RectangularMode::SRect, 1e-8, 10_000).unwrap();
        let Policy::Randomized { probs, .. } = &out.policy else { panic!() };
        for row in probs.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|p| *p == 0.0 || *p >= DECISION_CLAMP));
        }
        let out = robust_value_iteration(&mdp, &e, params(0.9, 0.9), RectangularMode::SaRect, 1e-8, 10_000).unwrap();
        assert!(matches!(out.policy, Policy::Deterministic(_)));
        let _ = TransitionModel::mixture(e.models(), e.weights()).unwrap();
    }
}
