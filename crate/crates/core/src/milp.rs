//! Optimal deterministic soft-robust policies: a mixed-integer program over
//! binary policy indicators and per-model occupancy variables, solved by
//! best-bound branch and bound, and an enumeration oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{argument, Error, Result};
use crate::linalg::Lu;
use crate::lp::{self, LinearProgram, LpStatus};
use crate::mdp::{Policy, TabularMdp};
use crate::posterior::ModelEnsemble;
use crate::risk::{self, soft_robust_combine, SoftRobustParams};

/// Indicator values within this distance of 0 or 1 count as integral.
const INTEGRALITY_TOL: f64 = 1e-9;

/// Largest policy count [`brute_force_deterministic`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

pub const DEFAULT_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_NODE_LIMIT: usize = 100_000;

/// Variables, in order: `pi(s,a)`, `u(s,a,w)`, `b`, `y(w)`.
#[derive(Debug, Clone)]
pub struct SrMilpModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_models: usize,
    /// Continuous relaxation with `0 <= pi <= 1`.
    pub relaxation: LinearProgram,
    mdp: TabularMdp,
    ensemble: ModelEnsemble,
    params: SoftRobustParams,
}

impl SrMilpModel {
    pub fn pi(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }
    pub fn u(&self, s: usize, a: usize, w: usize) -> usize {
        self.num_states * self.num_actions + (s * self.num_actions + a) * self.num_models + w
    }
    pub fn b(&self) -> usize {
        self.num_states * self.num_actions * (1 + self.num_models)
    }
    pub fn y(&self, w: usize) -> usize {
        self.b() + 1 + w
    }
    pub fn num_vars(&self) -> usize {
        self.y(0) + self.num_models
    }
    pub fn num_constraints(&self) -> usize {
        self.relaxation.eq_matrix.len() + self.relaxation.ub_matrix.len()
    }

    pub fn var_names(&self) -> Vec<String> {
        let (ns, na, n) = (self.num_states, self.num_actions, self.num_models);
        let mut names = Vec::with_capacity(self.num_vars());
        for s in 0..ns {
            for a in 0..na {
                names.push(format!("pi_{s}_{a}"));
            }
        }
        for s in 0..ns {
            for a in 0..na {
                for w in 0..n {
                    names.push(format!("u_{s}_{a}_{w}"));
                }
            }
        }
        names.push("b".into());
        for w in 0..n {
            names.push(format!("y_{w}"));
        }
        names
    }

    pub fn to_lp_text(&self) -> String {
        self.relaxation.to_lp_text(Some(&self.var_names()))
    }

    /// The relaxation with `pi(s, a)` restricted to `[lo, hi]` per pair.
    pub fn restricted(&self, bounds: &[(f64, f64)]) -> LinearProgram {
        let mut prog = self.relaxation.clone();
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            prog.var_lower[j] = lo;
            prog.var_upper[j] = hi;
        }
        prog
    }

    /// The relaxation with every indicator fixed to the policy.
    pub fn fixed_to(&self, actions: &[usize]) -> LinearProgram {
        let bounds: Vec<(f64, f64)> = (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| if actions[s] == a { (1.0, 1.0) } else { (0.0, 0.0) }))
            .collect();
        self.restricted(&bounds)
    }
}

/// Builds the program for `alpha < 1`.
///
/// Rows: one CVaR shortfall row per model
/// (`f_w b - y_w - sum u(.,.,w) rbar^w <= 0`), discounted flow conservation
/// per state and model with initial mass `f_w p0(s)`, one action-simplex row
/// per state, and `u(s,a,w) <= f_w pi(s,a) / (1 - gamma)` linking occupancy
/// to the indicators.
pub fn build_model(mdp: &TabularMdp, ensemble: &ModelEnsemble, params: SoftRobustParams) -> Result<SrMilpModel> {
    if params.alpha >= 1.0 {
        return Err(argument("the mixed-integer program requires alpha < 1"));
    }
    if ensemble.num_states() != mdp.num_states() || ensemble.num_actions() != mdp.num_actions() {
        return Err(argument("ensemble dimensions do not match the MDP"));
    }
    let (ns, na, n) = (mdp.num_states(), mdp.num_actions(), ensemble.len());
    let f = ensemble.weights();
    let gamma = mdp.discount();
    let SoftRobustParams { alpha, lambda } = params;
    let mut model = SrMilpModel {
        num_states: ns,
        num_actions: na,
        num_models: n,
        relaxation: LinearProgram::new(Vec::new()),
        mdp: mdp.clone(),
        ensemble: ensemble.clone(),
        params,
    };
    let nv = model.num_vars();
    let rbar: Vec<Vec<f64>> = ensemble
        .models()
        .iter()
        .map(|m| (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| mdp.expected_reward(m, s, a)).collect())
        .collect();

    let mut obj = vec![0.0; nv];
    obj[model.b()] = lambda;
    for w in 0..n {
        obj[model.y(w)] = -lambda / (1.0 - alpha);
        for s in 0..ns {
            for a in 0..na {
                obj[model.u(s, a, w)] = (1.0 - lambda) * rbar[w][s * na + a];
            }
        }
    }
    let mut prog = LinearProgram::new(obj);
    prog.var_lower[model.b()] = f64::NEG_INFINITY;
    for j in 0..ns * na {
        prog.var_upper[j] = 1.0;
    }

    for w in 0..n {
        let mut row = vec![0.0; nv];
        row[model.b()] = f[w];
        row[model.y(w)] = -1.0;
        for s in 0..ns {
            for a in 0..na {
                row[model.u(s, a, w)] = -rbar[w][s * na + a];
            }
        }
        prog.add_ub(row, 0.0);
    }
    for (w, m) in ensemble.models().iter().enumerate() {
        for s in 0..ns {
            let mut row = vec![0.0; nv];
            for a in 0..na {
                row[model.u(s, a, w)] += 1.0;
            }
            for sp in 0..ns {
                for ap in 0..na {
                    let p = m.prob(sp, ap, s);
                    if p != 0.0 {
                        row[model.u(sp, ap, w)] -= gamma * p;
                    }
                }
            }
            prog.add_eq(row, f[w] * mdp.initial_dist()[s]);
        }
    }
    for s in 0..ns {
        let mut row = vec![0.0; nv];
        for a in 0..na {
            row[model.pi(s, a)] = 1.0;
        }
        prog.add_eq(row, 1.0);
    }
    for s in 0..ns {
        for a in 0..na {
            for w in 0..n {
                let mut row = vec![0.0; nv];
                row[model.u(s, a, w)] = 1.0;
                row[model.pi(s, a)] = -f[w] / (1.0 - gamma);
                prog.add_ub(row, 0.0);
            }
        }
    }
    model.relaxation = prog;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub policy: Policy,
    /// Static soft-robust return of `policy`.
    pub objective: f64,
    pub nodes_explored: usize,
    /// Best remaining upper bound minus `objective` (zero when proven).
    pub gap: f64,
    /// `false` when the node limit stopped the search.
    pub complete: bool,
    /// Value of the root relaxation, when one was solved.
    pub root_bound: Option<f64>,
}

#[derive(Debug, Clone)]
struct BranchNode {
    id: usize,
    bound: f64,
    /// Per `(s, a)`: `Some(true)` fixed to one, `Some(false)` fixed to zero.
    fixings: Vec<Option<bool>>,
    /// Indicator to branch on.
    branch: usize,
}

impl PartialEq for BranchNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for BranchNode {}
impl PartialOrd for BranchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BranchNode {
    // max-heap: larger bound first, then older node
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(other.id.cmp(&self.id))
    }
}

struct NodeLp {
    bound: f64,
    pi: Vec<f64>,
}

fn solve_node(model: &SrMilpModel, fixings: &[Option<bool>]) -> Result<Option<NodeLp>> {
    let bounds: Vec<(f64, f64)> = fixings
        .iter()
        .map(|fx| match fx {
            Some(true) => (1.0, 1.0),
            Some(false) => (0.0, 0.0),
            None => (0.0, 1.0),
        })
        .collect();
    let sol = lp::solve(&model.restricted(&bounds))?;
    match sol.status {
        LpStatus::Optimal => {
            let pi = sol.x[..model.num_states * model.num_actions].to_vec();
            Ok(Some(NodeLp { bound: sol.objective_value, pi }))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Numeric("mixed-integer relaxation is unbounded".into())),
    }
}

/// Per-state argmax of the relaxed indicators, lowest action on ties.
fn round(pi: &[f64], ns: usize, na: usize) -> Vec<usize> {
    (0..ns)
        .map(|s| {
            let row = &pi[s * na..(s + 1) * na];
            let mut best = 0;
            for a in 1..na {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Indicator closest to 1/2, lowest index on ties.
fn most_fractional(pi: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in pi.iter().enumerate() {
        if p.min(1.0 - p) <= INTEGRALITY_TOL {
            continue;
        }
        let d = (p - 0.5).abs();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

/// Best-bound branch and bound over the indicators.
pub fn solve_branch_and_bound(model: &SrMilpModel, gap_tol: f64, node_limit: usize) -> Result<MilpSolution> {
    if !(gap_tol > 0.0) {
        return Err(argument("gap tolerance must be positive"));
    }
    let (ns, na) = (model.num_states, model.num_actions);
    let evaluate = |actions: &[usize]| -> Result<f64> {
        risk::rho_s(&model.mdp, &model.ensemble, &Policy::Deterministic(actions.to_vec()), model.params)
    };
    let mut incumbent: Option<(f64, Vec<usize>)> = None;
    let offer = |actions: Vec<usize>, incumbent: &mut Option<(f64, Vec<usize>)>| -> Result<()> {
        let value = evaluate(&actions)?;
        let better = match incumbent {
            None => true,
            Some((v, a)) => value > *v || (value == *v && actions < *a),
        };
        if better {
            *incumbent = Some((value, actions));
        }
        Ok(())
    };

    let root_fix = vec![None; ns * na];
    let Some(root) = solve_node(model, &root_fix)? else {
        return Err(Error::Numeric("root relaxation is infeasible".into()));
    };
    let root_bound = root.bound;
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut nodes = 0usize;
    let mut pending = vec![(root_fix, root)];
    loop {
        // process freshly solved nodes: heuristics, integrality, branching
        for (fixings, node) in pending.drain(..) {
            offer(round(&node.pi, ns, na), &mut incumbent)?;
            let inc = incumbent.as_ref().map_or(f64::NEG_INFINITY, |x| x.0);
            if node.bound <= inc + gap_tol {
                continue;
            }
            // integral relaxations were already offered through rounding
            let Some(branch) = most_fractional(&node.pi) else { continue };
            heap.push(BranchNode { id: next_id, bound: node.bound, fixings, branch });
            next_id += 1;
        }
        let inc = incumbent.as_ref().map_or(f64::NEG_INFINITY, |x| x.0);
        let Some(top) = heap.pop() else { break };
        if top.bound <= inc + gap_tol {
            heap.push(top);
            break;
        }
        if nodes >= node_limit {
            heap.push(top);
            let (objective, actions) = incumbent.expect("root rounding provides an incumbent");
            let best_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
            return Ok(MilpSolution {
                policy: Policy::Deterministic(actions),
                objective,
                nodes_explored: nodes,
                gap: (best_bound - objective).max(0.0),
                complete: false,
                root_bound: Some(root_bound),
            });
        }
        nodes += 1;
        let j = top.branch;
        let (s, a) = (j / na, j % na);
        let mut one = top.fixings.clone();
        for b in 0..na {
            one[s * na + b] = Some(b == a);
        }
        let mut zero = top.fixings.clone();
        zero[j] = Some(false);
        for child in [one, zero] {
            if let Some(sol) = solve_node(model, &child)? {
                pending.push((child, sol));
            }
        }
    }
    let (objective, actions) = incumbent.expect("root rounding provides an incumbent");
    let best_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    Ok(MilpSolution {
        policy: Policy::Deterministic(actions),
        objective,
        nodes_explored: nodes,
        gap: (best_bound - objective).max(0.0),
        complete: true,
        root_bound: Some(root_bound),
    })
}

/// Enumerates every deterministic policy and returns the best one for each
/// parameter setting (ties go to the lexicographically smallest action
/// vector).
pub fn brute_force_multi(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: &[SoftRobustParams],
) -> Result<Vec<MilpSolution>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if ensemble.num_states() != ns || ensemble.num_actions() != na {
        return Err(argument("ensemble dimensions do not match the MDP"));
    }
    let count = (na as u64).checked_pow(ns as u32).filter(|c| *c <= BRUTE_FORCE_LIMIT);
    let Some(count) = count else {
        return Err(Error::Unsupported(format!(
            "{na}^{ns} deterministic policies exceed the enumeration limit of {BRUTE_FORCE_LIMIT}"
        )));
    };
    let f = ensemble.weights();
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; params.len()];
    let mut walker = ReturnWalker::new(mdp, ensemble)?;
    let mut returns = vec![0.0; ensemble.len()];
    for k in 0..count {
        if k > 0 {
            walker.step(k)?;
        }
        walker.returns(&mut returns);
        for (p, slot) in params.iter().zip(best.iter_mut()) {
            let value = soft_robust_combine(&returns, f, *p)?;
            let replace = match slot {
                None => true,
                Some((v, acts)) => {
                    let tie = (value - *v).abs() <= 1e-12 * (1.0 + v.abs());
                    (value > *v && !tie) || (tie && walker.actions < *acts)
                }
            };
            if replace {
                *slot = Some((value, walker.actions.clone()));
            }
        }
    }
    best.into_iter()
        .zip(params)
        .map(|(slot, p)| {
            let (_, actions) = slot.expect("at least one policy");
            let policy = Policy::Deterministic(actions);
            let objective = risk::rho_s(mdp, ensemble, &policy, *p)?;
            Ok(MilpSolution { policy, objective, nodes_explored: count as usize, gap: 0.0, complete: true, root_bound: None })
        })
        .collect()
}

pub fn brute_force_deterministic(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    params: SoftRobustParams,
) -> Result<MilpSolution> {
    Ok(brute_force_multi(mdp, ensemble, &[params])?.remove(0))
}

/// Walks all deterministic policies in reflected mixed-radix Gray order, so
/// that consecutive policies differ in one state, and keeps
/// `(I - gamma P_pi)^-1` of every model current with rank-one updates.
struct ReturnWalker<'a> {
    mdp: &'a TabularMdp,
    ensemble: &'a ModelEnsemble,
    actions: Vec<usize>,
    /// per model: inverse matrix (row-major) and policy reward
    inverses: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    steps_since_refresh: usize,
}

const REFRESH_EVERY: usize = 256;

impl<'a> ReturnWalker<'a> {
    fn new(mdp: &'a TabularMdp, ensemble: &'a ModelEnsemble) -> Result<Self> {
        let mut w = ReturnWalker {
            mdp,
            ensemble,
            actions: vec![0; mdp.num_states()],
            inverses: Vec::new(),
            rewards: Vec::new(),
            steps_since_refresh: 0,
        };
        w.refresh()?;
        Ok(w)
    }

    fn refresh(&mut self) -> Result<()> {
        let n = self.mdp.num_states();
        let g = self.mdp.discount();
        self.inverses.clear();
        self.rewards.clear();
        for m in self.ensemble.models() {
            let mut a = vec![0.0; n * n];
            for s in 0..n {
                let row = m.row(s, self.actions[s]);
                for j in 0..n {
                    a[s * n + j] = -g * row[j];
                }
                a[s * n + s] += 1.0;
            }
            let lu = Lu::factor(a, n)?;
            let mut inv = vec![0.0; n * n];
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                let col = lu.solve(&e);
                e[j] = 0.0;
                for i in 0..n {
                    inv[i * n + j] = col[i];
                }
            }
            self.inverses.push(inv);
            self.rewards.push((0..n).map(|s| self.mdp.expected_reward(m, s, self.actions[s])).collect());
        }
        self.steps_since_refresh = 0;
        Ok(())
    }

    /// Gray digit `j` of index `k`.
    fn digit(&self, k: u64, j: usize) -> usize {
        let na = self.mdp.num_actions() as u64;
        // most significant digit is state 0
        let pos = (self.mdp.num_states() - 1 - j) as u32;
        let q = k / na.pow(pos);
        let d = q % na;
        let upper = q / na;
        (if upper % 2 == 1 { na - 1 - d } else { d }) as usize
    }

    fn step(&mut self, k: u64) -> Result<()> {
        let n = self.mdp.num_states();
        let s = (0..n).find(|&j| self.digit(k, j) != self.actions[j]).expect("Gray step changes one digit");
        let new_a = self.digit(k, s);
        let old_a = self.actions[s];
        self.actions[s] = new_a;
        self.steps_since_refresh += 1;
        if self.steps_since_refresh >= REFRESH_EVERY {
            return self.refresh();
        }
        let g = self.mdp.discount();
        let mut col = vec![0.0; n];
        let mut row = vec![0.0; n];
        for (w, m) in self.ensemble.models().iter().enumerate() {
            let inv = &mut self.inverses[w];
            // row s of (I - gamma P) changes by delta
            let delta: Vec<f64> = m.row(s, new_a).iter().zip(m.row(s, old_a)).map(|(p, q)| -g * (p - q)).collect();
            for i in 0..n {
                col[i] = inv[i * n + s];
            }
            row.iter_mut().for_each(|x| *x = 0.0);
            for (k2, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let src = &inv[k2 * n..(k2 + 1) * n];
                    row.iter_mut().zip(src).for_each(|(r, x)| *r += d * x);
                }
            }
            let denom = 1.0 + row[s];
            if denom.abs() < 1e-12 {
                return self.refresh();
            }
            for i in 0..n {
                let c = col[i] / denom;
                if c != 0.0 {
                    inv[i * n..(i + 1) * n].iter_mut().zip(&row).for_each(|(x, r)| *x -= c * r);
                }
            }
            self.rewards[w][s] = self.mdp.expected_reward(m, s, new_a);
        }
        Ok(())
    }

    fn returns(&self, out: &mut [f64]) {
        let n = self.mdp.num_states();
        let p0 = self.mdp.initial_dist();
        for (w, inv) in self.inverses.iter().enumerate() {
            let r = &self.rewards[w];
            let mut acc = 0.0;
            for i in 0..n {
                if p0[i] != 0.0 {
                    let v: f64 = inv[i * n..(i + 1) * n].iter().zip(r).map(|(a, b)| a * b).sum();
                    acc += p0[i] * v;
                }
            }
            out[w] = acc;
        }
    }
}
