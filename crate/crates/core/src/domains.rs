//! Benchmark environments: riverswim, a single-product inventory problem and
//! random Dirichlet MDPs, plus batch generation from a behavior policy.

use rand::Rng;

use crate::error::{argument, Result};
use crate::mdp::{Policy, TabularMdp, TransitionModel};
use crate::posterior::TransitionBatch;
use crate::rng::{self, derive_seed, stream_rng};

/// Discount used for random Dirichlet MDPs.
pub const RANDOM_MDP_DISCOUNT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RiverswimSpec {
    pub num_states: usize,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub gamma: f64,
    pub advance: f64,
    pub back: f64,
    pub stay: f64,
    /// Also pay the goal reward when an upstream swim stays in the last
    /// state; without it, leaving and re-entering the goal beats staying.
    pub goal_on_stay: bool,
}

impl Default for RiverswimSpec {
    fn default() -> Self {
        RiverswimSpec {
            num_states: 20,
            goal_reward: 100.0,
            step_reward: 5.0,
            gamma: 0.95,
            advance: 0.2,
            back: 0.5,
            stay: 0.3,
            goal_on_stay: true,
        }
    }
}

/// Action 0 drifts downstream, action 1 swims upstream.
pub fn riverswim() -> (TabularMdp, TransitionModel) {
    riverswim_with(&RiverswimSpec::default()).expect("default riverswim spec is valid")
}

pub fn riverswim_with(spec: &RiverswimSpec) -> Result<(TabularMdp, TransitionModel)> {
    let n = spec.num_states;
    if n < 2 {
        return Err(argument("riverswim needs at least two states"));
    }
    if (spec.advance + spec.back + spec.stay - 1.0).abs() > 1e-12 || [spec.advance, spec.back, spec.stay].iter().any(|p| *p < 0.0) {
        return Err(argument("upstream probabilities must form a distribution"));
    }
    let last = n - 1;
    let mut probs = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2 * n];
    for s in 0..n {
        let down = &mut probs[(s * 2) * n..(s * 2 + 1) * n];
        down[s.saturating_sub(1)] = 1.0;
        let up = &mut probs[(s * 2 + 1) * n..(s * 2 + 2) * n];
        up[s] += spec.stay;
        if s == last { up[s] += spec.advance } else { up[s + 1] += spec.advance }
        if s == 0 { up[s] += spec.back } else { up[s - 1] += spec.back }
        for a in 0..2 {
            for sp in 0..n {
                let r = &mut reward[(s * 2 + a) * n + sp];
                if sp == s + 1 {
                    *r += spec.step_reward;
                }
                if sp == last && (s != last || spec.goal_on_stay) {
                    *r += spec.goal_reward;
                }
            }
        }
    }
    let mdp = TabularMdp::new(n, 2, reward, spec.gamma, vec![1.0 / n as f64; n])?;
    Ok((mdp, TransitionModel::new(n, 2, probs)?))
}

/// Normalized state index, the declared feature of tabular domains.
pub fn index_feature(s: usize, num_states: usize) -> Vec<f64> {
    if num_states <= 1 {
        vec![0.0]
    } else {
        vec![s as f64 / (num_states - 1) as f64]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventorySpec {
    pub capacity: usize,
    pub max_order: usize,
    pub demand_max: usize,
    pub variable_cost: f64,
    pub purchase_price: f64,
    pub holding_cost: f64,
    /// Unused: unmet demand is lost.
    pub backlog_cost: f64,
    pub sale_price: f64,
    pub gamma: f64,
}

impl Default for InventorySpec {
    fn default() -> Self {
        InventorySpec {
            capacity: 50,
            max_order: 40,
            demand_max: 50,
            variable_cost: 2.49,
            purchase_price: 3.99,
            holding_cost: 0.1,
            backlog_cost: 0.15,
            sale_price: 4.99,
            gamma: 0.99,
        }
    }
}

impl InventorySpec {
    fn validate(&self) -> Result<()> {
        if self.max_order > self.capacity {
            return Err(argument("max_order exceeds capacity"));
        }
        if self.capacity == 0 {
            return Err(argument("capacity must be positive"));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.capacity + 1
    }

    pub fn num_actions(&self) -> usize {
        self.max_order + 1
    }

    pub fn order(&self, stock: usize, action: usize) -> usize {
        action.min(self.capacity - stock)
    }

    pub fn unit_cost(&self) -> f64 {
        self.purchase_price + self.variable_cost
    }

    /// Bound on the absolute one-step reward from the spec constants alone.
    pub fn reward_bound(&self) -> f64 {
        let cap = self.capacity as f64;
        (self.sale_price * cap).max(self.unit_cost() * self.max_order as f64 + self.holding_cost * cap)
    }
}

/// Poisson(rate) probabilities of `0..=max`, the tail folded into `max`.
pub fn truncated_poisson(rate: f64, max: usize) -> Vec<f64> {
    let ln_rate = rate.ln();
    let mut ln_fact = 0.0;
    let mut pmf = Vec::with_capacity(max + 1);
    for k in 0..max {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        pmf.push((k as f64 * ln_rate - rate - ln_fact).exp());
    }
    let head: f64 = pmf.iter().sum();
    pmf.push((1.0 - head).max(0.0));
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Rewards, discount and uniform initial stock distribution.
pub fn inventory_mdp(spec: &InventorySpec) -> Result<TabularMdp> {
    spec.validate()?;
    let (ns, na) = (spec.num_states(), spec.num_actions());
    let mut reward = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let order = spec.order(s, a);
            let avail = s + order;
            for sp in 0..=avail {
                let sold = (avail - sp) as f64;
                reward[(s * na + a) * ns + sp] = spec.sale_price * sold
                    - spec.unit_cost() * order as f64
                    - spec.holding_cost * sp as f64;
            }
        }
    }
    TabularMdp::new(ns, na, reward, spec.gamma, vec![1.0 / ns as f64; ns])?.with_r_max(spec.reward_bound())
}

pub fn inventory_transitions(spec: &InventorySpec, demand_rate: f64) -> Result<TransitionModel> {
    spec.validate()?;
    if !(demand_rate > 0.0 && demand_rate.is_finite()) {
        return Err(argument(format!("demand rate {demand_rate} must be positive")));
    }
    let (ns, na) = (spec.num_states(), spec.num_actions());
    let demand = truncated_poisson(demand_rate, spec.demand_max);
    let mut probs = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let avail = s + spec.order(s, a);
            let row = &mut probs[(s * na + a) * ns..(s * na + a + 1) * ns];
            for (d, p) in demand.iter().enumerate() {
                row[avail - d.min(avail)] += p;
            }
        }
    }
    TransitionModel::normalized(ns, na, probs)
}

pub fn inventory(spec: &InventorySpec, demand_rate: f64) -> Result<(TabularMdp, TransitionModel)> {
    Ok((inventory_mdp(spec)?, inventory_transitions(spec, demand_rate)?))
}

/// Random MDP: Dirichlet(1) rows, uniform [0, 1] rewards, uniform initial
/// distribution.
pub fn random_dirichlet_mdp(num_states: usize, num_actions: usize, seed: u64) -> Result<(TabularMdp, TransitionModel)> {
    if num_states == 0 || num_actions == 0 {
        return Err(argument("random MDP needs at least one state and one action"));
    }
    let (ns, na) = (num_states, num_actions);
    let mut rng = stream_rng(derive_seed(seed, 0x7261_6e64), 0);
    let mut probs = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        probs.extend(rng::dirichlet(&mut rng, &vec![1.0; ns]));
    }
    let mut rng = stream_rng(derive_seed(seed, 0x7261_6e64), 1);
    let reward = (0..ns * na * ns).map(|_| rng.gen::<f64>()).collect();
    let mdp = TabularMdp::new(ns, na, reward, RANDOM_MDP_DISCOUNT, vec![1.0 / ns as f64; ns])?;
    Ok((mdp, TransitionModel::normalized(ns, na, probs)?))
}

/// Follows the behavior policy on the model from `p0`, restarting every
/// `episode_length` steps, and records `n_samples` transitions.
pub fn generate_batch(
    model: &TransitionModel,
    behavior: &Policy,
    n_samples: usize,
    p0: &[f64],
    episode_length: usize,
    seed: u64,
) -> Result<TransitionBatch> {
    let (ns, na) = (model.num_states(), model.num_actions());
    behavior.validate(ns, na)?;
    if n_samples == 0 || episode_length == 0 {
        return Err(argument("batch size and episode length must be positive"));
    }
    if p0.len() != ns {
        return Err(argument("initial distribution has wrong length"));
    }
    let mut rng = stream_rng(derive_seed(seed, 0x6261_7463), 0);
    let mut samples = Vec::with_capacity(n_samples);
    let mut s = rng::categorical(&mut rng, p0);
    for t in 0..n_samples {
        if t > 0 && t % episode_length == 0 {
            s = rng::categorical(&mut rng, p0);
        }
        let a = rng::categorical(&mut rng, &behavior.action_probs(s, na));
        let sp = rng::categorical(&mut rng, model.row(s, a));
        samples.push((s, a, sp));
        s = sp;
    }
    TransitionBatch::new(ns, na, samples)
}
