//! VaR and CVaR of discrete return distributions, the soft-robust weight box
//! and the static / dynamic soft-robust objectives.

use crate::error::{argument, Error, Result};
use crate::mdp::{expected_return, return_distribution, Policy, TabularMdp, TransitionModel};
use crate::posterior::ModelEnsemble;

/// Confidence level `alpha` and risk weight `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftRobustParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl SoftRobustParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(argument(format!("alpha {alpha} not in [0, 1]")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(argument(format!("lambda {lambda} not in [0, 1]")));
        }
        Ok(SoftRobustParams { alpha, lambda })
    }
}

/// A finitely supported random variable.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteDist<'a> {
    values: &'a [f64],
    probs: &'a [f64],
}

impl<'a> DiscreteDist<'a> {
    pub fn new(values: &'a [f64], probs: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(argument("distribution has empty support"));
        }
        if values.len() != probs.len() {
            return Err(argument(format!("{} values but {} probabilities", values.len(), probs.len())));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(argument("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(argument(format!("probabilities sum to {total}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("values must be finite"));
        }
        Ok(DiscreteDist { values, probs })
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }
    pub fn probs(&self) -> &[f64] {
        self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(self.probs).map(|(v, p)| v * p).sum()
    }

    /// Indices sorted by value, ties by index.
    fn ascending(&self) -> Vec<usize> {
        ascending_order(self.values)
    }

    fn ess_inf(&self) -> f64 {
        self.values
            .iter()
            .zip(self.probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    idx
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(argument(format!("alpha {alpha} not in [0, 1]")));
    }
    Ok(())
}

/// Smallest support value whose cumulative probability reaches `1 - alpha`.
pub fn value_at_risk(dist: &DiscreteDist, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha;
    let mut cum = 0.0;
    let mut last = f64::NAN;
    for i in dist.ascending() {
        let p = dist.probs[i];
        if p == 0.0 {
            continue;
        }
        cum += p;
        last = dist.values[i];
        if cum >= level - 1e-12 {
            return Ok(last);
        }
    }
    Ok(last)
}

/// `max_b b - E[(b - Z)^+] / (1 - alpha)`; `alpha = 1` gives the essential
/// infimum.
pub fn cvar_primal(dist: &DiscreteDist, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(dist.ess_inf());
    }
    let scale = 1.0 / (1.0 - alpha);
    // objective is concave piecewise linear with kinks at the support values
    let mut best = f64::NEG_INFINITY;
    let (mut mass_below, mut sum_below) = (0.0, 0.0);
    for i in dist.ascending() {
        let b = dist.values[i];
        let obj = b - (b * mass_below - sum_below) * scale;
        best = best.max(obj);
        mass_below += dist.probs[i];
        sum_below += dist.probs[i] * b;
    }
    Ok(best)
}

/// `min { xi^T Z : xi in simplex, xi <= f / (1 - alpha) }` by filling the
/// smallest values first.
pub fn cvar_dual(dist: &DiscreteDist, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(dist.ess_inf());
    }
    let scale = 1.0 / (1.0 - alpha);
    let mut remaining = 1.0;
    let mut acc = 0.0;
    for i in dist.ascending() {
        if remaining <= 0.0 {
            break;
        }
        let take = (dist.probs[i] * scale).min(remaining);
        acc += take * dist.values[i];
        remaining -= take;
    }
    Ok(acc)
}

/// Box `lower <= xi <= upper` intersected with the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct XiBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub base_weights: Vec<f64>,
}

impl XiBox {
    pub fn len(&self) -> usize {
        self.lower.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    fn check(&self) -> Result<()> {
        let lo: f64 = self.lower.iter().sum();
        let hi: f64 = self.upper.iter().sum();
        if self.lower.len() != self.upper.len()
            || self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
            || lo > 1.0 + 1e-12
            || hi < 1.0 - 1e-12
        {
            return Err(argument(format!("empty weight box (sum lower {lo}, sum upper {hi})")));
        }
        Ok(())
    }
}

fn check_weights(f: &[f64]) -> Result<()> {
    if f.is_empty() || f.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(argument("weights must be a nonempty nonnegative vector"));
    }
    let total: f64 = f.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(argument(format!("weights sum to {total}")));
    }
    Ok(())
}

/// `(1 - lambda) f <= xi <= ((1 - alpha + lambda alpha) / (1 - alpha)) f`.
pub fn xi_box(f: &[f64], params: SoftRobustParams) -> Result<XiBox> {
    if params.alpha >= 1.0 {
        return Err(argument("alpha = 1 has no finite weight box; use the essential-infimum path"));
    }
    check_weights(f)?;
    let SoftRobustParams { alpha, lambda } = params;
    let factor = (1.0 - alpha + lambda * alpha) / (1.0 - alpha);
    let b = XiBox {
        lower: f.iter().map(|w| (1.0 - lambda) * w).collect(),
        upper: f.iter().map(|w| factor * w).collect(),
        base_weights: f.to_vec(),
    };
    b.check()?;
    Ok(b)
}

/// Same feasible set as [`xi_box`], with upper bounds tightened to
/// `lower + lambda` (never binding on the simplex) so that `alpha = 1` is
/// representable: the adversary may then move the whole `lambda` share onto
/// any model with positive weight.
pub(crate) fn soft_robust_box(f: &[f64], params: SoftRobustParams) -> Result<XiBox> {
    check_weights(f)?;
    let SoftRobustParams { alpha, lambda } = params;
    let upper = f
        .iter()
        .map(|&w| {
            let lo = (1.0 - lambda) * w;
            if w == 0.0 {
                0.0
            } else if alpha >= 1.0 {
                lo + lambda
            } else {
                ((1.0 - alpha + lambda * alpha) / (1.0 - alpha) * w).min(lo + lambda)
            }
        })
        .collect();
    let b = XiBox { lower: f.iter().map(|w| (1.0 - lambda) * w).collect(), upper, base_weights: f.to_vec() };
    b.check()?;
    Ok(b)
}

/// `min_{xi in box} xi^T values`, returning the objective and the minimizer.
pub fn xi_minimize(values: &[f64], b: &XiBox) -> Result<(f64, Vec<f64>)> {
    if values.len() != b.len() {
        return Err(argument(format!("{} values for a box of size {}", values.len(), b.len())));
    }
    b.check()?;
    let order = ascending_order(values);
    let mut xi = b.lower.clone();
    fill_ascending(&order, b, &mut xi);
    let obj = xi.iter().zip(values).map(|(x, v)| x * v).sum();
    Ok((obj, xi))
}

/// Objective of [`xi_minimize`] without allocating the minimizer; the box
/// is assumed valid.
pub(crate) fn xi_min_value(values: &[f64], b: &XiBox, order: &mut Vec<usize>) -> f64 {
    order.clear();
    order.extend(0..values.len());
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut remaining = 1.0 - b.lower.iter().sum::<f64>();
    let mut acc: f64 = b.lower.iter().zip(values).map(|(l, v)| l * v).sum();
    for &i in order.iter() {
        if remaining <= 0.0 {
            break;
        }
        let take = (b.upper[i] - b.lower[i]).min(remaining);
        acc += take * values[i];
        remaining -= take;
    }
    acc
}

fn fill_ascending(order: &[usize], b: &XiBox, xi: &mut [f64]) {
    let mut remaining = 1.0 - b.lower.iter().sum::<f64>();
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = (b.upper[i] - b.lower[i]).min(remaining);
        xi[i] += take;
        remaining -= take;
    }
}

/// `(1 - lambda) E_f[returns] + lambda CVaR_alpha[returns]`.
pub fn soft_robust_combine(returns: &[f64], f: &[f64], params: SoftRobustParams) -> Result<f64> {
    let dist = DiscreteDist::new(returns, f)?;
    let mean = dist.mean();
    if params.lambda == 0.0 {
        return Ok(mean);
    }
    Ok((1.0 - params.lambda) * mean + params.lambda * cvar_primal(&dist, params.alpha)?)
}

/// Static soft-robust return of a policy over the ensemble.
pub fn rho_s(mdp: &TabularMdp, ensemble: &ModelEnsemble, policy: &Policy, params: SoftRobustParams) -> Result<f64> {
    let returns = return_distribution(mdp, ensemble, policy)?;
    soft_robust_combine(&returns, ensemble.weights(), params)
}

/// Grid estimate of the dynamic objective `min_xi rho(pi, sum xi_w P^w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEstimate {
    /// Smallest return found; never below the true minimum.
    pub value: f64,
    /// Bound on `value - true minimum`.
    pub error: f64,
    /// Minimizing weights.
    pub xi: Vec<f64>,
}

/// Largest ensemble size accepted by [`rho_d_grid`].
pub const GRID_MAX_MODELS: usize = 4;

/// Evaluates the return at every point of a regular lattice of the simplex
/// (projected onto the CVaR weight set), then refines once around the best
/// point.
///
/// The error bound combines the lattice spacing with the Lipschitz constant
/// `r_max / (1 - gamma)^2` of the return in the mixture weights (L1 norm).
pub fn rho_d_grid(
    mdp: &TabularMdp,
    ensemble: &ModelEnsemble,
    policy: &Policy,
    params: SoftRobustParams,
    grid_resolution: usize,
) -> Result<GridEstimate> {
    let n = ensemble.len();
    if n > GRID_MAX_MODELS {
        return Err(Error::Unsupported(format!(
            "dynamic-objective grid supports at most {GRID_MAX_MODELS} models, got {n}"
        )));
    }
    if grid_resolution < 10 {
        return Err(argument("grid resolution must be at least 10"));
    }
    let f = ensemble.weights();
    let lambda = params.lambda;
    let eval_q = |q: &[f64]| -> Result<(f64, Vec<f64>)> {
        let xi: Vec<f64> = f.iter().zip(q).map(|(w, qi)| (1.0 - lambda) * w + lambda * qi).collect();
        let model = TransitionModel::mixture(ensemble.models(), &xi)?;
        Ok((expected_return(mdp, &model, policy)?, xi))
    };
    if n == 1 || lambda == 0.0 {
        let (value, xi) = eval_q(f)?;
        return Ok(GridEstimate { value, error: 0.0, xi });
    }
    let caps: Vec<f64> = f
        .iter()
        .map(|&w| if w == 0.0 { 0.0 } else if params.alpha >= 1.0 { 1.0 } else { (w / (1.0 - params.alpha)).min(1.0) })
        .collect();
    let k = grid_resolution;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let consider = |q: Vec<f64>, best: &mut Option<(f64, Vec<f64>, Vec<f64>)>| -> Result<()> {
        let (v, xi) = eval_q(&q)?;
        if best.as_ref().map_or(true, |b| v < b.0) {
            *best = Some((v, xi, q));
        }
        Ok(())
    };
    for p in simplex_lattice(n, k) {
        consider(project_capped_simplex(&p, &caps), &mut best)?;
    }
    let center = 1.0 / n as f64;
    let step = 2.0 / k as f64;
    let incumbent = best.as_ref().expect("lattice is nonempty").2.clone();
    for p in simplex_lattice(n, k) {
        let shifted: Vec<f64> = incumbent.iter().zip(&p).map(|(q, pi)| q + step * (pi - center)).collect();
        consider(project_capped_simplex(&shifted, &caps), &mut best)?;
    }
    let (value, xi, _) = best.expect("lattice is nonempty");
    let lipschitz = mdp.r_max() / (1.0 - mdp.discount()).powi(2);
    let error = lipschitz * lambda * n as f64 / k as f64;
    Ok(GridEstimate { value, error, xi })
}

/// All points of the simplex with coordinates in `{0, 1/k, ..., 1}`.
pub(crate) fn simplex_lattice(n: usize, k: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(cur.iter().map(|c| *c as f64 / k as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, k, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Euclidean projection onto `{q in simplex : q <= caps}` (requires
/// `sum caps >= 1`).
pub(crate) fn project_capped_simplex(p: &[f64], caps: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| -> f64 { p.iter().zip(caps).map(|(x, c)| (x - tau).clamp(0.0, *c)).sum() };
    let mut lo = p.iter().zip(caps).map(|(x, c)| x - c).fold(f64::INFINITY, f64::min);
    let mut hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut q: Vec<f64> = p.iter().zip(caps).map(|(x, c)| (x - lo).clamp(0.0, *c)).collect();
    // remove the bisection residue from coordinates strictly inside their caps
    let excess: f64 = q.iter().sum::<f64>() - 1.0;
    let free: Vec<usize> = (0..q.len()).filter(|&i| q[i] > 0.0 && q[i] < caps[i]).collect();
    if !free.is_empty() {
        let share = excess / free.len() as f64;
        for i in free {
            q[i] = (q[i] - share).clamp(0.0, caps[i]);
        }
    }
    q
}
