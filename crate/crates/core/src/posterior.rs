//! Posterior ensembles over transition models built from logged transitions.

use crate::domains::{self, InventorySpec};
use crate::error::{argument, Result};
use crate::mdp::TransitionModel;
use crate::rng::{self, derive_seed, stream_rng};

/// Logged `(s, a, s')` triples together with their count tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    num_states: usize,
    num_actions: usize,
    samples: Vec<(usize, usize, usize)>,
    counts: Vec<u64>,
}

impl TransitionBatch {
    pub fn new(num_states: usize, num_actions: usize, samples: Vec<(usize, usize, usize)>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(argument("batch needs at least one state and one action"));
        }
        let mut counts = vec![0u64; num_states * num_actions * num_states];
        for (i, &(s, a, sp)) in samples.iter().enumerate() {
            if s >= num_states || a >= num_actions || sp >= num_states {
                return Err(argument(format!("sample {i} ({s}, {a}, {sp}) out of range")));
            }
            counts[(s * num_actions + a) * num_states + sp] += 1;
        }
        Ok(TransitionBatch { num_states, num_actions, samples, counts })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn samples(&self) -> &[(usize, usize, usize)] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_row(&self, s: usize, a: usize) -> &[u64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.counts[start..start + self.num_states]
    }

    /// Concatenation of two batches over the same spaces.
    pub fn merged(&self, other: &TransitionBatch) -> Result<Self> {
        if self.num_states != other.num_states || self.num_actions != other.num_actions {
            return Err(argument("cannot merge batches with different dimensions"));
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Self::new(self.num_states, self.num_actions, samples)
    }
}

/// `N` transition models with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnsemble {
    models: Vec<TransitionModel>,
    weights: Vec<f64>,
}

impl ModelEnsemble {
    pub fn new(models: Vec<TransitionModel>, weights: Vec<f64>) -> Result<Self> {
        let first = models.first().ok_or_else(|| argument("ensemble needs at least one model"))?;
        if weights.len() != models.len() {
            return Err(argument(format!("{} weights for {} models", weights.len(), models.len())));
        }
        if models.iter().any(|m| m.num_states() != first.num_states() || m.num_actions() != first.num_actions()) {
            return Err(argument("ensemble models must share dimensions"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(argument("ensemble weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(argument(format!("ensemble weights sum to {total}")));
        }
        Ok(ModelEnsemble { models, weights })
    }

    pub fn uniform(models: Vec<TransitionModel>) -> Result<Self> {
        let n = models.len();
        Self::new(models, vec![1.0 / n as f64; n])
    }

    pub fn single(model: TransitionModel) -> Self {
        ModelEnsemble { models: vec![model], weights: vec![1.0] }
    }

    pub fn models(&self) -> &[TransitionModel] {
        &self.models
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.models.len()
    }
    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
    pub fn num_states(&self) -> usize {
        self.models[0].num_states()
    }
    pub fn num_actions(&self) -> usize {
        self.models[0].num_actions()
    }

    /// `sum_w f_w P^w`.
    pub fn mean_model(&self) -> Result<TransitionModel> {
        TransitionModel::mixture(&self.models, &self.weights)
    }
}

/// Concentration parameters of independent Dirichlet rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPosterior {
    num_states: usize,
    num_actions: usize,
    alpha: Vec<f64>,
}

impl DirichletPosterior {
    pub fn new(num_states: usize, num_actions: usize, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != num_states * num_actions * num_states {
            return Err(argument("concentration tensor has wrong size"));
        }
        if alpha.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(argument("concentrations must be positive"));
        }
        Ok(DirichletPosterior { num_states, num_actions, alpha })
    }

    pub fn alpha_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.alpha[start..start + self.num_states]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Adds the counts of another batch (conjugate update).
    pub fn updated(&self, batch: &TransitionBatch) -> Result<Self> {
        if batch.num_states != self.num_states || batch.num_actions != self.num_actions {
            return Err(argument("batch dimensions do not match posterior"));
        }
        let alpha = self.alpha.iter().zip(&batch.counts).map(|(a, c)| a + *c as f64).collect();
        Ok(DirichletPosterior { alpha, ..self.clone() })
    }

    pub fn mean_model(&self) -> Result<TransitionModel> {
        let n = self.num_states;
        let mut probs = self.alpha.clone();
        for row in probs.chunks_mut(n) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        TransitionModel::normalized(n, self.num_actions, probs)
    }
}

/// Posterior over a Poisson rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(argument("gamma shape and rate must be positive"));
        }
        Ok(GammaPosterior { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

pub fn dirichlet_from_batch(batch: &TransitionBatch, prior_concentration: f64) -> Result<DirichletPosterior> {
    if !(prior_concentration > 0.0 && prior_concentration.is_finite()) {
        return Err(argument("prior concentration must be positive"));
    }
    let alpha = batch.counts.iter().map(|c| prior_concentration + *c as f64).collect();
    DirichletPosterior::new(batch.num_states, batch.num_actions, alpha)
}

/// Draws `n_models` models with every `(s, a)` row from its own Dirichlet.
///
/// Row `(s, a)` of model `w` uses RNG stream `w*S*A + s*A + a`, so each
/// draw is independent of how many other rows or models are sampled.
pub fn sample_ensemble(posterior: &DirichletPosterior, n_models: usize, seed: u64) -> Result<ModelEnsemble> {
    if n_models == 0 {
        return Err(argument("need at least one model"));
    }
    let (ns, na) = (posterior.num_states, posterior.num_actions);
    let base = derive_seed(seed, 0x6469_7269);
    let mut models = Vec::with_capacity(n_models);
    for w in 0..n_models {
        let mut probs = Vec::with_capacity(ns * na * ns);
        for s in 0..ns {
            for a in 0..na {
                let mut rng = stream_rng(base, (w * ns * na + s * na + a) as u64);
                probs.extend(rng::dirichlet(&mut rng, posterior.alpha_row(s, a)));
            }
        }
        models.push(TransitionModel::normalized(ns, na, probs)?);
    }
    ModelEnsemble::uniform(models)
}

pub fn gamma_poisson_from_demands(demands: &[u64], prior_shape: f64, prior_scale: f64) -> Result<GammaPosterior> {
    if !(prior_shape > 0.0 && prior_scale > 0.0) {
        return Err(argument("prior shape and scale must be positive"));
    }
    let total: u64 = demands.iter().sum();
    GammaPosterior::new(prior_shape + total as f64, 1.0 / prior_scale + demands.len() as f64)
}

/// Samples demand rates and builds one inventory model per rate.
pub fn sample_demand_ensemble(
    posterior: &GammaPosterior,
    n_models: usize,
    seed: u64,
    spec: &InventorySpec,
) -> Result<ModelEnsemble> {
    let rates = sample_demand_rates(posterior, n_models, seed)?;
    let models = rates.iter().map(|&r| domains::inventory_transitions(spec, r)).collect::<Result<Vec<_>>>()?;
    ModelEnsemble::uniform(models)
}

pub fn sample_demand_rates(posterior: &GammaPosterior, n_models: usize, seed: u64) -> Result<Vec<f64>> {
    if n_models == 0 {
        return Err(argument("need at least one model"));
    }
    let base = derive_seed(seed, 0x6761_6d6d);
    Ok((0..n_models)
        .map(|w| {
            let mut rng = stream_rng(base, w as u64);
            // a zero draw is possible only through underflow
            (rng::gamma(&mut rng, posterior.shape) / posterior.rate).max(f64::MIN_POSITIVE)
        })
        .collect())
}

/// Row used for state-action pairs that never appear in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    Uniform,
    SelfLoop,
}

pub fn empirical_model(batch: &TransitionBatch, fallback: Fallback) -> Result<TransitionModel> {
    let (ns, na) = (batch.num_states, batch.num_actions);
    let mut probs = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            let row = batch.count_row(s, a);
            let total: u64 = row.iter().sum();
            if total > 0 {
                probs.extend(row.iter().map(|c| *c as f64 / total as f64));
            } else {
                match fallback {
                    Fallback::Uniform => probs.extend(std::iter::repeat(1.0 / ns as f64).take(ns)),
                    Fallback::SelfLoop => probs.extend((0..ns).map(|sp| if sp == s { 1.0 } else { 0.0 })),
                }
            }
        }
    }
    TransitionModel::normalized(ns, na, probs)
}
