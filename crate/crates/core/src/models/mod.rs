//! Conjugate model plugins.
//!
//! Every model exposes the same contract to the inference engine: given the
//! global variational parameters it computes per-datum local beliefs, turns
//! beliefs into expected sufficient statistics, and scores the stochastic
//! evidence lower bound. The engine never looks inside a model's local
//! beliefs.

use crate::error::{Error, Result};
use crate::expfam::{kl_divergence, FamilySpec, NaturalParams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub mod bernoulli_mix;
pub mod gaussian_mix;
pub mod lda;
mod mixture;

pub use bernoulli_mix::{bernoulli_expected_loglik, BernoulliLikelihood, BernoulliMixture};
pub use gaussian_mix::{gaussian_expected_loglik, GaussianLikelihood, GaussianMixture};
pub use lda::{DocBeliefs, Document, Lda, LdaConfig};
pub use mixture::{ComponentLikelihood, Mixture, MixtureConfig, Responsibilities};

/// Batches at least this large run their local steps on the rayon pool.
const PARALLEL_MIN: usize = 32;

/// Prior natural parameters: the component prior η shared by every
/// component, and the K-dimensional Dirichlet α over mixture weights (for
/// mixtures) or per-document topic proportions (for LDA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub component: NaturalParams,
    pub weights: NaturalParams,
}

/// Global variational parameters: one natural-parameter vector per
/// component plus, for mixtures, the Dirichlet over mixture weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub components: Vec<NaturalParams>,
    pub weights: Option<NaturalParams>,
}

impl GlobalState {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
        }
        if let Some(w) = &self.weights {
            w.validate()?;
            if w.values().len() != self.components.len() {
                return Err(Error::usage("weight Dirichlet does not match component count"));
            }
        }
        Ok(())
    }

    /// `(1 − ρ) self + ρ target` for every block, in natural coordinates.
    pub fn interpolate(&self, target: &GlobalState, rho: f64) -> Result<GlobalState> {
        if self.components.len() != target.components.len()
            || self.weights.is_some() != target.weights.is_some()
        {
            return Err(Error::usage("global states differ in shape"));
        }
        let components = self
            .components
            .iter()
            .zip(&target.components)
            .map(|(a, b)| a.interpolate(b, rho))
            .collect::<Result<_>>()?;
        let weights = match (&self.weights, &target.weights) {
            (Some(a), Some(b)) => Some(a.interpolate(b, rho)?),
            _ => None,
        };
        Ok(GlobalState { components, weights })
    }

    /// All natural parameters concatenated (components first, then weights).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.components.iter().flat_map(|c| c.values().iter().copied()).collect();
        if let Some(w) = &self.weights {
            out.extend_from_slice(w.values());
        }
        out
    }
}

/// Unscaled expected sufficient statistics `Σ_n E_φ[f(x_n, z_n)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub components: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl Stats {
    pub fn zeros(k: usize, component_len: usize, with_weights: bool) -> Self {
        Self { components: vec![vec![0.0; component_len]; k], weights: with_weights.then(|| vec![0.0; k]) }
    }

    /// The conditional optimum `η + scale · stats`, shaped like a global state.
    pub fn target(&self, prior: &Prior, scale: f64) -> Result<GlobalState> {
        let family = prior.component.family();
        let components = self
            .components
            .iter()
            .map(|s| {
                let values = prior.component.values().iter().zip(s).map(|(e, s)| e + scale * s).collect();
                NaturalParams::from_raw(family, values)
            })
            .collect::<Result<_>>()?;
        let weights = match &self.weights {
            Some(w) => {
                let values = prior.weights.values().iter().zip(w).map(|(a, s)| a + scale * s).collect();
                Some(NaturalParams::from_raw(prior.weights.family(), values)?)
            }
            None => None,
        };
        Ok(GlobalState { components, weights })
    }

    /// `state + stats`, the assumed-density-filtering update.
    pub fn add_to(&self, state: &GlobalState) -> Result<GlobalState> {
        let add = |p: &NaturalParams, s: &[f64]| {
            let values = p.values().iter().zip(s).map(|(a, b)| a + b).collect();
            NaturalParams::from_raw(p.family(), values)
        };
        let components =
            state.components.iter().zip(&self.components).map(|(p, s)| add(p, s)).collect::<Result<_>>()?;
        let weights = match (&state.weights, &self.weights) {
            (Some(p), Some(s)) => Some(add(p, s)?),
            (None, None) => None,
            _ => return Err(Error::usage("statistics and state differ in shape")),
        };
        Ok(GlobalState { components, weights })
    }
}

/// A minibatch drawn from a dataset of `scale_n` records.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<X> {
    pub items: Vec<X>,
    pub scale_n: f64,
}

impl<X> Batch<X> {
    pub fn new(items: Vec<X>, scale_n: f64) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::usage("batch must contain at least one record"));
        }
        if !(scale_n >= items.len() as f64) {
            return Err(Error::usage(format!(
                "dataset size {scale_n} is smaller than the batch size {}",
                items.len()
            )));
        }
        Ok(Self { items, scale_n })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `N / B`
    pub fn scale(&self) -> f64 {
        self.scale_n / self.items.len() as f64
    }
}

/// Model contract consumed by the inference engine.
pub trait ConjugateModel: Sync {
    /// One observation.
    type Datum: Clone + Send + Sync;
    /// Local beliefs about one observation's latent variables.
    type Beliefs: Clone + Send + Sync + PartialEq + std::fmt::Debug;
    /// Per-state tables shared by all local computations (expected log
    /// parameters and the like).
    type Expectations: Sync;

    fn num_components(&self) -> usize;
    fn component_family(&self) -> FamilySpec;
    /// Whether the global state carries a mixture-weight Dirichlet.
    fn has_global_weights(&self) -> bool;
    /// Prior the model was configured with.
    fn prior(&self) -> Prior;
    fn check_datum(&self, x: &Self::Datum) -> Result<()>;

    fn expectations(&self, state: &GlobalState, prior: &Prior) -> Result<Self::Expectations>;
    fn uniform_beliefs(&self, x: &Self::Datum) -> Self::Beliefs;
    /// Coordinate ascent on one datum's beliefs, starting from `init`.
    fn local_update(
        &self,
        exp: &Self::Expectations,
        x: &Self::Datum,
        init: &Self::Beliefs,
        iters: usize,
    ) -> Self::Beliefs;
    /// `E_q[log p(x, z | β) − log q(z)]` for one datum.
    fn local_elbo(&self, exp: &Self::Expectations, x: &Self::Datum, b: &Self::Beliefs) -> f64;
    /// Adds `E_φ[f(x, z)]` for one datum into `stats`.
    fn accumulate(&self, x: &Self::Datum, b: &Self::Beliefs, stats: &mut Stats);
    /// Per-component share of the datum's responsibility (sums to one).
    fn component_mass(&self, b: &Self::Beliefs) -> Vec<f64>;
    /// The datum's local Dirichlet over components, if the model has one.
    fn local_dirichlet<'b>(&self, _b: &'b Self::Beliefs) -> Option<&'b [f64]> {
        None
    }
    /// Random initial global state.
    fn init_state<R: Rng>(&self, data: &[Self::Datum], rng: &mut R) -> Result<GlobalState>;

    fn check_state(&self, state: &GlobalState) -> Result<()> {
        if state.num_components() != self.num_components() {
            return Err(Error::usage(format!(
                "state has {} components, model expects {}",
                state.num_components(),
                self.num_components()
            )));
        }
        if state.components.iter().any(|c| c.family() != self.component_family()) {
            return Err(Error::usage("state component family does not match the model"));
        }
        if state.weights.is_some() != self.has_global_weights() {
            return Err(Error::usage("state weight block does not match the model"));
        }
        Ok(())
    }
}

fn map_items<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    if items.len() >= PARALLEL_MIN {
        items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    } else {
        items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
}

/// Local step for every item of a batch. `init` must hold one entry per
/// item; pass `None` to start from uniform beliefs.
pub fn local_step<M: ConjugateModel>(
    model: &M,
    state: &GlobalState,
    prior: &Prior,
    items: &[M::Datum],
    init: Option<&[M::Beliefs]>,
    iters: usize,
) -> Result<Vec<M::Beliefs>> {
    model.check_state(state)?;
    if let Some(init) = init {
        if init.len() != items.len() {
            return Err(Error::usage("initial beliefs do not match the batch"));
        }
    }
    for x in items {
        model.check_datum(x)?;
    }
    let exp = model.expectations(state, prior)?;
    Ok(local_step_with(model, &exp, items, init, iters))
}

pub(crate) fn local_step_with<M: ConjugateModel>(
    model: &M,
    exp: &M::Expectations,
    items: &[M::Datum],
    init: Option<&[M::Beliefs]>,
    iters: usize,
) -> Vec<M::Beliefs> {
    map_items(items, |i, x| match init {
        Some(init) => model.local_update(exp, x, &init[i], iters),
        None => model.local_update(exp, x, &model.uniform_beliefs(x), iters),
    })
}

pub fn uniform_beliefs<M: ConjugateModel>(model: &M, items: &[M::Datum]) -> Vec<M::Beliefs> {
    items.iter().map(|x| model.uniform_beliefs(x)).collect()
}

/// Sums `E_φ[f(x_n, z_n)]` over the items in order.
pub fn sufficient_stats<M: ConjugateModel>(
    model: &M,
    items: &[M::Datum],
    beliefs: &[M::Beliefs],
) -> Result<Stats> {
    if items.len() != beliefs.len() {
        return Err(Error::usage("beliefs do not match the batch"));
    }
    let mut stats = Stats::zeros(
        model.num_components(),
        model.component_family().param_len(),
        model.has_global_weights(),
    );
    for (x, b) in items.iter().zip(beliefs) {
        model.accumulate(x, b, &mut stats);
    }
    Ok(stats)
}

/// `η̂ = η + (N/B) Σ_n E_φ[f(x_n, z_n)]`, the conditional optimum of the
/// stochastic bound given the beliefs.
pub fn expected_stats<M: ConjugateModel>(
    model: &M,
    prior: &Prior,
    batch: &Batch<M::Datum>,
    beliefs: &[M::Beliefs],
) -> Result<GlobalState> {
    sufficient_stats(model, &batch.items, beliefs)?.target(prior, batch.scale())
}

/// `E_q[log p(β)/q(β)]` (plus the weight term for mixtures).
pub fn global_elbo_term(state: &GlobalState, prior: &Prior) -> Result<f64> {
    let mut total = 0.0;
    for c in &state.components {
        total -= kl_divergence(c, &prior.component)?;
    }
    if let Some(w) = &state.weights {
        total -= kl_divergence(w, &prior.weights)?;
    }
    Ok(total)
}

/// Unbiased stochastic ELBO `(N/B) Σ_n E_q[log p(x_n, z_n|β)/q(z_n)] +
/// E_q[log p(β)/q(β)]`.
pub fn elbo_estimate<M: ConjugateModel>(
    model: &M,
    state: &GlobalState,
    prior: &Prior,
    beliefs: &[M::Beliefs],
    batch: &Batch<M::Datum>,
) -> Result<f64> {
    if beliefs.len() != batch.len() {
        return Err(Error::usage("beliefs do not match the batch"));
    }
    model.check_state(state)?;
    let exp = model.expectations(state, prior)?;
    let local = local_elbo_sum(model, &exp, &batch.items, beliefs);
    Ok(batch.scale() * local + global_elbo_term(state, prior)?)
}

pub(crate) fn local_elbo_sum<M: ConjugateModel>(
    model: &M,
    exp: &M::Expectations,
    items: &[M::Datum],
    beliefs: &[M::Beliefs],
) -> f64 {
    let terms = map_items(items, |i, x| model.local_elbo(exp, x, &beliefs[i]));
    terms.iter().sum()
}

/// Full-data bound with locally optimal beliefs (uniform start, `iters`
/// local iterations).
pub fn full_elbo<M: ConjugateModel>(
    model: &M,
    state: &GlobalState,
    prior: &Prior,
    data: &[M::Datum],
    iters: usize,
) -> Result<f64> {
    model.check_state(state)?;
    let exp = model.expectations(state, prior)?;
    let beliefs = local_step_with(model, &exp, data, None, iters);
    Ok(local_elbo_sum(model, &exp, data, &beliefs) + global_elbo_term(state, prior)?)
}

/// Numerically stable in-place softmax; returns the log normalizer.
pub(crate) fn softmax_in_place(scores: &mut [f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
    max + total.ln()
}

/// `−Σ p log p` with `0 log 0 = 0`.
pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
