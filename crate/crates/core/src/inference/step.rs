//! Natural-gradient and trust-region updates of the global parameters.

use crate::error::{Error, Result};
use crate::models::{
    expected_stats, local_step_with, uniform_beliefs, Batch, ConjugateModel, GlobalState, Prior,
};
use serde::{Deserialize, Serialize};

/// How the local beliefs are initialized at the start of a trust-region step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Uniform beliefs over the latent variables; the first λ is computed
    /// from them directly.
    UniformBeliefs,
    /// Beliefs optimized against the current λ_t.
    CarryOver,
    /// Beliefs optimized against λ_t followed by a single λ update, which
    /// reproduces the natural-gradient step.
    NaturalGradientEquivalent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    /// Number of λ updates `m`.
    pub inner_iters: usize,
    /// Local-step iterations `M` per belief update.
    pub local_iters: usize,
    pub init: InitStrategy,
    /// Stop the inner loop early once `‖Δλ‖/‖λ‖` falls below this.
    #[serde(default)]
    pub tol: Option<f64>,
}

impl TrustRegionConfig {
    pub fn new(inner_iters: usize, local_iters: usize, init: InitStrategy) -> Self {
        Self { inner_iters, local_iters, init, tol: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_iters == 0 || self.local_iters == 0 {
            return Err(Error::usage("trust-region iteration counts must be at least 1"));
        }
        if let Some(tol) = self.tol {
            if !(tol >= 0.0) {
                return Err(Error::usage("trust-region tolerance must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Stochastic update rule for the global parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    NaturalGradient { local_iters: usize },
    TrustRegion(TrustRegionConfig),
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match self {
            Method::NaturalGradient { local_iters: 0 } => {
                Err(Error::usage("local iterations must be at least 1"))
            }
            Method::NaturalGradient { .. } => Ok(()),
            Method::TrustRegion(cfg) => cfg.validate(),
        }
    }

    /// Local-step iterations used when evaluating the bound.
    pub fn local_iters(&self) -> usize {
        match self {
            Method::NaturalGradient { local_iters } => *local_iters,
            Method::TrustRegion(cfg) => cfg.local_iters,
        }
    }
}

/// New global parameters together with the beliefs that produced them.
#[derive(Debug, Clone)]
pub struct StepOutcome<B> {
    pub state: GlobalState,
    pub beliefs: Vec<B>,
    /// Number of λ updates performed.
    pub lambda_updates: usize,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::usage(format!("learning rate must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

/// `λ_{t+1} = (1 − ρ) λ_t + ρ η̂`
pub fn natural_gradient_step(lambda_t: &GlobalState, eta_hat: &GlobalState, rho: f64) -> Result<GlobalState> {
    check_rho(rho)?;
    lambda_t.interpolate(eta_hat, rho)
}

/// Beliefs optimized against `λ_t` followed by one natural-gradient step.
pub fn svi_natural_gradient<M: ConjugateModel>(
    model: &M,
    lambda_t: &GlobalState,
    prior: &Prior,
    batch: &Batch<M::Datum>,
    rho: f64,
    local_iters: usize,
) -> Result<StepOutcome<M::Beliefs>> {
    check_rho(rho)?;
    let beliefs = optimized_beliefs(model, lambda_t, prior, batch, local_iters)?;
    let eta_hat = expected_stats(model, prior, batch, &beliefs)?;
    let state = natural_gradient_step(lambda_t, &eta_hat, rho)?;
    Ok(StepOutcome { state, beliefs, lambda_updates: 1 })
}

fn optimized_beliefs<M: ConjugateModel>(
    model: &M,
    state: &GlobalState,
    prior: &Prior,
    batch: &Batch<M::Datum>,
    local_iters: usize,
) -> Result<Vec<M::Beliefs>> {
    model.check_state(state)?;
    for x in &batch.items {
        model.check_datum(x)?;
    }
    let exp = model.expectations(state, prior)?;
    Ok(local_step_with(model, &exp, &batch.items, None, local_iters))
}

/// Approximately maximizes `L_n(λ) − ξ_t D_KL(λ, λ_t)` with `ρ_t = 1/(1 + ξ_t)`
/// by alternating λ interpolations and local steps. The loop ends on a λ
/// update.
pub fn trust_region_step<M: ConjugateModel>(
    model: &M,
    lambda_t: &GlobalState,
    prior: &Prior,
    batch: &Batch<M::Datum>,
    rho: f64,
    cfg: &TrustRegionConfig,
) -> Result<StepOutcome<M::Beliefs>> {
    check_rho(rho)?;
    cfg.validate()?;
    let (mut beliefs, iters) = match cfg.init {
        InitStrategy::UniformBeliefs => {
            model.check_state(lambda_t)?;
            for x in &batch.items {
                model.check_datum(x)?;
            }
            (uniform_beliefs(model, &batch.items), cfg.inner_iters)
        }
        InitStrategy::CarryOver => {
            (optimized_beliefs(model, lambda_t, prior, batch, cfg.local_iters)?, cfg.inner_iters)
        }
        InitStrategy::NaturalGradientEquivalent => {
            (optimized_beliefs(model, lambda_t, prior, batch, cfg.local_iters)?, 1)
        }
    };
    let mut lambda = lambda_t.clone();
    let mut updates = 0;
    for i in 0..iters {
        let eta_hat = expected_stats(model, prior, batch, &beliefs)?;
        let next = natural_gradient_step(lambda_t, &eta_hat, rho)?;
        updates += 1;
        let converged = cfg.tol.is_some_and(|tol| relative_change(&lambda, &next) < tol);
        lambda = next;
        if converged || i + 1 == iters {
            break;
        }
        let exp = model.expectations(&lambda, prior)?;
        beliefs = local_step_with(model, &exp, &batch.items, Some(&beliefs), cfg.local_iters);
    }
    Ok(StepOutcome { state: lambda, beliefs, lambda_updates: updates })
}

fn relative_change(old: &GlobalState, new: &GlobalState) -> f64 {
    let (a, b) = (old.flatten(), new.flatten());
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = a.iter().map(|x| x * x).sum();
    (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
}

/// One stochastic update with the given method.
pub fn svi_step<M: ConjugateModel>(
    model: &M,
    lambda_t: &GlobalState,
    prior: &Prior,
    batch: &Batch<M::Datum>,
    rho: f64,
    method: &Method,
) -> Result<StepOutcome<M::Beliefs>> {
    match method {
        Method::NaturalGradient { local_iters } => {
            svi_natural_gradient(model, lambda_t, prior, batch, rho, *local_iters)
        }
        Method::TrustRegion(cfg) => trust_region_step(model, lambda_t, prior, batch, rho, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::NaturalParams;

    fn state(values: Vec<f64>) -> GlobalState {
        GlobalState { components: vec![NaturalParams::dirichlet(values).unwrap()], weights: None }
    }

    #[test]
    fn convex_combination_examples() {
        let a = state(vec![2.0, 2.0]);
        let b = state(vec![4.0, 6.0]);
        assert_eq!(natural_gradient_step(&a, &b, 0.5).unwrap(), state(vec![3.0, 4.0]));
        assert_eq!(natural_gradient_step(&a, &b, 0.0).unwrap(), a);
        assert_eq!(natural_gradient_step(&a, &b, 1.0).unwrap(), b);
        assert!(natural_gradient_step(&a, &b, 1.5).is_err());
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let a = state(vec![2.0, 2.0]);
        let b = state(vec![4.0, 6.0, 1.0]);
        assert!(matches!(natural_gradient_step(&a, &b, 0.5), Err(Error::Usage(_))));
    }
}
