//! Streaming variational Bayes and batch coordinate ascent.

use crate::error::Result;
use crate::models::{
    global_elbo_term, local_elbo_sum, local_step_with, sufficient_stats, ConjugateModel, GlobalState, Prior,
};

/// Assumed-density-filtering update: beliefs optimized against `λ_n`, then
/// `λ_{n+1} = λ_n + Σ E_φ[f]` with neither scaling nor decay. An empty
/// batch leaves `λ` unchanged.
pub fn svb_update<M: ConjugateModel>(
    model: &M,
    lambda: &GlobalState,
    prior: &Prior,
    items: &[M::Datum],
    local_iters: usize,
) -> Result<(GlobalState, Vec<M::Beliefs>)> {
    model.check_state(lambda)?;
    if items.is_empty() {
        return Ok((lambda.clone(), Vec::new()));
    }
    for x in items {
        model.check_datum(x)?;
    }
    let exp = model.expectations(lambda, prior)?;
    let beliefs = local_step_with(model, &exp, items, None, local_iters);
    let next = sufficient_stats(model, items, &beliefs)?.add_to(lambda)?;
    next.validate()?;
    Ok((next, beliefs))
}

/// Result of [`batch_vb`]: final parameters and the bound after every
/// iteration.
#[derive(Debug, Clone)]
pub struct BatchOutcome<B> {
    pub state: GlobalState,
    pub beliefs: Vec<B>,
    pub elbo: Vec<f64>,
}

/// Full coordinate ascent on a dataset held in memory: every iteration
/// updates all beliefs against the current λ (starting from the previous
/// beliefs) and then sets λ to its exact conditional optimum
/// `η + Σ_n E_φ[f]`. The recorded bound is non-decreasing.
pub fn batch_vb<M: ConjugateModel>(
    model: &M,
    init: &GlobalState,
    prior: &Prior,
    data: &[M::Datum],
    iters: usize,
    local_iters: usize,
) -> Result<BatchOutcome<M::Beliefs>> {
    model.check_state(init)?;
    for x in data {
        model.check_datum(x)?;
    }
    let mut state = init.clone();
    let mut beliefs: Option<Vec<M::Beliefs>> = None;
    let mut elbo = Vec::with_capacity(iters);
    for _ in 0..iters {
        let exp = model.expectations(&state, prior)?;
        let next = local_step_with(model, &exp, data, beliefs.as_deref(), local_iters);
        state = sufficient_stats(model, data, &next)?.target(prior, 1.0)?;
        let exp = model.expectations(&state, prior)?;
        elbo.push(local_elbo_sum(model, &exp, data, &next) + global_elbo_term(&state, prior)?);
        beliefs = Some(next);
    }
    Ok(BatchOutcome { state, beliefs: beliefs.unwrap_or_default(), elbo })
}
