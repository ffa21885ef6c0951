//! Empirical-Bayes updates of the prior.

use crate::error::{Error, Result};
use crate::expfam::{mean_sufficient_stats, FamilySpec, NaturalParams};
use crate::models::{ConjugateModel, GlobalState, Prior};
use serde::{Deserialize, Serialize};

/// Entries of Dirichlet and Beta priors are kept at or above this value.
pub const PRIOR_FLOOR: f64 = 1e-6;

/// What happened to one prior block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EbReport {
    /// Entries clamped to [`PRIOR_FLOOR`].
    pub projected: usize,
    /// Whether an invalid NIW step was discarded.
    pub rejected: bool,
}

impl EbReport {
    fn merge(self, other: EbReport) -> EbReport {
        EbReport { projected: self.projected + other.projected, rejected: self.rejected || other.rejected }
    }
}

/// `η ← η + ρ(avg_k E_{λ_k}[t] − E_η[t])`, projected back into the domain.
pub fn empirical_bayes_step(
    eta: &NaturalParams,
    targets: &[NaturalParams],
    rho: f64,
) -> Result<(NaturalParams, EbReport)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::usage(format!("learning rate must lie in [0, 1], got {rho}")));
    }
    if targets.is_empty() {
        return Ok((eta.clone(), EbReport::default()));
    }
    let mut avg = vec![0.0; eta.values().len()];
    for t in targets {
        if t.family() != eta.family() {
            return Err(Error::usage("prior and posterior families differ"));
        }
        for (a, v) in avg.iter_mut().zip(mean_sufficient_stats(t)?) {
            *a += v;
        }
    }
    let n = targets.len() as f64;
    let base = mean_sufficient_stats(eta)?;
    let mut values: Vec<f64> =
        eta.values().iter().zip(&avg).zip(&base).map(|((e, a), b)| e + rho * (a / n - b)).collect();
    let mut report = EbReport::default();
    match eta.family() {
        FamilySpec::Niw { .. } => {
            let candidate = NaturalParams::new(eta.family(), values);
            return Ok(match candidate {
                Ok(p) => (p, report),
                Err(_) => (eta.clone(), EbReport { projected: 0, rejected: true }),
            });
        }
        _ => {
            for v in &mut values {
                if !(*v >= PRIOR_FLOOR) {
                    *v = PRIOR_FLOOR;
                    report.projected += 1;
                }
            }
        }
    }
    Ok((NaturalParams::new(eta.family(), values)?, report))
}

/// Updates both prior blocks: the component prior towards the average
/// component posterior, and the weight prior towards the global weight
/// posterior (mixtures) or the batch's local Dirichlets (LDA).
pub fn update_prior<M: ConjugateModel>(
    model: &M,
    prior: &Prior,
    state: &GlobalState,
    beliefs: &[M::Beliefs],
    rho: f64,
) -> Result<(Prior, EbReport)> {
    let (component, a) = empirical_bayes_step(&prior.component, &state.components, rho)?;
    let weight_targets: Vec<NaturalParams> = match &state.weights {
        Some(w) => vec![w.clone()],
        None => beliefs
            .iter()
            .filter_map(|b| model.local_dirichlet(b))
            .map(|g| NaturalParams::new(prior.weights.family(), g.to_vec()))
            .collect::<Result<_>>()?,
    };
    let (weights, b) = empirical_bayes_step(&prior.weights, &weight_targets, rho)?;
    Ok((Prior { component, weights }, a.merge(b)))
}
