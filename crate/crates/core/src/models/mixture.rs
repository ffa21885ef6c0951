//! Finite mixtures with a Dirichlet over the weights and a conjugate
//! exponential-family prior on each component.

use super::{entropy, softmax_in_place, ConjugateModel, GlobalState, Prior, Stats};
use crate::error::{Error, Result};
use crate::expfam::{dirichlet_expected_log, FamilySpec, NaturalParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The per-component likelihood `p(x | β_k) = g(x) exp(t(β_k)ᵀ f(x))`.
pub trait ComponentLikelihood: Sync + Send {
    /// Quantities derived from one component's λ_k that make
    /// `E_q[log p(x | β_k)]` cheap to evaluate.
    type Table: Sync + Send;

    fn family(&self) -> FamilySpec;
    fn dim(&self) -> usize;
    fn check(&self, x: &[f64]) -> Result<()>;
    fn table(&self, lambda: &NaturalParams) -> Result<Self::Table>;
    /// `E_q[log p(x | β_k)]`, including `log g(x)`.
    fn expected_loglik(&self, table: &Self::Table, x: &[f64]) -> f64;
    /// `stats += weight · f(x)`
    fn accumulate(&self, x: &[f64], weight: f64, stats: &mut [f64]);
    fn init_component<R: Rng>(
        &self,
        prior: &NaturalParams,
        data: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<NaturalParams>;
}

/// Component count and symmetric weight concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub components: usize,
    pub alpha: f64,
}

/// Responsibilities `φ_n` of one datum; sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct Mixture<L> {
    pub likelihood: L,
    pub config: MixtureConfig,
    component_prior: NaturalParams,
}

pub struct MixtureTables<T> {
    components: Vec<T>,
    log_weights: Vec<f64>,
}

impl<L: ComponentLikelihood> Mixture<L> {
    pub fn with_prior(likelihood: L, config: MixtureConfig, prior: NaturalParams) -> Result<Self> {
        if config.components == 0 {
            return Err(Error::usage("a mixture needs at least one component"));
        }
        if !(config.alpha > 0.0) {
            return Err(Error::domain("mixture weight concentration must be positive"));
        }
        if prior.family() != likelihood.family() {
            return Err(Error::usage("prior family does not match the likelihood"));
        }
        prior.validate()?;
        Ok(Self { likelihood, config, component_prior: prior })
    }

    fn scores(&self, exp: &MixtureTables<L::Table>, x: &[f64]) -> Vec<f64> {
        exp.components
            .iter()
            .zip(&exp.log_weights)
            .map(|(t, lw)| self.likelihood.expected_loglik(t, x) + lw)
            .collect()
    }
}

impl<L: ComponentLikelihood> ConjugateModel for Mixture<L> {
    type Datum = Vec<f64>;
    type Beliefs = Responsibilities;
    type Expectations = MixtureTables<L::Table>;

    fn num_components(&self) -> usize {
        self.config.components
    }

    fn component_family(&self) -> FamilySpec {
        self.likelihood.family()
    }

    fn has_global_weights(&self) -> bool {
        true
    }

    fn prior(&self) -> Prior {
        let k = self.config.components;
        Prior {
            component: self.component_prior.clone(),
            weights: NaturalParams::from_raw(FamilySpec::Dirichlet { dim: k }, vec![self.config.alpha; k])
                .expect("weight prior shape"),
        }
    }

    fn check_datum(&self, x: &Vec<f64>) -> Result<()> {
        self.likelihood.check(x)
    }

    fn expectations(&self, state: &GlobalState, _prior: &Prior) -> Result<Self::Expectations> {
        self.check_state(state)?;
        let components = state.components.iter().map(|c| self.likelihood.table(c)).collect::<Result<_>>()?;
        let weights = state.weights.as_ref().expect("mixture state carries weights");
        weights.validate()?;
        Ok(MixtureTables { components, log_weights: dirichlet_expected_log(weights.values()) })
    }

    fn uniform_beliefs(&self, _x: &Vec<f64>) -> Responsibilities {
        let k = self.config.components;
        Responsibilities(vec![1.0 / k as f64; k])
    }

    fn local_update(
        &self,
        exp: &Self::Expectations,
        x: &Vec<f64>,
        _init: &Responsibilities,
        _iters: usize,
    ) -> Responsibilities {
        // closed form: the optimum does not depend on the starting point
        let mut phi = self.scores(exp, x);
        softmax_in_place(&mut phi);
        Responsibilities(phi)
    }

    fn local_elbo(&self, exp: &Self::Expectations, x: &Vec<f64>, b: &Responsibilities) -> f64 {
        let scores = self.scores(exp, x);
        let expected: f64 = b.0.iter().zip(&scores).filter(|(p, _)| **p > 0.0).map(|(p, s)| p * s).sum();
        expected + entropy(&b.0)
    }

    fn accumulate(&self, x: &Vec<f64>, b: &Responsibilities, stats: &mut Stats) {
        for (k, &w) in b.0.iter().enumerate() {
            if w != 0.0 {
                self.likelihood.accumulate(x, w, &mut stats.components[k]);
            }
        }
        if let Some(weights) = stats.weights.as_mut() {
            for (acc, w) in weights.iter_mut().zip(&b.0) {
                *acc += w;
            }
        }
    }

    fn component_mass(&self, b: &Responsibilities) -> Vec<f64> {
        b.0.clone()
    }

    fn init_state<R: Rng>(&self, data: &[Vec<f64>], rng: &mut R) -> Result<GlobalState> {
        let k = self.config.components;
        let components = (0..k)
            .map(|_| self.likelihood.init_component(&self.component_prior, data, rng))
            .collect::<Result<_>>()?;
        let weights = NaturalParams::new(FamilySpec::Dirichlet { dim: k }, vec![1.0; k])?;
        Ok(GlobalState { components, weights: Some(weights) })
    }
}
