//! Mixture of multivariate Bernoullis with Beta priors on every pixel.
//!
//! Component natural parameters are the Beta shapes `(a_k, b_k)`, the
//! sufficient statistics `f(x) = (x, 1 − x)`.

use super::mixture::{ComponentLikelihood, Mixture, MixtureConfig};
use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, NaturalParams};
use crate::special::psi;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// `xᵀψ(a) + (1 − x)ᵀψ(b) − 1ᵀψ(a + b)`
pub fn bernoulli_expected_loglik(a: &[f64], b: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != x.len() {
        return Err(Error::usage(format!("dimension mismatch: a {}, b {}, x {}", a.len(), b.len(), x.len())));
    }
    if a.iter().chain(b).any(|v| !(*v > 0.0)) {
        return Err(Error::domain("Beta shapes must be positive"));
    }
    Ok(a.iter().zip(b).zip(x).map(|((&a, &b), &x)| x * psi(a) + (1.0 - x) * psi(b) - psi(a + b)).sum())
}

#[derive(Debug, Clone, Copy)]
pub struct BernoulliLikelihood {
    pub dim: usize,
}

/// `E[log(1 − β)]` summed over pixels, and `E[log β] − E[log(1 − β)]`.
pub struct BernoulliTable {
    base: f64,
    slope: Vec<f64>,
}

impl ComponentLikelihood for BernoulliLikelihood {
    type Table = BernoulliTable;

    fn family(&self) -> FamilySpec {
        FamilySpec::BetaVector { dim: self.dim }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::usage(format!(
                "observation has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn table(&self, lambda: &NaturalParams) -> Result<BernoulliTable> {
        lambda.validate()?;
        let (a, b) = lambda.values().split_at(self.dim);
        let mut base = 0.0;
        let slope = a
            .iter()
            .zip(b)
            .map(|(&a, &b)| {
                let total = psi(a + b);
                let log_on = psi(a) - total;
                let log_off = psi(b) - total;
                base += log_off;
                log_on - log_off
            })
            .collect();
        Ok(BernoulliTable { base, slope })
    }

    fn expected_loglik(&self, table: &BernoulliTable, x: &[f64]) -> f64 {
        table.base + table.slope.iter().zip(x).map(|(s, x)| s * x).sum::<f64>()
    }

    fn accumulate(&self, x: &[f64], weight: f64, stats: &mut [f64]) {
        let (on, off) = stats.split_at_mut(self.dim);
        for i in 0..self.dim {
            on[i] += weight * x[i];
            off[i] += weight * (1.0 - x[i]);
        }
    }

    /// Beta shapes drawn from Gamma(shape 100, scale 0.01).
    fn init_component<R: Rng>(
        &self,
        _prior: &NaturalParams,
        _data: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<NaturalParams> {
        let gamma = Gamma::new(100.0, 0.01).expect("valid gamma");
        let values = (0..2 * self.dim).map(|_| gamma.sample(rng)).collect();
        NaturalParams::new(self.family(), values)
    }
}

pub type BernoulliMixture = Mixture<BernoulliLikelihood>;

impl Mixture<BernoulliLikelihood> {
    /// `K` components over `dim` binary pixels with a shared `Beta(a, b)`
    /// prior and a symmetric `Dirichlet(alpha)` over weights.
    pub fn bernoulli(components: usize, dim: usize, a: f64, b: f64, alpha: f64) -> Result<Self> {
        let prior = NaturalParams::beta_vector(&vec![a; dim], &vec![b; dim])?;
        Mixture::with_prior(BernoulliLikelihood { dim }, MixtureConfig { components, alpha }, prior)
    }
}
