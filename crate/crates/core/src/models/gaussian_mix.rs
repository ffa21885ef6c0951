//! Mixture of full-covariance Gaussians with normal-inverse-Wishart priors.
//!
//! Each component's natural parameters are `(s, b, vec C, ν)`; one
//! observation contributes `f(x) = (1, −2x, vec xxᵀ, 1)`.

use super::mixture::{ComponentLikelihood, Mixture, MixtureConfig};
use crate::error::{Error, Result};
use crate::expfam::{niw_to_natural, FamilySpec, NaturalParams, NiwParams, NiwView};
use crate::linalg::Cholesky;
use crate::special::multi_digamma;
use rand::Rng;
use std::f64::consts::PI;

/// Closed-form `E_q[log N(x; μ, Σ)]` under `(μ, Σ) ~ NIW(s, m, Ψ, ν)`:
///
/// `−(ν/2)(x−m)ᵀΨ⁻¹(x−m) − D/(2s) + ½Σᵢψ((ν+1−i)/2) + ½log|Ψ⁻¹| − (D/2)log π`
pub fn gaussian_expected_loglik(p: &NiwParams, x: &[f64]) -> Result<f64> {
    p.validate()?;
    if x.len() != p.dim() {
        return Err(Error::usage(format!("observation has dimension {}, NIW has {}", x.len(), p.dim())));
    }
    let table = GaussianTable::new(p.s, p.nu, p.m.clone(), p.psi.cholesky()?);
    Ok(GaussianLikelihood { dim: p.dim() }.expected_loglik(&table, x))
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianLikelihood {
    pub dim: usize,
}

pub struct GaussianTable {
    nu: f64,
    m: Vec<f64>,
    chol: Cholesky,
    constant: f64,
}

impl GaussianTable {
    fn new(s: f64, nu: f64, m: Vec<f64>, chol: Cholesky) -> Self {
        let dim = m.len();
        let d = dim as f64;
        let constant = -0.5 * d / s + 0.5 * multi_digamma(nu, dim) - 0.5 * chol.log_det() - 0.5 * d * PI.ln();
        Self { nu, m, chol, constant }
    }
}

impl ComponentLikelihood for GaussianLikelihood {
    type Table = GaussianTable;

    fn family(&self) -> FamilySpec {
        FamilySpec::Niw { dim: self.dim }
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

    fn table(&self, lambda: &NaturalParams) -> Result<GaussianTable> {
        let view = NiwView::new(lambda)?;
        Ok(GaussianTable::new(view.s, view.nu, view.m, view.chol))
    }

    fn expected_loglik(&self, table: &GaussianTable, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&table.m).map(|(a, b)| a - b).collect();
        table.constant - 0.5 * table.nu * table.chol.quad_inv(&diff)
    }

    fn accumulate(&self, x: &[f64], weight: f64, stats: &mut [f64]) {
        let d = self.dim;
        stats[0] += weight;
        for i in 0..d {
            stats[1 + i] -= 2.0 * weight * x[i];
            let row = &mut stats[1 + d + i * d..1 + d + (i + 1) * d];
            let wx = weight * x[i];
            for (r, xj) in row.iter_mut().zip(x) {
                *r += wx * xj;
            }
        }
        stats[1 + d + d * d] += weight;
    }

    /// Prior `s`, `Ψ` and `ν` around a mean placed on a random data point.
    fn init_component<R: Rng>(
        &self,
        prior: &NaturalParams,
        data: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<NaturalParams> {
        let view = NiwView::new(prior)?;
        let m = if data.is_empty() { view.m.clone() } else { data[rng.random_range(0..data.len())].clone() };
        niw_to_natural(&NiwParams { s: view.s, m, psi: view.psi, nu: view.nu })
    }
}

pub type GaussianMixture = Mixture<GaussianLikelihood>;

impl Mixture<GaussianLikelihood> {
    /// `K` Gaussian components sharing the prior `NIW(prior)`.
    pub fn gaussian(components: usize, prior: &NiwParams, alpha: f64) -> Result<Self> {
        let dim = prior.dim();
        Mixture::with_prior(
            GaussianLikelihood { dim },
            MixtureConfig { components, alpha },
            niw_to_natural(prior)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::mean_sufficient_stats;
    use crate::linalg::Matrix;

    fn params() -> NiwParams {
        let psi = Matrix::from_row_major(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        NiwParams { s: 1.5, m: vec![0.5, -1.0], psi, nu: 4.5 }
    }

    #[test]
    fn quadratic_term_vanishes_at_the_mean() {
        let p = params();
        let d = 2.0;
        let logdet = p.psi.cholesky().unwrap().log_det();
        let want = -0.5 * d / p.s + 0.5 * multi_digamma(p.nu, 2) - 0.5 * logdet - 0.5 * d * PI.ln();
        let got = gaussian_expected_loglik(&p, &p.m).unwrap();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn agrees_with_mean_statistics_inner_product() {
        let p = params();
        let lambda = niw_to_natural(&p).unwrap();
        let t = mean_sufficient_stats(&lambda).unwrap();
        let lik = GaussianLikelihood { dim: 2 };
        let x = [0.7, 2.0];
        let mut f = vec![0.0; t.len()];
        lik.accumulate(&x, 1.0, &mut f);
        let log_g = -(2.0 * PI).ln();
        let inner: f64 = t.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + log_g;
        let direct = gaussian_expected_loglik(&p, &x).unwrap();
        assert!((inner - direct).abs() < 1e-9, "{inner} vs {direct}");
    }

    #[test]
    fn rejects_wrong_dimension() {
        assert!(matches!(gaussian_expected_loglik(&params(), &[1.0]), Err(Error::Usage(_))));
    }
}
