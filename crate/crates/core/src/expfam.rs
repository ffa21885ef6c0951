//! Exponential-family primitives in natural coordinates.
//!
//! A distribution `q(β; λ) = h(β) exp(λᵀ t(β) − a(λ))` is represented by a
//! [`FamilySpec`] (which fixes `h`, `t` and the coordinate layout) and a flat
//! vector of natural parameters `λ`. The four families cover every global
//! variable used by the bundled models:
//!
//! * `Dirichlet(dim)`: `t(β) = log β`, `λ = α`.
//! * `BetaVector(dim)`: independent Betas, `λ = (a₁..a_D, b₁..b_D)`,
//!   `t(β) = (log β, log(1 − β))`.
//! * `Niw(D)`: normal-inverse-Wishart over `(μ, Σ)`, stored as
//!   `λ = (s, b, vec C, ν) = (s, −2sm, vec(s m mᵀ + Ψ), ν)` with
//!   `t(μ, Σ) = −½ (μᵀΣ⁻¹μ, Σ⁻¹μ, vec Σ⁻¹, log|Σ|)`.
//! * `DirichletProduct(rows, cols)`: independent Dirichlet rows.
//!
//! The base measure `h` never has to be evaluated by the inference code and
//! is left implicit.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::special::{lgamma, lmultigamma, multi_digamma, psi, psi1};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Which exponential family a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Dirichlet { dim: usize },
    BetaVector { dim: usize },
    Niw { dim: usize },
    DirichletProduct { rows: usize, cols: usize },
}

impl FamilySpec {
    /// Length of a natural-parameter vector of this family.
    pub fn param_len(&self) -> usize {
        match *self {
            FamilySpec::Dirichlet { dim } => dim,
            FamilySpec::BetaVector { dim } => 2 * dim,
            FamilySpec::Niw { dim } => dim * dim + dim + 2,
            FamilySpec::DirichletProduct { rows, cols } => rows * cols,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            FamilySpec::Dirichlet { dim } | FamilySpec::BetaVector { dim } | FamilySpec::Niw { dim } => {
                dim >= 1
            }
            FamilySpec::DirichletProduct { rows, cols } => rows >= 1 && cols >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("degenerate family {self:?}")))
        }
    }
}

/// Natural parameters of one member of a [`FamilySpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    family: FamilySpec,
    values: Vec<f64>,
}

impl NaturalParams {
    /// Validated constructor: rejects vectors outside the family's
    /// natural-parameter domain.
    pub fn new(family: FamilySpec, values: Vec<f64>) -> Result<Self> {
        let p = Self::from_raw(family, values)?;
        p.validate()?;
        Ok(p)
    }

    /// Shape-checked constructor that skips the domain check. Used where
    /// validity follows from convexity of the domain.
    pub(crate) fn from_raw(family: FamilySpec, values: Vec<f64>) -> Result<Self> {
        family.check()?;
        if values.len() != family.param_len() {
            return Err(Error::usage(format!(
                "{family:?} expects {} natural parameters, got {}",
                family.param_len(),
                values.len()
            )));
        }
        Ok(Self { family, values })
    }

    pub fn dirichlet(alpha: Vec<f64>) -> Result<Self> {
        Self::new(FamilySpec::Dirichlet { dim: alpha.len() }, alpha)
    }

    /// Independent Betas with shape vectors `a` and `b`.
    pub fn beta_vector(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::usage("beta shape vectors differ in length"));
        }
        let values = a.iter().chain(b).copied().collect();
        Self::new(FamilySpec::BetaVector { dim: a.len() }, values)
    }

    pub fn family(&self) -> FamilySpec {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Checks membership in the natural-parameter domain.
    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite natural parameter"));
        }
        match self.family {
            FamilySpec::Dirichlet { .. }
            | FamilySpec::BetaVector { .. }
            | FamilySpec::DirichletProduct { .. } => {
                if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                    return Err(Error::domain(format!("natural parameter {i} must be positive, got {v}")));
                }
                Ok(())
            }
            FamilySpec::Niw { .. } => NiwView::new(self).map(|_| ()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// `(1 − ρ) self + ρ target`, computed in natural coordinates.
    pub fn interpolate(&self, target: &NaturalParams, rho: f64) -> Result<NaturalParams> {
        same_family(self, target)?;
        let values = self.values.iter().zip(&target.values).map(|(a, b)| (1.0 - rho) * a + rho * b).collect();
        Ok(NaturalParams { family: self.family, values })
    }

    /// Mean of β under this distribution: Beta/Dirichlet means, or for the
    /// NIW the pair `(m, Ψ/(ν − D − 1))` flattened as `m ++ vec Σ̄`.
    pub fn mean_parameters(&self) -> Result<Vec<f64>> {
        match self.family {
            FamilySpec::Dirichlet { .. } => {
                let total: f64 = self.values.iter().sum();
                Ok(self.values.iter().map(|v| v / total).collect())
            }
            FamilySpec::DirichletProduct { cols, .. } => Ok(self
                .values
                .chunks_exact(cols)
                .flat_map(|row| {
                    let total: f64 = row.iter().sum();
                    row.iter().map(move |v| v / total)
                })
                .collect()),
            FamilySpec::BetaVector { dim } => {
                let (a, b) = self.values.split_at(dim);
                Ok(a.iter().zip(b).map(|(a, b)| a / (a + b)).collect())
            }
            FamilySpec::Niw { dim } => {
                let p = natural_to_niw(self)?;
                let denom = p.nu - dim as f64 - 1.0;
                if denom <= 0.0 {
                    return Err(Error::domain(format!(
                        "NIW covariance mean undefined for nu = {} <= D + 1",
                        p.nu
                    )));
                }
                let mut out = p.m.clone();
                out.extend(p.psi.as_slice().iter().map(|v| v / denom));
                Ok(out)
            }
        }
    }
}

fn same_family(a: &NaturalParams, b: &NaturalParams) -> Result<()> {
    if a.family != b.family {
        return Err(Error::usage(format!("family mismatch: {:?} vs {:?}", a.family, b.family)));
    }
    Ok(())
}

/// Traditional NIW parametrization `(s, m, Ψ, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub s: f64,
    pub m: Vec<f64>,
    pub psi: Matrix,
    pub nu: f64,
}

impl NiwParams {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.m.len();
        if d == 0 || self.psi.dim() != d {
            return Err(Error::usage("NIW mean and scale matrix disagree in dimension"));
        }
        if !(self.s > 0.0) {
            return Err(Error::domain(format!("NIW requires s > 0, got {}", self.s)));
        }
        if !(self.nu > d as f64 - 1.0) {
            return Err(Error::domain(format!("NIW requires nu > D - 1, got {}", self.nu)));
        }
        self.psi.cholesky().map(|_| ())
    }
}

/// Decoded view of NIW natural parameters with the factorized scale matrix.
pub(crate) struct NiwView {
    pub s: f64,
    pub nu: f64,
    pub m: Vec<f64>,
    pub psi: Matrix,
    pub chol: Cholesky,
}

impl NiwView {
    pub fn new(p: &NaturalParams) -> Result<Self> {
        let FamilySpec::Niw { dim } = p.family else {
            return Err(Error::usage("expected NIW natural parameters"));
        };
        let v = &p.values;
        let s = v[0];
        let nu = v[v.len() - 1];
        if !(s > 0.0) {
            return Err(Error::domain(format!("NIW requires s > 0, got {s}")));
        }
        if !(nu > dim as f64 - 1.0) {
            return Err(Error::domain(format!("NIW requires nu > D - 1, got {nu}")));
        }
        let b = &v[1..1 + dim];
        let m: Vec<f64> = b.iter().map(|bi| -bi / (2.0 * s)).collect();
        let mut psi = Matrix::from_row_major(dim, v[1 + dim..1 + dim + dim * dim].to_vec())?;
        psi.symmetrize();
        psi.add_outer(-s, &m);
        let chol = psi
            .cholesky()
            .map_err(|e| Error::domain(format!("C - b b^T/(4s) is not positive definite: {e}")))?;
        Ok(Self { s, nu, m, psi, chol })
    }
}

/// `η(m, s, Ψ, ν) = (s, −2sm, vec(s m mᵀ + Ψ), ν)`.
pub fn niw_to_natural(p: &NiwParams) -> Result<NaturalParams> {
    p.validate()?;
    let d = p.dim();
    let mut c = p.psi.clone();
    c.add_outer(p.s, &p.m);
    let mut values = Vec::with_capacity(d * d + d + 2);
    values.push(p.s);
    values.extend(p.m.iter().map(|mi| -2.0 * p.s * mi));
    values.extend_from_slice(c.as_slice());
    values.push(p.nu);
    NaturalParams::new(FamilySpec::Niw { dim: d }, values)
}

/// Inverse of [`niw_to_natural`]: `m = −b/(2s)`, `Ψ = C − s m mᵀ`.
pub fn natural_to_niw(lambda: &NaturalParams) -> Result<NiwParams> {
    let view = NiwView::new(lambda)?;
    Ok(NiwParams { s: view.s, m: view.m, psi: view.psi, nu: view.nu })
}

/// Log-normalizer `a(λ)`.
pub fn log_normalizer(lambda: &NaturalParams) -> Result<f64> {
    lambda.validate()?;
    let v = &lambda.values;
    Ok(match lambda.family {
        FamilySpec::Dirichlet { .. } => dirichlet_log_normalizer(v),
        FamilySpec::DirichletProduct { cols, .. } => v.chunks_exact(cols).map(dirichlet_log_normalizer).sum(),
        FamilySpec::BetaVector { dim } => {
            let (a, b) = v.split_at(dim);
            a.iter().zip(b).map(|(&a, &b)| lgamma(a) + lgamma(b) - lgamma(a + b)).sum()
        }
        FamilySpec::Niw { dim } => {
            let view = NiwView::new(lambda)?;
            let d = dim as f64;
            0.5 * d * (2.0 * PI).ln() - 0.5 * d * view.s.ln()
                + 0.5 * view.nu * d * LN_2
                + lmultigamma(0.5 * view.nu, dim)
                - 0.5 * view.nu * view.chol.log_det()
        }
    })
}

fn dirichlet_log_normalizer(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| lgamma(a)).sum::<f64>() - lgamma(total)
}

pub(crate) fn dirichlet_expected_log(alpha: &[f64]) -> Vec<f64> {
    let total = psi(alpha.iter().sum());
    alpha.iter().map(|&a| psi(a) - total).collect()
}

/// Expected sufficient statistics `E_λ[t(β)] = ∇a(λ)`, in the layout of λ.
pub fn mean_sufficient_stats(lambda: &NaturalParams) -> Result<Vec<f64>> {
    lambda.validate()?;
    let v = &lambda.values;
    Ok(match lambda.family {
        FamilySpec::Dirichlet { .. } => dirichlet_expected_log(v),
        FamilySpec::DirichletProduct { cols, .. } => {
            v.chunks_exact(cols).flat_map(dirichlet_expected_log).collect()
        }
        FamilySpec::BetaVector { dim } => {
            let (a, b) = v.split_at(dim);
            let mut out = vec![0.0; 2 * dim];
            for i in 0..dim {
                let total = psi(a[i] + b[i]);
                out[i] = psi(a[i]) - total;
                out[dim + i] = psi(b[i]) - total;
            }
            out
        }
        FamilySpec::Niw { dim } => niw_mean_stats(&NiwView::new(lambda)?, dim),
    })
}

fn niw_mean_stats(view: &NiwView, dim: usize) -> Vec<f64> {
    let d = dim as f64;
    let psi_inv = view.chol.inverse();
    let psi_inv_m = psi_inv.mul_vec(&view.m);
    let m_quad: f64 = view.m.iter().zip(&psi_inv_m).map(|(a, b)| a * b).sum();
    // E[log|Σ⁻¹|]
    let e_logdet_prec = multi_digamma(view.nu, dim) + d * LN_2 - view.chol.log_det();

    let mut out = Vec::with_capacity(dim * dim + dim + 2);
    out.push(-0.5 * (d / view.s + view.nu * m_quad));
    out.extend(psi_inv_m.iter().map(|x| -0.5 * view.nu * x));
    out.extend(psi_inv.as_slice().iter().map(|x| -0.5 * view.nu * x));
    out.push(0.5 * e_logdet_prec);
    out
}

/// `D_KL(q_λ ‖ q_λ′) = (λ − λ′)ᵀ E_λ[t] − a(λ) + a(λ′)`.
pub fn kl_divergence(lambda: &NaturalParams, other: &NaturalParams) -> Result<f64> {
    same_family(lambda, other)?;
    let mean = mean_sufficient_stats(lambda)?;
    let inner: f64 = lambda.values.iter().zip(&other.values).zip(&mean).map(|((a, b), t)| (a - b) * t).sum();
    Ok(inner - log_normalizer(lambda)? + log_normalizer(other)?)
}

/// Gradient of the KL divergence in its first argument, `I(λ)(λ − λ′)`.
pub fn kl_gradient(lambda: &NaturalParams, other: &NaturalParams) -> Result<Vec<f64>> {
    same_family(lambda, other)?;
    let diff: Vec<f64> = lambda.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
    fisher_vector_product(lambda, &diff)
}

/// Fisher information times a vector, `∇²a(λ) v`.
///
/// Closed form for the Dirichlet and Beta families; for the NIW it is the
/// central difference of [`mean_sufficient_stats`] along `v`.
pub fn fisher_vector_product(lambda: &NaturalParams, v: &[f64]) -> Result<Vec<f64>> {
    lambda.validate()?;
    if v.len() != lambda.values.len() {
        return Err(Error::usage("direction has the wrong length"));
    }
    let x = &lambda.values;
    Ok(match lambda.family {
        FamilySpec::Dirichlet { .. } => dirichlet_fvp(x, v),
        FamilySpec::DirichletProduct { cols, .. } => x
            .chunks_exact(cols)
            .zip(v.chunks_exact(cols))
            .flat_map(|(xr, vr)| dirichlet_fvp(xr, vr))
            .collect(),
        FamilySpec::BetaVector { dim } => {
            let mut out = vec![0.0; 2 * dim];
            for i in 0..dim {
                let (a, b) = (x[i], x[dim + i]);
                let cross = psi1(a + b);
                let (va, vb) = (v[i], v[dim + i]);
                out[i] = psi1(a) * va - cross * (va + vb);
                out[dim + i] = psi1(b) * vb - cross * (va + vb);
            }
            out
        }
        FamilySpec::Niw { .. } => {
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if vmax == 0.0 {
                return Ok(vec![0.0; v.len()]);
            }
            let lmax = x.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let eps = 1e-6 * (1.0 + lmax) / vmax;
            let shifted = |sign: f64| {
                let values = x.iter().zip(v).map(|(a, d)| a + sign * eps * d).collect();
                mean_sufficient_stats(&NaturalParams::from_raw(lambda.family, values)?)
            };
            let plus = shifted(1.0)?;
            let minus = shifted(-1.0)?;
            plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
        }
    })
}

fn dirichlet_fvp(alpha: &[f64], v: &[f64]) -> Vec<f64> {
    let cross = psi1(alpha.iter().sum()) * v.iter().sum::<f64>();
    alpha.iter().zip(v).map(|(&a, &vi)| psi1(a) * vi - cross).collect()
}
