//! Gamma-family special functions on the positive reals.
//!
//! Each function shifts its argument upward with the recurrence until the
//! asymptotic (Stirling-type) series converges to double precision, then
//! undoes the shift. Arguments are expected to lie in `(0, ∞)`; the
//! checked entry points return [`Error::Domain`] otherwise.

use crate::error::{Error, Result};
use std::f64::consts::PI;

const SHIFT: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// B_{2k}/(2k), k = 1..7.
const DIGAMMA_SERIES: [f64; 7] =
    [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];

/// B_{2k}, k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] =
    [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];

/// B_{2k}/(2k(2k-1)), k = 1..7.
const STIRLING_SERIES: [f64; 7] =
    [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0, -691.0 / 360_360.0, 1.0 / 156.0];

fn check(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires a positive finite argument, got {x}")))
    }
}

/// Digamma function ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check("digamma", x)?;
    Ok(psi(x))
}

/// Trigamma function ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check("trigamma", x)?;
    Ok(psi1(x))
}

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check("ln_gamma", x)?;
    Ok(lgamma(x))
}

/// Multivariate log-gamma ln Γ_D(x) for x > (D − 1)/2.
pub fn ln_multigamma(x: f64, dim: usize) -> Result<f64> {
    let lower = (dim as f64 - 1.0) / 2.0;
    if !(x > lower) || !x.is_finite() {
        return Err(Error::domain(format!("ln_multigamma of dimension {dim} requires x > {lower}, got {x}")));
    }
    Ok(lmultigamma(x, dim))
}

pub(crate) fn psi(x: f64) -> f64 {
    debug_assert!(x > 0.0, "psi({x})");
    let mut acc = 0.0;
    let mut z = x;
    while z < SHIFT {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut term = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    acc + z.ln() - 0.5 / z - series
}

pub(crate) fn psi1(x: f64) -> f64 {
    debug_assert!(x > 0.0, "psi1({x})");
    let mut acc = 0.0;
    let mut z = x;
    while z < SHIFT {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut term = inv2 * inv;
    let mut series = 0.0;
    for c in TRIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

pub(crate) fn lgamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "lgamma({x})");
    let mut shift = 0.0;
    let mut z = x;
    while z < SHIFT {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut term = inv;
    let mut series = 0.0;
    for c in STIRLING_SERIES {
        series += c * term;
        term *= inv2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series - shift
}

pub(crate) fn lmultigamma(x: f64, dim: usize) -> f64 {
    let d = dim as f64;
    let mut acc = d * (d - 1.0) / 4.0 * PI.ln();
    for i in 0..dim {
        acc += lgamma(x - i as f64 / 2.0);
    }
    acc
}

/// Σ_{i=1}^{D} ψ((ν + 1 − i)/2), the expected log-determinant kernel of a
/// Wishart with ν degrees of freedom.
pub(crate) fn multi_digamma(nu: f64, dim: usize) -> f64 {
    (1..=dim).map(|i| psi((nu + 1.0 - i as f64) / 2.0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    // (x, ψ(x), ψ'(x), lnΓ(x)) evaluated with 40-digit arithmetic.
    #[allow(clippy::excessive_precision)]
    const REFERENCE: [(f64, f64, f64, f64); 12] = [
        (1e-4, -10000.577051183513856, 100000001.64469367835, 9.2102826586339622105),
        (0.01, -100.56088545786867242, 10001.621213528312804, 4.5994798780420217016),
        (0.5, -1.9635100260214234794, 4.9348022005446793094, 0.57236494292470008707),
        (1.0, -0.57721566490153286061, 1.6449340668482264365, 0.0),
        (1.5, 0.036489973978576520559, 0.93480220054467930942, -0.12078223763524522235),
        (2.0, 0.42278433509846713939, 0.64493406684822643647, 0.0),
        (3.7, 1.1671535393615114409, 0.31003785767003830216, 1.4280723266653881292),
        (6.0, 1.7061176684318004727, 0.18132295573711532536, 4.7874917427820459942),
        (10.5, 2.3030010342976863753, 0.099916956059126733204, 13.940625219403763633),
        (25.0, 3.1987425128519740085, 0.040810663257225579187, 54.78472939811231919),
        (100.0, 4.6001618527380874002, 0.010050166663333571395, 359.13420536957539878),
        (1234.5, 7.1180162318279978433, 0.0008103727271269666527, 7550.5509010778948957),
    ];

    fn close(got: f64, want: f64, abs: f64) -> bool {
        // absolute tolerance, widened to a few ulps for large magnitudes
        (got - want).abs() <= abs.max(4.0 * f64::EPSILON * want.abs())
    }

    #[test]
    fn digamma_matches_reference() {
        for (x, want, _, _) in REFERENCE {
            let got = digamma(x).unwrap();
            assert!(close(got, want, 1e-12), "psi({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn trigamma_matches_reference() {
        for (x, _, want, _) in REFERENCE {
            let got = trigamma(x).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "psi1({x}) = {got}");
        }
    }

    #[test]
    fn ln_gamma_matches_reference() {
        for (x, _, _, want) in REFERENCE {
            let got = ln_gamma(x).unwrap();
            assert!(close(got, want, 1e-12), "lgamma({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn digamma_recurrence() {
        for x in [0.5, 1.0, 3.7] {
            let diff = psi(x + 1.0) - psi(x);
            assert!((diff - 1.0 / x).abs() < 1e-12);
        }
    }

    #[test]
    fn digamma_closed_forms() {
        let euler = 0.577_215_664_901_532_9;
        assert!((psi(1.0) + euler).abs() < 1e-12);
        assert!((psi(0.5) - (-euler - 2.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(ln_gamma(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(trigamma(-0.0), Err(Error::Domain(_))));
        assert!(ln_multigamma(0.5, 2).is_err());
    }

    #[test]
    fn multigamma_reduces_to_lgamma_in_one_dimension() {
        for x in [0.3, 2.0, 17.25] {
            assert!((lmultigamma(x, 1) - lgamma(x)).abs() < 1e-14);
        }
        // Γ_2(x) = π^{1/2} Γ(x) Γ(x − 1/2)
        let x = 3.3;
        let want = 0.5 * PI.ln() + lgamma(x) + lgamma(x - 0.5);
        assert!((ln_multigamma(x, 2).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for x in [0.7, 2.5, 40.0] {
            let h = 1e-5 * x;
            let fd = (psi(x + h) - psi(x - h)) / (2.0 * h);
            assert!((fd - psi1(x)).abs() < 1e-7 * psi1(x));
        }
    }
}
