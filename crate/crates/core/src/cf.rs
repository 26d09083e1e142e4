//! Characteristic function of the limiting tail-sum law and the inversion
//! integrand built from it.
//!
//! The normalized sum of squared scalings below the truncation level R
//! converges to an infinitely divisible law with Lévy density s·z^{−1−s}
//! on (0, R], s = p/2. Its log-characteristic function has the closed form
//!
//!   log φ(t) = R^{−s} (1 + s·h(s, −itR)),    h(z) = z^s γ(−s, z),
//!
//! and the CDF follows from φ by Gil-Pelaez inversion,
//!
//!   F(t) = 1/2 − (1/π) ∫₀^∞ Im(e^{−itξ} φ(ξ)) / ξ dξ.
//!
//! The real reduction above halves the special-function work compared to
//! the two-sided complex difference and is algebraically identical to it.

use crate::gamma::{h_function, Result, SpecialFnError};
use num_complex::Complex64;

/// Parameters of the limiting tail-sum law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailLawParams {
    /// Stream norm exponent, in (0, 2).
    pub p: f64,
    /// Truncation level R of the squared-scaling jumps, > 0.
    pub trunc: f64,
}

impl TailLawParams {
    pub fn new(p: f64, trunc: f64) -> Result<Self> {
        if !(p > 0.0 && p < 2.0) {
            return Err(SpecialFnError::Domain("p must lie in (0, 2)"));
        }
        if !(trunc > 0.0 && trunc.is_finite()) {
            return Err(SpecialFnError::Domain("truncation must be positive and finite"));
        }
        Ok(Self { p, trunc })
    }

    /// Tail index s = p/2.
    #[inline]
    pub fn s(&self) -> f64 {
        0.5 * self.p
    }

    /// Mean of the law: s R^{1−s} / (1 − s).
    #[inline]
    pub fn mean(&self) -> f64 {
        let s = self.s();
        s * self.trunc.powf(1.0 - s) / (1.0 - s)
    }
}

/// log φ(t) = R^{−s} (1 + s·h(s, −itR)). Exactly zero at t = 0.
pub fn log_cf(t: f64, law: &TailLawParams) -> Result<Complex64> {
    let s = law.s();
    let z = Complex64::new(0.0, -t * law.trunc);
    let h = h_function(s, z)?;
    Ok(law.trunc.powf(-s) * (Complex64::new(1.0, 0.0) + s * h))
}

/// φ(t) = exp(log φ(t)).
pub fn cf(t: f64, law: &TailLawParams) -> Result<Complex64> {
    Ok(log_cf(t, law)?.exp())
}

/// Real Gil-Pelaez integrand Im(e^{−itξ} φ(ξ)) / ξ for ξ > 0.
///
/// The singularity at ξ = 0 is removable (the limit is mean − t); below
/// 1e−8 a first-order expansion avoids the 0/0.
pub fn gil_pelaez_integrand(xi: f64, t: f64, law: &TailLawParams) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(SpecialFnError::Domain("gil_pelaez_integrand requires xi > 0"));
    }
    if xi < 1e-8 {
        // Im((1 − itξ)(1 + C(ξ)))/ξ with C = log φ; both surviving terms
        // are O(1), no cancellation against 1/ξ.
        let c = log_cf(xi, law)?;
        return Ok(c.im / xi - t * (1.0 + c.re));
    }
    let phi = cf(xi, law)?;
    let (sin_t, cos_t) = (t * xi).sin_cos();
    Ok((phi.im * cos_t - phi.re * sin_t) / xi)
}
