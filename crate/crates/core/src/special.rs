//! Gamma-family constants and closed-form expectations used by the ratio
//! approximation and its error bound.
//!
//! Gamma ratios are evaluated in log space so arguments in the thousands
//! stay finite.

use nalgebra::Complex;
use statrs::function::{beta, erf, gamma};

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// ln Γ(x) for x > 0.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// ln B(a, b) for a, b > 0.
#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    beta::ln_beta(a, b)
}

/// Digamma ψ(x) for x > 0: upward recurrence to x ≥ 10, then the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let z = inv * inv;
    let series = z
        * (1.0 / 12.0
            - z * (1.0 / 120.0
                - z * (1.0 / 252.0
                    - z * (1.0 / 240.0 - z * (1.0 / 132.0 - z * (691.0 / 32760.0 - z / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let z = inv * inv;
    // 1/x + 1/(2x²) + Σ B_{2k}/x^{2k+1}
    let series = inv
        * z
        * (1.0 / 6.0
            - z * (1.0 / 30.0
                - z * (1.0 / 42.0
                    - z * (1.0 / 30.0 - z * (5.0 / 66.0 - z * (691.0 / 2730.0 - z * 7.0 / 6.0))))));
    acc + inv + 0.5 * z + series
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDelta(delta))
    }
}

/// R_δ = Γ(δ/2) / (√π Γ((δ+1)/2)).
pub fn big_r(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok((ln_gamma(delta / 2.0) - ln_gamma((delta + 1.0) / 2.0)).exp() / SQRT_PI)
}

/// R_{δ+d−1} as the ratio of the two Beta integrals
/// ∫|x|(1+x²)^{−(δ+d+1)/2}dx / ∫(1+x²)^{−(δ+d+1)/2}dx = B(1, (δ+d−1)/2) / B(½, (δ+d)/2).
pub fn big_r_via_beta(delta: f64, d: usize) -> Result<f64> {
    check_delta(delta)?;
    let s = delta + d as f64;
    if s <= 1.0 {
        return Err(Error::NonPositiveDelta(s - 1.0));
    }
    Ok((ln_beta(1.0, (s - 1.0) / 2.0) - ln_beta(0.5, s / 2.0)).exp())
}

/// r(δ) = Γ((δ+1)/2)² / (Γ(δ/2) Γ((δ+2)/2)), which lies in (0, 1).
pub fn little_r(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let h = delta / 2.0;
    Ok((2.0 * ln_gamma(h + 0.5) - ln_gamma(h) - ln_gamma(h + 1.0)).exp())
}

/// Precomputed R_δ and r(δ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRatioConstants {
    pub delta: f64,
    pub big_r: f64,
    pub little_r: f64,
}

impl GammaRatioConstants {
    pub fn new(delta: f64) -> Result<Self> {
        Ok(GammaRatioConstants {
            delta,
            big_r: big_r(delta)?,
            little_r: little_r(delta)?,
        })
    }
}

/// E(e^{−XY/Z}) for independent X ~ Γ(a), Y ~ Γ(b), Z ~ Γ(c) (unit scale):
/// Γ(a+c)Γ(b+c) / (Γ(c)Γ(a+b+c)).
pub fn expect_exp_neg_xy_over_z(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::NonPositiveShape);
    }
    Ok((ln_gamma(a + c) + ln_gamma(b + c) - ln_gamma(c) - ln_gamma(a + b + c)).exp())
}

/// E(e^{−A²/2}) where A = (U₁V₁ + … + U_kV_k)/√Q with U, V standard normal
/// and Q ~ χ²_δ: Γ((δ+k)/2)Γ((δ+1)/2) / (Γ(δ/2)Γ((δ+k+1)/2)).
pub fn expect_exp_neg_quadratic(delta: f64, k: i64) -> Result<f64> {
    check_delta(delta)?;
    if k < 0 {
        return Err(Error::NegativeK);
    }
    if k == 0 {
        return Ok(1.0);
    }
    let k = k as f64;
    Ok((ln_gamma((delta + k) / 2.0) + ln_gamma((delta + 1.0) / 2.0)
        - ln_gamma(delta / 2.0)
        - ln_gamma((delta + k + 1.0) / 2.0))
    .exp())
}

/// Mean and variance of log X₁² where X₁² = Z²/χ²_{δ+1}, up to the scale
/// convention of the beta-prime law: (ψ(½) − ψ((δ+1)/2), ψ'(½) + ψ'((δ+1)/2)).
pub fn log_x1sq_moments(delta: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    let b = (delta + 1.0) / 2.0;
    Ok((digamma(0.5) - digamma(b), trigamma(0.5) + trigamma(b)))
}

/// Normal approximation to Pr(U₁⋯U_n < x) for i.i.d. U_i with the
/// log-moments of [`log_x1sq_moments`].
pub fn b_ell_tail_approx(delta: f64, n: usize, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveX(x));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("factor count must be at least 1".into()));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (m, var) = log_x1sq_moments(delta)?;
    let n = n as f64;
    Ok(normal_cdf((x.ln() - n * m) / (var.sqrt() * n.sqrt())))
}

/// Right-hand side of the product-difference inequality
/// |Πa − Πb| ≤ Π|a_i| · Σ|a_i − b_i|/|a_i|, valid when |b_i| ≤ |a_i|.
pub fn product_difference_bound(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let prod: f64 = a.iter().map(|z| z.norm()).product();
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm() / x.norm()).sum();
    prod * sum
}
