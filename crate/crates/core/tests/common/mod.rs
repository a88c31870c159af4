#![allow(dead_code)]

use ggmbd::special::ln_gamma;
use nalgebra::DMatrix;

/// log I for the complete graph on two vertices with shape b and scale D.
fn log_norm_full(b: f64, d: &DMatrix<f64>) -> f64 {
    (b + 1.0) * 2f64.ln() - (b + 1.0) / 2.0 * d.determinant().ln()
        + 0.5 * std::f64::consts::PI.ln()
        + ln_gamma((b + 1.0) / 2.0)
        + ln_gamma(b / 2.0)
}

/// log I for the empty graph on two vertices.
fn log_norm_empty(b: f64, d: &DMatrix<f64>) -> f64 {
    (0..2).map(|i| ln_gamma(b / 2.0) + b / 2.0 * (2.0 / d[(i, i)]).ln()).sum()
}

/// Exact posterior probability of the single edge for bivariate data under
/// a uniform graph prior and a G-Wishart(δ, I) prior on K.
pub fn p2_edge_posterior(delta: f64, x: &DMatrix<f64>) -> f64 {
    let id = DMatrix::identity(2, 2);
    let d_star = &id + x.transpose() * x;
    let b = delta + x.nrows() as f64;
    let lf = log_norm_full(b, &d_star) - log_norm_full(delta, &id);
    let le = log_norm_empty(b, &d_star) - log_norm_empty(delta, &id);
    1.0 / (1.0 + (le - lf).exp())
}

/// Bivariate normal rows with unit variances and correlation `rho`.
pub fn bivariate(rho: f64, n: usize, seed: u64) -> DMatrix<f64> {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let k = sigma.try_inverse().unwrap();
    ggmbd::simharness::sample_rows(&k, n, seed).unwrap()
}
