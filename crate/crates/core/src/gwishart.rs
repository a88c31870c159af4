//! G-Wishart density, normalizing constants and the edge-removal ratio
//! approximation with its error bound.
//!
//! Normalizing constants are for the identity scale. Under a vertex order
//! with ν_i later neighbors per vertex,
//!
//! log I_G(δ) = Σ_i [((δ+ν_i)/2) ln 2 + (ν_i/2) ln 2π + ln Γ((δ+ν_i)/2)] + ln E f_E(ψ),
//!
//! where f_E = exp(−½ Σ ψ_ij²) over the non-free upper-triangular entries of
//! the Cholesky-type factor ψ.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, PathProfile};
use crate::rng;
use crate::special;

/// Independent streams used by every Monte Carlo estimator. Fixed so results
/// depend on the seed alone, not on the worker count.
pub const MC_BLOCKS: usize = 16;

/// Batches used for the standard error of [`theorem_gap_mc`].
pub const GAP_BATCHES: usize = 20;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 2.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::DeltaTooSmall(delta))
    }
}

// ---------------------------------------------------------------------------
// Parameters and precision matrices

/// Shape δ and scale D of a G-Wishart law.
#[derive(Debug, Clone, PartialEq)]
pub struct GWishartParams {
    pub delta: f64,
    pub scale: DMatrix<f64>,
}

impl GWishartParams {
    pub fn new(delta: f64, scale: DMatrix<f64>) -> Result<Self> {
        check_delta(delta)?;
        check_spd(&scale)?;
        Ok(GWishartParams { delta, scale })
    }

    pub fn identity(delta: f64, p: usize) -> Result<Self> {
        Self::new(delta, DMatrix::identity(p, p))
    }

    pub fn p(&self) -> usize {
        self.scale.nrows()
    }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

pub(crate) fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m)?;
    if m.iter().any(|x| !x.is_finite()) || m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// Positive-definite K with exact zeros on the missing edges of its pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    k: DMatrix<f64>,
    pattern: Graph,
}

impl PrecisionMatrix {
    pub fn new(k: DMatrix<f64>, pattern: Graph) -> Result<Self> {
        if k.nrows() != pattern.p() {
            return Err(Error::DimensionMismatch {
                expected: pattern.p(),
                got: k.nrows(),
            });
        }
        check_symmetric(&k)?;
        for (i, j) in pattern.pairs() {
            if !pattern.has_edge(i, j) && (k[(i, j)] != 0.0 || k[(j, i)] != 0.0) {
                return Err(Error::PatternViolation(i, j));
            }
        }
        check_spd(&k)?;
        Ok(PrecisionMatrix { k, pattern })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(k: DMatrix<f64>, pattern: Graph) -> Self {
        PrecisionMatrix { k, pattern }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn pattern(&self) -> &Graph {
        &self.pattern
    }

    pub fn p(&self) -> usize {
        self.pattern.p()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.k
    }

    pub fn log_det(&self) -> Result<f64> {
        log_det_spd(&self.k)
    }
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// ((δ−2)/2)·log|K| − ½·tr(K D).
pub fn log_unnormalized_density(k: &PrecisionMatrix, params: &GWishartParams) -> Result<f64> {
    if params.p() != k.p() {
        return Err(Error::DimensionMismatch {
            expected: k.p(),
            got: params.p(),
        });
    }
    let trace = k.matrix().component_mul(&params.scale).sum();
    Ok((params.delta - 2.0) / 2.0 * k.log_det()? - 0.5 * trace)
}

// ---------------------------------------------------------------------------
// Cholesky frame

/// Upper-triangular factor ψ in the coordinates of `order`: row/column `a`
/// refers to vertex `order[a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFrame {
    pub order: Vec<usize>,
    pub nu: Vec<usize>,
    pub psi: DMatrix<f64>,
}

impl CholeskyFrame {
    /// exp(−½ Σ ψ_ab²) over the non-free entries.
    pub fn f_e(&self, g: &Graph) -> f64 {
        let p = self.order.len();
        let mut s = 0.0;
        for a in 0..p {
            for b in a + 1..p {
                if !g.has_edge(self.order[a], self.order[b]) {
                    s += self.psi[(a, b)].powi(2);
                }
            }
        }
        (-0.5 * s).exp()
    }
}

fn validate_order(p: usize, order: &[usize]) -> Result<()> {
    if order.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: order.len(),
        });
    }
    let mut seen = vec![false; p];
    for &v in order {
        if v >= p || seen[v] {
            return Err(Error::InvalidOrder(v));
        }
        seen[v] = true;
    }
    Ok(())
}

/// ν_a = number of neighbors of `order[a]` placed after it.
pub fn later_neighbor_counts(g: &Graph, order: &[usize]) -> Vec<usize> {
    let p = order.len();
    (0..p)
        .map(|a| (a + 1..p).filter(|&b| g.has_edge(order[a], order[b])).count())
        .collect()
}

/// Completes the non-free entries of ψ:
/// ψ_ab = −(Σ_{r<a} ψ_ra ψ_rb)/ψ_aa for each missing edge, rows in increasing
/// order. Free entries (diagonal and edges) must be supplied; NaN marks a
/// missing value. Non-free input entries are ignored.
pub fn cholesky_completion(free_psi: &DMatrix<f64>, g: &Graph, order: &[usize]) -> Result<CholeskyFrame> {
    let p = g.p();
    validate_order(p, order)?;
    if free_psi.nrows() != p || free_psi.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: free_psi.nrows(),
        });
    }
    let mut psi = DMatrix::zeros(p, p);
    for a in 0..p {
        let d = free_psi[(a, a)];
        if d.is_nan() {
            return Err(Error::MissingFreeEntry(order[a], order[a]));
        }
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal(order[a]));
        }
        psi[(a, a)] = d;
        for b in a + 1..p {
            if g.has_edge(order[a], order[b]) {
                let v = free_psi[(a, b)];
                if !v.is_finite() {
                    return Err(Error::MissingFreeEntry(order[a], order[b]));
                }
                psi[(a, b)] = v;
            }
        }
    }
    for a in 0..p {
        for b in a + 1..p {
            if !g.has_edge(order[a], order[b]) {
                let s: f64 = (0..a).map(|r| psi[(r, a)] * psi[(r, b)]).sum();
                psi[(a, b)] = -s / psi[(a, a)];
            }
        }
    }
    Ok(CholeskyFrame {
        order: order.to_vec(),
        nu: later_neighbor_counts(g, order),
        psi,
    })
}

// ---------------------------------------------------------------------------
// Normalizing constants

/// log I_G or log of a ratio of constants, with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub log_value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Deterministic part of log I_G for the given later-neighbor counts.
pub fn log_norm_prefactor(nu: &[usize], delta: f64) -> f64 {
    let (ln2, ln2pi) = (std::f64::consts::LN_2, (2.0 * std::f64::consts::PI).ln());
    nu.iter()
        .map(|&n| {
            let n = n as f64;
            (delta + n) / 2.0 * ln2 + n / 2.0 * ln2pi + special::ln_gamma((delta + n) / 2.0)
        })
        .sum()
}

/// log I_{K_m}(δ) for a complete graph on m vertices; 0 for m = 0.
pub fn clique_log_norm(m: usize, delta: f64) -> f64 {
    let nu: Vec<usize> = (0..m).map(|i| m - 1 - i).collect();
    log_norm_prefactor(&nu, delta)
}

/// Sampler for f_E under a fixed order. Non-free entries that are
/// structurally zero (no nonzero product term can reach them) are skipped,
/// and when every non-free entry is structurally zero f_E ≡ 1.
#[derive(Debug, Clone)]
pub(crate) struct FeSampler {
    p: usize,
    nu: Vec<usize>,
    edges: Vec<(usize, usize)>,
    diag: Vec<Option<Gamma<f64>>>,
    fills: Vec<Fill>,
}

#[derive(Debug, Clone)]
struct Fill {
    a: usize,
    b: usize,
    rows: Vec<usize>,
}

impl FeSampler {
    pub(crate) fn new(g: &Graph, order: &[usize], delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let p = g.p();
        validate_order(p, order)?;
        let nu = later_neighbor_counts(g, order);
        let mut nz = vec![false; p * p];
        let mut edges = Vec::new();
        for a in 0..p {
            nz[a * p + a] = true;
            for b in a + 1..p {
                if g.has_edge(order[a], order[b]) {
                    nz[a * p + b] = true;
                    edges.push((a, b));
                }
            }
        }
        let mut fills = Vec::new();
        for a in 0..p {
            for b in a + 1..p {
                if g.has_edge(order[a], order[b]) {
                    continue;
                }
                let rows: Vec<usize> = (0..a).filter(|&r| nz[r * p + a] && nz[r * p + b]).collect();
                if !rows.is_empty() {
                    nz[a * p + b] = true;
                    fills.push(Fill { a, b, rows });
                }
            }
        }
        let mut needs_diag = vec![false; p];
        for f in &fills {
            needs_diag[f.a] = true;
        }
        let diag = (0..p)
            .map(|a| {
                needs_diag[a]
                    .then(|| Gamma::new((delta + nu[a] as f64) / 2.0, 2.0).expect("shape is positive"))
            })
            .collect();
        Ok(FeSampler {
            p,
            nu,
            edges,
            diag,
            fills,
        })
    }

    pub(crate) fn prefactor(&self, delta: f64) -> f64 {
        log_norm_prefactor(&self.nu, delta)
    }

    pub(crate) fn is_trivial(&self) -> bool {
        self.fills.is_empty()
    }

    fn sample(&self, rng: &mut rng::Rng, psi: &mut [f64]) -> f64 {
        let p = self.p;
        for (a, d) in self.diag.iter().enumerate() {
            if let Some(d) = d {
                psi[a * p + a] = d.sample(rng).sqrt();
            }
        }
        for &(a, b) in &self.edges {
            psi[a * p + b] = rng.sample(StandardNormal);
        }
        let mut s = 0.0;
        for f in &self.fills {
            let dot: f64 = f.rows.iter().map(|&r| psi[r * p + f.a] * psi[r * p + f.b]).sum();
            let v = -dot / psi[f.a * p + f.a];
            psi[f.a * p + f.b] = v;
            s += v * v;
        }
        (-0.5 * s).exp()
    }

    /// Mean of f_E over `n` draws split across [`MC_BLOCKS`] streams.
    pub(crate) fn estimate(&self, delta: f64, n: usize, seed: u64) -> Result<NormEstimate> {
        if n == 0 {
            return Err(Error::ZeroSamples);
        }
        let prefactor = self.prefactor(delta);
        if self.is_trivial() {
            return Ok(NormEstimate {
                log_value: prefactor,
                std_error: 0.0,
                n_samples: n,
            });
        }
        let sizes = rng::block_sizes(n, MC_BLOCKS);
        let sums: Vec<(f64, f64)> = sizes
            .par_iter()
            .enumerate()
            .map(|(b, &m)| {
                let mut rng = rng::stream(seed, b as u64);
                let mut psi = vec![0.0; self.p * self.p];
                let mut s = Neumaier::default();
                let mut s2 = Neumaier::default();
                for _ in 0..m {
                    let f = self.sample(&mut rng, &mut psi);
                    s.add(f);
                    s2.add(f * f);
                }
                (s.total(), s2.total())
            })
            .collect();
        let mut s = Neumaier::default();
        let mut s2 = Neumaier::default();
        for (a, b) in sums {
            s.add(a);
            s2.add(b);
        }
        let nf = n as f64;
        let mean = s.total() / nf;
        let var = if n > 1 {
            ((s2.total() - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(NormEstimate {
            log_value: prefactor + mean.ln(),
            std_error: var.sqrt() / (mean * nf.sqrt()),
            n_samples: n,
        })
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Monte Carlo estimate of log I_G(δ, I) under the natural vertex order.
pub fn mc_log_norm(g: &Graph, delta: f64, n_samples: usize, seed: u64) -> Result<NormEstimate> {
    let order: Vec<usize> = (0..g.p()).collect();
    mc_log_norm_ordered(g, &order, delta, n_samples, seed)
}

/// Monte Carlo estimate of log I_G(δ, I) under an explicit vertex order.
pub fn mc_log_norm_ordered(
    g: &Graph,
    order: &[usize],
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<NormEstimate> {
    check_delta(delta)?;
    if n_samples == 0 {
        return Err(Error::ZeroSamples);
    }
    FeSampler::new(g, order, delta)?.estimate(delta, n_samples, seed)
}

/// Exact log I_G(δ, I) for a decomposable graph from its clique/separator
/// decomposition.
pub fn exact_log_norm_decomposable(g: &Graph, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let seq = graph::perfect_sequence_components(g)?;
    let cliques: f64 = seq.components.iter().map(|c| clique_log_norm(c.len(), delta)).sum();
    let seps: f64 = seq.separators.iter().map(|s| clique_log_norm(s.len(), delta)).sum();
    Ok(cliques - seps)
}

/// Monte Carlo estimate of I_{G−e}/I_G, each constant estimated
/// independently under a fill-reducing order.
pub fn mc_ratio(g: &Graph, e: (usize, usize), delta: f64, n_samples: usize, seed: u64) -> Result<NormEstimate> {
    check_delta(delta)?;
    let (i, j) = e;
    if i >= g.p() || j >= g.p() || !g.has_edge(i, j) {
        return Err(Error::EdgeAbsent(i, j));
    }
    if n_samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let minus = g.without_edge(i, j);
    let num = mc_log_norm_ordered(&minus, &graph::elimination_order(&minus), delta, n_samples, rng::derive_seed(seed, 1))?;
    let den = mc_log_norm_ordered(g, &graph::elimination_order(g), delta, n_samples, rng::derive_seed(seed, 2))?;
    Ok(NormEstimate {
        log_value: num.log_value - den.log_value,
        std_error: num.std_error.hypot(den.std_error),
        n_samples,
    })
}

// ---------------------------------------------------------------------------
// Ratio approximation and bound

/// (1/(2√π)) · Γ((δ+d)/2)/Γ((δ+d+1)/2), the approximation to I_{G−e}/I_G
/// when the endpoints of e have d common neighbors.
pub fn ratio_approx(delta: f64, d: usize) -> Result<f64> {
    Ok(log_ratio_approx(delta, d)?.exp())
}

/// Natural log of [`ratio_approx`].
pub fn log_ratio_approx(delta: f64, d: usize) -> Result<f64> {
    check_delta(delta)?;
    let s = delta + d as f64;
    Ok(special::ln_gamma(s / 2.0) - special::ln_gamma((s + 1.0) / 2.0) - (2.0 * std::f64::consts::PI.sqrt()).ln())
}

/// Error bound on the approximation; `truncated` carries through from an
/// incomplete path enumeration, in which case `value` is a lower estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub value: f64,
    pub truncated: bool,
}

/// B = (2/(π r(δ))) · (δ/(δ+2)) · (Σ_λ R_δ^{ℓ_λ}) · R_{δ+d−1}.
pub fn error_bound(delta: f64, profile: &PathProfile) -> Result<ErrorBound> {
    check_delta(delta)?;
    let value = if profile.long_lengths.is_empty() {
        0.0
    } else {
        let rd = special::big_r(delta)?;
        let sum: f64 = profile.long_lengths.iter().map(|&l| rd.powi(l as i32)).sum();
        2.0 / (std::f64::consts::PI * special::little_r(delta)?) * (delta / (delta + 2.0))
            * sum
            * special::big_r(delta + profile.d as f64 - 1.0)?
    };
    Ok(ErrorBound {
        value,
        truncated: profile.truncated,
    })
}

/// Monte Carlo estimate of the relative gap 1 − I1/I2 between the exact
/// expectation and the one the approximation replaces it with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Simulates, with common random numbers, I1 = E exp(−(ΣD_λ + (A₁+b)²/Q)/2)
/// and I2 = E exp(−(ΣD_λ + A₁²/Q)/2), where A₁ sums d products of standard
/// normals, Q ~ χ²_δ, and each long path of ℓ interior vertices contributes
/// D_λ = N_q² S_ℓ and (−1)^ℓ N_q N_p B_ℓ to b, with X_k = Z_k/√χ²_{δ+1},
/// S_ℓ = Σ_m Π_{k≤m} X_k² and B_ℓ = Π X_k over k < ℓ.
pub fn theorem_gap_mc(delta: f64, d: usize, long_lengths: &[usize], n_samples: usize, seed: u64) -> Result<GapEstimate> {
    check_delta(delta)?;
    if n_samples == 0 {
        return Err(Error::ZeroSamples);
    }
    if long_lengths.iter().any(|&l| l < 2) {
        return Err(Error::InvalidConfig("long path lengths must be at least 2".into()));
    }
    let chi_q = Gamma::new(delta / 2.0, 2.0).expect("shape is positive");
    let chi_x = Gamma::new((delta + 1.0) / 2.0, 2.0).expect("shape is positive");
    let sizes = rng::block_sizes(n_samples, GAP_BATCHES);
    let batches: Vec<(f64, f64)> = sizes
        .par_iter()
        .enumerate()
        .map(|(batch, &m)| {
            let mut rng = rng::stream(seed, batch as u64);
            let mut s1 = Neumaier::default();
            let mut s2 = Neumaier::default();
            for _ in 0..m {
                let q = chi_q.sample(&mut rng);
                let mut a1 = 0.0;
                for _ in 0..d {
                    let u: f64 = rng.sample(StandardNormal);
                    let v: f64 = rng.sample(StandardNormal);
                    a1 += u * v;
                }
                let (mut dsum, mut b) = (0.0, 0.0);
                for &l in long_lengths {
                    let nq: f64 = rng.sample(StandardNormal);
                    let np: f64 = rng.sample(StandardNormal);
                    let (mut cum, mut s, mut prod) = (1.0, 0.0, 1.0);
                    for _ in 0..l - 1 {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = z / chi_x.sample(&mut rng).sqrt();
                        cum *= x * x;
                        s += cum;
                        prod *= x;
                    }
                    dsum += nq * nq * s;
                    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                    b += sign * nq * np * prod;
                }
                s1.add((-(dsum + (a1 + b).powi(2) / q) / 2.0).exp());
                s2.add((-(dsum + a1 * a1 / q) / 2.0).exp());
            }
            (s1.total(), s2.total())
        })
        .collect();
    let (mut t1, mut t2) = (Neumaier::default(), Neumaier::default());
    for &(a, b) in &batches {
        t1.add(a);
        t2.add(b);
    }
    let gap = 1.0 - t1.total() / t2.total();
    let k = batches.len();
    let std_error = if k > 1 {
        let gaps: Vec<f64> = batches.iter().map(|&(a, b)| 1.0 - a / b).collect();
        let mean = gaps.iter().sum::<f64>() / k as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    Ok(GapEstimate {
        gap,
        std_error,
        n_samples,
    })
}
