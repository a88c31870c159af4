//! Exact G-Wishart sampling.
//!
//! A complete-graph Wishart draw is made by the Bartlett construction and
//! its covariance is then completed onto the graph by cycling over vertices:
//! each column is re-solved so the covariance keeps the sampled values on
//! the edges while the inverse acquires zeros on the missing edges.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{check_spd, PrecisionMatrix};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest absolute covariance change in a sweep.
    pub tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_iters: 1000,
            tol: 1e-8,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("sampler needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

/// Complete-graph sampler for density ∝ |K|^{(δ−2)/2} exp(−½ tr(K D)).
#[derive(Debug, Clone)]
pub struct WishartSampler {
    p: usize,
    /// Lower Cholesky factor of D⁻¹.
    l: DMatrix<f64>,
    diag: Vec<Gamma<f64>>,
}

impl WishartSampler {
    pub fn new(delta: f64, scale: &DMatrix<f64>) -> Result<Self> {
        if !(delta > 2.0 && delta.is_finite()) {
            return Err(Error::DeltaTooSmall(delta));
        }
        check_spd(scale)?;
        let p = scale.nrows();
        let inv = scale
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .inverse();
        let inv = (&inv + inv.transpose()) * 0.5;
        let l = inv.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
        let diag = (0..p)
            .map(|i| Gamma::new((delta + (p - 1 - i) as f64) / 2.0, 2.0).expect("shape is positive"))
            .collect();
        Ok(WishartSampler { p, l, diag })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// K = L ψᵀψ Lᵀ with ψ upper triangular, ψ_ii² ~ χ²_{δ+p−1−i}, ψ_ij ~ N(0, 1).
    pub fn draw(&self, rng: &mut Rng) -> DMatrix<f64> {
        let p = self.p;
        let mut psi = DMatrix::zeros(p, p);
        for i in 0..p {
            psi[(i, i)] = self.diag[i].sample(rng).sqrt();
            for j in i + 1..p {
                psi[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let m = psi * self.l.transpose();
        let k = m.transpose() * m;
        (&k + k.transpose()) * 0.5
    }
}

/// G-Wishart sampler with a fixed shape and scale.
#[derive(Debug, Clone)]
pub struct GWishartSampler {
    wishart: WishartSampler,
    cfg: SamplerConfig,
}

impl GWishartSampler {
    pub fn new(delta: f64, scale: &DMatrix<f64>, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(GWishartSampler {
            wishart: WishartSampler::new(delta, scale)?,
            cfg,
        })
    }

    pub fn sample(&self, g: &Graph, rng: &mut Rng) -> Result<PrecisionMatrix> {
        let p = self.wishart.p();
        if g.p() != p {
            return Err(Error::DimensionMismatch { expected: p, got: g.p() });
        }
        let k = self.wishart.draw(rng);
        if g.n_edges() == g.n_pairs() {
            return Ok(PrecisionMatrix::from_parts(k, g.clone()));
        }
        let sigma = spd_inverse(&k)?;
        let w = complete_covariance(g, &sigma, self.cfg)?;
        let mut k = spd_inverse(&w)?;
        for (i, j) in g.pairs() {
            if !g.has_edge(i, j) {
                k[(i, j)] = 0.0;
                k[(j, i)] = 0.0;
            }
        }
        if k.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(PrecisionMatrix::from_parts(k, g.clone()))
    }
}

/// Symmetrized inverse of a positive-definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Covariance W agreeing with `sigma` on the diagonal and the edges of `g`
/// whose inverse vanishes on the missing edges.
fn complete_covariance(g: &Graph, sigma: &DMatrix<f64>, cfg: SamplerConfig) -> Result<DMatrix<f64>> {
    let p = g.p();
    let mut w = sigma.clone();
    let nbrs: Vec<Vec<usize>> = (0..p).map(|j| g.neighbors(j).collect()).collect();
    let mut col = vec![0.0; p];
    for _ in 0..cfg.max_iters {
        let mut change: f64 = 0.0;
        for j in 0..p {
            let nb = &nbrs[j];
            if nb.is_empty() {
                col.iter_mut().for_each(|c| *c = 0.0);
            } else {
                let m = nb.len();
                let w_nn = DMatrix::from_fn(m, m, |a, b| w[(nb[a], nb[b])]);
                let rhs = DVector::from_fn(m, |a, _| sigma[(nb[a], j)]);
                let beta = w_nn
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite)?
                    .solve(&rhs);
                for (i, c) in col.iter_mut().enumerate() {
                    *c = nb.iter().zip(beta.iter()).map(|(&n, b)| w[(i, n)] * b).sum();
                }
            }
            for i in (0..p).filter(|&i| i != j) {
                change = change.max((w[(i, j)] - col[i]).abs());
                w[(i, j)] = col[i];
                w[(j, i)] = col[i];
            }
        }
        if change < cfg.tol {
            return Ok(w);
        }
    }
    Err(Error::NoConvergence(cfg.max_iters))
}

/// One complete-graph Wishart draw.
pub fn sample_wishart(delta: f64, scale: &DMatrix<f64>, seed: u64) -> Result<PrecisionMatrix> {
    let s = WishartSampler::new(delta, scale)?;
    let k = s.draw(&mut rng::seeded(seed));
    Ok(PrecisionMatrix::from_parts(k, Graph::complete(scale.nrows())))
}

/// One G-Wishart draw W_G(δ, D).
pub fn sample_gwishart(
    g: &Graph,
    delta: f64,
    scale: &DMatrix<f64>,
    cfg: SamplerConfig,
    seed: u64,
) -> Result<PrecisionMatrix> {
    GWishartSampler::new(delta, scale, cfg)?.sample(g, &mut rng::seeded(seed))
}
