//! Continuous-time birth-death MCMC over graphs and precision matrices.
//!
//! Every vertex pair e = (i, j) carries a log rate ratio
//!
//! ln R_e = ln(I_{G∪e}/I_{G∖e}) + ln H(K, D*, e),
//!
//! where the first term is the prior normalizing-constant ratio supplied by a
//! [`RatioProvider`] and H is the conditional Bayes factor of the (i, j)
//! entry. Present edges die at rate min(R_e, 1), absent edges are born at
//! rate min(1/R_e, 1). A jump moves only the pair's free entry (and the
//! dependent diagonal entry k_jj), drawn from its full conditional on birth,
//! so the chain keeps the joint posterior of (G, K) invariant. Under
//! [`RefreshMode::Competing`] the remaining entries of K are refreshed by an
//! exact G-Wishart posterior draw that competes with the jumps as one more
//! Poisson event.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Edge, Graph};
use crate::gwishart::{self, check_spd, FeSampler, Neumaier, PrecisionMatrix};
use crate::rng::{self, Rng};
use crate::sampler::{spd_inverse, GWishartSampler, SamplerConfig};

/// Default Monte Carlo sample count for the ratio providers that need one.
pub const DEFAULT_MC_SAMPLES: usize = 1000;

// ---------------------------------------------------------------------------
// Ratio providers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    /// Closed-form approximation driven by the common-neighbor count.
    Approximation,
    /// Monte Carlo estimates of both constants.
    McRatio,
    /// Exact constants where the affected block is decomposable, Monte Carlo otherwise.
    ExactDecomposable,
}

impl fmt::Display for ProviderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderMode::Approximation => "approximation",
            ProviderMode::McRatio => "mc_ratio",
            ProviderMode::ExactDecomposable => "exact_decomposable",
        })
    }
}

impl FromStr for ProviderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "approximation" | "approx" => Ok(ProviderMode::Approximation),
            "mc_ratio" | "mc" => Ok(ProviderMode::McRatio),
            "exact_decomposable" | "exact" => Ok(ProviderMode::ExactDecomposable),
            _ => Err(Error::InvalidConfig(format!("unknown ratio provider '{s}'"))),
        }
    }
}

/// Source of the prior ratio I_{G∪e}/I_{G∖e}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioProvider {
    pub mode: ProviderMode,
    pub mc_samples: usize,
}

impl RatioProvider {
    pub fn approximation() -> Self {
        RatioProvider {
            mode: ProviderMode::Approximation,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn mc_ratio(samples: usize) -> Self {
        RatioProvider {
            mode: ProviderMode::McRatio,
            mc_samples: samples,
        }
    }

    pub fn exact_decomposable() -> Self {
        RatioProvider {
            mode: ProviderMode::ExactDecomposable,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode != ProviderMode::Approximation && self.mc_samples < 100 {
            return Err(Error::InvalidConfig(format!(
                "mc_samples must be at least 100, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }

    /// Evaluator for prior shape `delta`; Monte Carlo seeds derive from `seed`.
    pub fn evaluator(&self, delta: f64, seed: u64) -> Result<RatioEvaluator> {
        self.validate()?;
        if !(delta > 2.0) {
            return Err(Error::DeltaTooSmall(delta));
        }
        Ok(RatioEvaluator {
            provider: *self,
            delta,
            seed,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

/// A provider bound to δ and a seed, with a per-run cache of block constants.
///
/// The constant of a graph factorizes over its blocks (maximal biconnected
/// subgraphs), so I_{G∪e}/I_{G∖e} equals I_B/I_{B∖e} for the block B of G∪e
/// containing e. Estimates are cached per block, keyed by the fingerprint of
/// the block relabelled to 0..|B|.
#[derive(Debug)]
pub struct RatioEvaluator {
    provider: RatioProvider,
    delta: f64,
    seed: u64,
    cache: Mutex<HashMap<u64, f64>>,
}

impl RatioEvaluator {
    pub fn provider(&self) -> RatioProvider {
        self.provider
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// ln(I_{G∪e}/I_{G∖e}) for e = (i, j), whether or not e is in `g`.
    pub fn log_ratio(&self, g: &Graph, i: usize, j: usize) -> Result<f64> {
        if self.provider.mode == ProviderMode::Approximation {
            return Ok(-gwishart::log_ratio_approx(self.delta, g.common_neighbors(i, j))?);
        }
        let with = g.with_edge(i, j);
        let block = graph::edge_block(&with, i, j)?;
        if block.len() == 2 {
            // a bridge: the approximation with d = 0 is exact
            return Ok(-gwishart::log_ratio_approx(self.delta, 0)?);
        }
        let b = with.induced(&block);
        let a = block.iter().position(|&v| v == i).expect("endpoint in block");
        let c = block.iter().position(|&v| v == j).expect("endpoint in block");
        Ok(self.log_norm(&b)? - self.log_norm(&b.without_edge(a, c))?)
    }

    fn log_norm(&self, g: &Graph) -> Result<f64> {
        let key = g.fingerprint();
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let value = match self.provider.mode {
            ProviderMode::ExactDecomposable if graph::is_decomposable(g) => {
                gwishart::exact_log_norm_decomposable(g, self.delta)?
            }
            _ => {
                let order = graph::elimination_order(g);
                FeSampler::new(g, &order, self.delta)?
                    .estimate(self.delta, self.provider.mc_samples, rng::derive_seed(self.seed, key))?
                    .log_value
            }
        };
        self.cache.lock().expect("cache lock").insert(key, value);
        Ok(value)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

// ---------------------------------------------------------------------------
// Conditional Bayes factor H

/// Quantities of the pair (i, j) that do not change when its free entry moves.
///
/// With Σ = K⁻¹ and A = (Σ_ee)⁻¹, K¹ = K_ee − A is the part of the e-block
/// explained by the other vertices; a11 = A_11 and c = A_22 − A_12²/A_11.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeGeometry {
    a11: f64,
    k1_12: f64,
    k1_22: f64,
    c: f64,
}

impl EdgeGeometry {
    fn new(k: &DMatrix<f64>, sigma: &DMatrix<f64>, i: usize, j: usize) -> Self {
        let (sii, sjj, sij) = (sigma[(i, i)], sigma[(j, j)], sigma[(i, j)]);
        let det = sii * sjj - sij * sij;
        let (a11, a12, a22) = (sjj / det, -sij / det, sii / det);
        EdgeGeometry {
            a11,
            k1_12: k[(i, j)] - a12,
            k1_22: k[(j, j)] - a22,
            c: a22 - a12 * a12 / a11,
        }
    }

    fn ln_h(&self, d: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        let (djj, dij) = (d[(j, j)], d[(i, j)]);
        let num = djj * self.k1_12 - dij * self.a11;
        0.5 * (djj / (2.0 * std::f64::consts::PI * self.a11)).ln() - num * num / (2.0 * self.a11 * djj)
    }
}

/// Conditional Bayes factor H(K, D*, e) computed from the partial
/// completions K⁰ (edge removed) and K¹ (conditioned on the other vertices):
///
/// H = (D*_jj/(2π a11))^{1/2} exp{−½[⟨D*, K⁰ − K¹⟩ − (D*_ii − D*_ij²/D*_jj) a11]},
/// a11 = k⁰_ii − k¹_ii.
pub fn h_factor(k: &PrecisionMatrix, d_star: &DMatrix<f64>, e: Edge) -> Result<f64> {
    Ok(ln_h_factor(k.matrix(), d_star, e)?.exp())
}

/// Natural log of [`h_factor`] for a raw symmetric matrix.
pub fn ln_h_factor(k: &DMatrix<f64>, d_star: &DMatrix<f64>, e: Edge) -> Result<f64> {
    let p = k.nrows();
    let (i, j) = e;
    if i == j {
        return Err(Error::SelfLoop(i));
    }
    if i >= p || j >= p {
        return Err(Error::IndexOutOfRange { index: i.max(j), p });
    }
    if d_star.nrows() != p {
        return Err(Error::DimensionMismatch { expected: p, got: d_star.nrows() });
    }
    let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
    // K¹ = K_{e,R} K_RR⁻¹ K_{R,e}
    let mut k1 = [[0.0; 2]; 2];
    if !rest.is_empty() {
        let m = rest.len();
        let krr = DMatrix::from_fn(m, m, |a, b| k[(rest[a], rest[b])]);
        let chol = krr.cholesky().ok_or(Error::SingularSubmatrix)?;
        let kre = DMatrix::from_fn(m, 2, |a, b| k[(rest[a], [i, j][b])]);
        let solved = chol.solve(&kre);
        let prod = kre.transpose() * solved;
        k1 = [[prod[(0, 0)], prod[(0, 1)]], [prod[(1, 0)], prod[(1, 1)]]];
    }
    // K⁰_jj = K'_{j,V∖j} K_{V∖j}⁻¹ K'_{V∖j,j} with k_ij zeroed in the row
    let others: Vec<usize> = (0..p).filter(|&v| v != j).collect();
    let m = others.len();
    let kvv = DMatrix::from_fn(m, m, |a, b| k[(others[a], others[b])]);
    let chol = kvv.cholesky().ok_or(Error::SingularSubmatrix)?;
    let v = DVector::from_fn(m, |a, _| if others[a] == i { 0.0 } else { k[(others[a], j)] });
    let k0_jj = v.dot(&chol.solve(&v));
    let a11 = k[(i, i)] - k1[0][0];
    if !(a11 > 0.0) {
        return Err(Error::NonPositiveA11);
    }
    let diff = [[a11, -k1[0][1]], [-k1[1][0], k0_jj - k1[1][1]]];
    let d = |a: usize, b: usize| d_star[([i, j][a], [i, j][b])];
    let inner: f64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| d(a, b) * diff[a][b]).sum();
    let (dii, dij, djj) = (d(0, 0), d(0, 1), d(1, 1));
    Ok(0.5 * (djj / (2.0 * std::f64::consts::PI * a11)).ln() - 0.5 * (inner - (dii - dij * dij / djj) * a11))
}

// ---------------------------------------------------------------------------
// Chain

/// How the entries of K not touched by a jump are refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RefreshMode {
    /// An exact posterior draw of K competes with the jumps at this rate.
    Competing { rate: f64 },
    /// K is redrawn from the posterior after every jump. Kept for comparison;
    /// the weighted edge frequencies it produces are biased.
    AfterJump,
}

impl Default for RefreshMode {
    fn default() -> Self {
        RefreshMode::Competing { rate: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub delta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub provider: RatioProvider,
    pub seed: u64,
    pub snapshot_k: bool,
    pub refresh: RefreshMode,
    pub sampler: SamplerConfig,
}

impl ChainConfig {
    pub fn new(delta: f64, iterations: usize, burn_in: usize, provider: RatioProvider, seed: u64) -> Self {
        ChainConfig {
            delta,
            iterations,
            burn_in,
            provider,
            seed,
            snapshot_k: false,
            refresh: RefreshMode::default(),
            sampler: SamplerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 2.0) {
            return Err(Error::DeltaTooSmall(self.delta));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if let RefreshMode::Competing { rate } = self.refresh {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidConfig("refresh rate must be positive".into()));
            }
        }
        self.provider.validate()?;
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub graph: Graph,
    pub k: PrecisionMatrix,
    pub iteration: usize,
}

/// The fixed ingredients of a run: posterior G-Wishart W_G(δ+n, D*) with
/// D* = I + XᵀX, and the ratio evaluator for the prior W_G(δ, I).
#[derive(Debug)]
pub struct Chain {
    config: ChainConfig,
    d_star: DMatrix<f64>,
    posterior: GWishartSampler,
    evaluator: RatioEvaluator,
}

/// Outcome of one chain step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ChainState,
    /// Expected holding time of the state the step started from.
    pub weight: f64,
    /// The flipped pair, or `None` when K was refreshed.
    pub flipped: Option<Edge>,
}

impl Chain {
    /// Chain for posterior scale `d_star` after `n` observations.
    pub fn new(config: ChainConfig, d_star: DMatrix<f64>, n: usize) -> Result<Self> {
        config.validate()?;
        check_spd(&d_star)?;
        let posterior = GWishartSampler::new(config.delta + n as f64, &d_star, config.sampler)?;
        let evaluator = config.provider.evaluator(config.delta, rng::derive_seed(config.seed, 0x52_4154_494f))?;
        Ok(Chain {
            config,
            d_star,
            posterior,
            evaluator,
        })
    }

    /// Chain for an n×p data matrix.
    pub fn from_data(config: ChainConfig, data: &DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidConfig("data needs at least one row".into()));
        }
        let p = data.ncols();
        let d_star = DMatrix::identity(p, p) + data.transpose() * data;
        Self::new(config, d_star, data.nrows())
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn d_star(&self) -> &DMatrix<f64> {
        &self.d_star
    }

    pub fn evaluator(&self) -> &RatioEvaluator {
        &self.evaluator
    }

    pub fn p(&self) -> usize {
        self.d_star.nrows()
    }

    /// Empty graph with K drawn from the prior W_∅(δ, I).
    pub fn initial_state(&self, rng: &mut Rng) -> Result<ChainState> {
        let p = self.p();
        let prior = GWishartSampler::new(self.config.delta, &DMatrix::identity(p, p), self.config.sampler)?;
        let g = Graph::empty(p);
        Ok(ChainState {
            k: prior.sample(&g, rng)?,
            graph: g,
            iteration: 0,
        })
    }

    /// ln R_e for every pair, in lexicographic pair order.
    pub fn log_rate_ratios(&self, state: &ChainState) -> Result<Vec<f64>> {
        let k = state.k.matrix();
        let sigma = spd_inverse(k)?;
        let pairs: Vec<Edge> = state.graph.pairs().collect();
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let geo = EdgeGeometry::new(k, &sigma, i, j);
                if !(geo.a11 > 0.0) {
                    return Err(Error::NonPositiveA11);
                }
                Ok(self.evaluator.log_ratio(&state.graph, i, j)? + geo.ln_h(&self.d_star, i, j))
            })
            .collect()
    }

    /// Jump rates: min(R_e, 1) for present edges, min(1/R_e, 1) for absent ones.
    pub fn rates(&self, state: &ChainState) -> Result<Vec<f64>> {
        let g = &state.graph;
        Ok(self
            .log_rate_ratios(state)?
            .into_iter()
            .zip(g.pairs())
            .map(|(lr, (i, j))| rate_from_log_ratio(lr, g.has_edge(i, j)))
            .collect())
    }

    pub fn step(&self, state: &ChainState, rng: &mut Rng) -> Result<StepOutcome> {
        let rates = self.rates(state)?;
        let mut acc = Neumaier::default();
        for &r in &rates {
            acc.add(r);
        }
        let jump_total = acc.total();
        let refresh_rate = match self.config.refresh {
            RefreshMode::Competing { rate } => rate,
            RefreshMode::AfterJump => 0.0,
        };
        let total = jump_total + refresh_rate;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NoLegalMove);
        }
        let weight = 1.0 / total;
        let u = rng.random::<f64>() * total;
        let g = &state.graph;
        if u >= jump_total && refresh_rate > 0.0 {
            let k = self.posterior.sample(g, rng)?;
            return Ok(StepOutcome {
                state: ChainState {
                    graph: g.clone(),
                    k,
                    iteration: state.iteration + 1,
                },
                weight,
                flipped: None,
            });
        }
        let mut cum = 0.0;
        let mut chosen = None;
        let mut last_positive = None;
        for (&r, e) in rates.iter().zip(g.pairs()) {
            if r > 0.0 {
                last_positive = Some(e);
            }
            cum += r;
            if u < cum {
                chosen = Some(e);
                break;
            }
        }
        // rounding can leave u just above the running sum
        let (i, j) = chosen.or(last_positive).ok_or(Error::NoLegalMove)?;
        let birth = !g.has_edge(i, j);
        let new_graph = if birth { g.with_edge(i, j) } else { g.without_edge(i, j) };
        let k = match self.config.refresh {
            RefreshMode::AfterJump => self.posterior.sample(&new_graph, rng)?,
            RefreshMode::Competing { .. } => self.jump_k(state.k.matrix(), i, j, birth, &new_graph, rng)?,
        };
        Ok(StepOutcome {
            state: ChainState {
                graph: new_graph,
                k,
                iteration: state.iteration + 1,
            },
            weight,
            flipped: Some((i, j)),
        })
    }

    /// Moves the free entry of (i, j): set to zero on death, drawn from its
    /// full conditional N(−D*_ij a11/D*_jj, a11/D*_jj) on birth. k_jj follows
    /// so that the Schur complement of the e-block is unchanged.
    fn jump_k(&self, k: &DMatrix<f64>, i: usize, j: usize, birth: bool, g: &Graph, rng: &mut Rng) -> Result<PrecisionMatrix> {
        let sigma = spd_inverse(k)?;
        let geo = EdgeGeometry::new(k, &sigma, i, j);
        let a12 = if birth {
            let (djj, dij) = (self.d_star[(j, j)], self.d_star[(i, j)]);
            let z: f64 = rng.sample(StandardNormal);
            -dij * geo.a11 / djj + (geo.a11 / djj).sqrt() * z
        } else {
            -geo.k1_12
        };
        let mut out = k.clone();
        let kij = if birth { a12 + geo.k1_12 } else { 0.0 };
        out[(i, j)] = kij;
        out[(j, i)] = kij;
        out[(j, j)] = geo.k1_22 + geo.c + a12 * a12 / geo.a11;
        Ok(PrecisionMatrix::from_parts(out, g.clone()))
    }
}

fn rate_from_log_ratio(log_ratio: f64, present: bool) -> f64 {
    let x = if present { log_ratio } else { -log_ratio };
    x.min(0.0).exp()
}

/// Death rate of a present edge.
pub fn death_rate(chain: &Chain, state: &ChainState, e: Edge) -> Result<f64> {
    single_rate(chain, state, e, true)
}

/// Birth rate of an absent edge.
pub fn birth_rate(chain: &Chain, state: &ChainState, e: Edge) -> Result<f64> {
    single_rate(chain, state, e, false)
}

fn single_rate(chain: &Chain, state: &ChainState, e: Edge, present: bool) -> Result<f64> {
    let (i, j) = graph::edge(e.0, e.1);
    match (present, state.graph.has_edge(i, j)) {
        (true, false) => return Err(Error::EdgeAbsent(i, j)),
        (false, true) => return Err(Error::EdgePresent(i, j)),
        _ => {}
    }
    let k = state.k.matrix();
    let sigma = spd_inverse(k)?;
    let geo = EdgeGeometry::new(k, &sigma, i, j);
    let lr = chain.evaluator.log_ratio(&state.graph, i, j)? + geo.ln_h(&chain.d_star, i, j);
    Ok(rate_from_log_ratio(lr, present))
}

// ---------------------------------------------------------------------------
// Traces and summaries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub fingerprint: u64,
    pub edges: Vec<Edge>,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub p: usize,
    pub records: Vec<TraceRecord>,
    pub burn_in: usize,
    pub config: Option<ChainConfig>,
}

/// Runs the chain on an n×p data matrix and keeps the post-burn-in states.
pub fn run(data: &DMatrix<f64>, config: ChainConfig) -> Result<Trace> {
    let chain = Chain::from_data(config, data)?;
    run_chain(&chain)
}

/// Runs a prepared chain from the empty graph.
pub fn run_chain(chain: &Chain) -> Result<Trace> {
    let config = chain.config;
    let mut rng = rng::stream(config.seed, 0);
    let mut state = chain.initial_state(&mut rng)?;
    let mut records = Vec::with_capacity(config.iterations - config.burn_in);
    for t in 0..config.iterations {
        let out = chain.step(&state, &mut rng)?;
        if t >= config.burn_in {
            records.push(TraceRecord {
                fingerprint: state.graph.fingerprint(),
                edges: state.graph.edges().to_vec(),
                weight: out.weight,
                k: config.snapshot_k.then(|| state.k.matrix().as_slice().to_vec()),
            });
        }
        state = out.state;
    }
    Ok(Trace {
        p: chain.p(),
        records,
        burn_in: config.burn_in,
        config: Some(config),
    })
}

/// Posterior edge inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub p: usize,
    pub edge_prob: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct SummaryJson {
    #[serde(default)]
    schema_version: Option<u32>,
    p: usize,
    edge_prob: Vec<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.edge_prob[(i, j)]
    }

    pub fn to_json_string(&self) -> String {
        let json = SummaryJson {
            schema_version: Some(crate::SCHEMA_VERSION),
            p: self.p,
            edge_prob: (0..self.p).map(|i| self.edge_prob.row(i).iter().copied().collect()).collect(),
        };
        serde_json::to_string(&json).expect("summary serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: SummaryJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if json.edge_prob.len() != json.p || json.edge_prob.iter().any(|r| r.len() != json.p) {
            return Err(Error::Parse("edge_prob must be p×p".into()));
        }
        let m = DMatrix::from_fn(json.p, json.p, |i, j| json.edge_prob[i][j]);
        Ok(PosteriorSummary { p: json.p, edge_prob: m })
    }
}

/// Pr(e | data) = Σ_t 1(e ∈ E_t) W_t / Σ_t W_t.
pub fn edge_posteriors(trace: &Trace) -> Result<PosteriorSummary> {
    if trace.records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let p = trace.p;
    let mut num = vec![Neumaier::default(); p * p];
    let mut den = Neumaier::default();
    for r in &trace.records {
        den.add(r.weight);
        for &(i, j) in &r.edges {
            num[i * p + j].add(r.weight);
        }
    }
    let total = den.total();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let v = (num[i * p + j].total() / total).clamp(0.0, 1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(PosteriorSummary { p, edge_prob: m })
}

/// Graph with exactly the edges whose probability strictly exceeds `threshold`.
pub fn select_graph(summary: &PosteriorSummary, threshold: f64) -> Result<Graph> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let p = summary.p;
    Graph::new(
        p,
        (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .filter(|&(i, j)| summary.edge_prob[(i, j)] > threshold),
    )
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    edges: Vec<[usize; 2]>,
    w: f64,
}

/// One JSON object per line: {"edges": [[i, j], ...], "w": weight}.
pub fn write_trace_jsonl<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    for r in &trace.records {
        let rec = RecordJson {
            edges: r.edges.iter().map(|&(i, j)| [i, j]).collect(),
            w: r.weight,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL trace for `p` vertices.
pub fn read_trace_jsonl<R: BufRead>(input: R, p: usize) -> Result<Trace> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordJson = serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?;
        let g = Graph::new(p, rec.edges.iter().map(|e| (e[0], e[1])))?;
        records.push(TraceRecord {
            fingerprint: g.fingerprint(),
            edges: g.edges().to_vec(),
            weight: rec.w,
            k: None,
        });
    }
    Ok(Trace {
        p,
        records,
        burn_in: 0,
        config: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng::seeded(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        a.transpose() * a + DMatrix::identity(p, p) * 0.5
    }

    fn chain_for(p: usize, data_seed: u64, provider: RatioProvider, iterations: usize) -> Chain {
        let mut rng = rng::seeded(data_seed);
        let x = DMatrix::from_fn(20, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        Chain::from_data(ChainConfig::new(3.0, iterations, 0, provider, 1), &x).unwrap()
    }

    #[test]
    fn h_factor_matches_quadrature_at_p2() {
        // H = f(0)/∫f(t)dt with f(t) = exp(−½ tr(K(t) D*)), K(t) = [[k00, t], [t, c + t²/k00]]
        let k: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let x = [0.3_f64, -1.2];
        let d = DMatrix::identity(2, 2) + DMatrix::from_fn(2, 2, |a, b| x[a] * x[b]);
        let (k00, c) = (k[(0, 0)], k[(1, 1)] - k[(0, 1)].powi(2) / k[(0, 0)]);
        let f = |t: f64| (-0.5 * (k00 * d[(0, 0)] + 2.0 * t * d[(0, 1)] + (c + t * t / k00) * d[(1, 1)])).exp();
        let (lo, hi, n): (f64, f64, usize) = (-30.0, 30.0, 600_000);
        let h = (hi - lo) / n as f64;
        let integral: f64 = (0..=n)
            .map(|s| {
                let w = if s == 0 || s == n { 0.5 } else { 1.0 };
                w * f(lo + s as f64 * h)
            })
            .sum::<f64>()
            * h;
        let pm = PrecisionMatrix::new(k, Graph::complete(2)).unwrap();
        assert_relative_eq!(h_factor(&pm, &d, (0, 1)).unwrap(), f(0.0) / integral, max_relative = 1e-8);
    }

    #[test]
    fn h_factor_is_pure_and_continuous() {
        let k = random_spd(4, 1);
        let pm = PrecisionMatrix::new(k.clone(), Graph::complete(4)).unwrap();
        let d = random_spd(4, 2);
        let a = h_factor(&pm, &d, (1, 3)).unwrap();
        assert_eq!(a, h_factor(&pm, &d, (1, 3)).unwrap());
        let b = h_factor(&pm, &(&d * 1.000_001), (1, 3)).unwrap();
        assert!((a - b).abs() < 1e-3 * a);
    }

    #[test]
    fn h_factor_with_vanishing_entry() {
        let mut k = random_spd(3, 4);
        k[(0, 2)] = 1e-12;
        k[(2, 0)] = 1e-12;
        let v = ln_h_factor(&k, &DMatrix::identity(3, 3), (0, 2)).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn h_factor_errors() {
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(ln_h_factor(&k, &DMatrix::identity(3, 3), (0, 2)), Err(Error::SingularSubmatrix));
        assert_eq!(ln_h_factor(&k, &DMatrix::identity(3, 3), (1, 1)), Err(Error::SelfLoop(1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fast_h_matches_reference(seed in 0u64..10_000, p in 2usize..7, i in 0usize..7, j in 0usize..7) {
            let (i, j) = (i % p, j % p);
            prop_assume!(i != j);
            let k = random_spd(p, seed);
            let d = random_spd(p, seed + 1);
            let sigma = spd_inverse(&k).unwrap();
            let fast = EdgeGeometry::new(&k, &sigma, i, j).ln_h(&d, i, j);
            let slow = ln_h_factor(&k, &d, (i, j)).unwrap();
            prop_assert!((fast - slow).abs() < 1e-7 * (1.0 + slow.abs()), "{} vs {}", fast, slow);
        }

        #[test]
        fn posteriors_invariant_to_weight_scale(ws in proptest::collection::vec(0.01f64..10.0, 1..20), scale in 0.001f64..1000.0) {
            let g = Graph::empty(3);
            let records: Vec<TraceRecord> = ws.iter().enumerate().map(|(t, &w)| {
                let h = if t % 2 == 0 { g.with_edge(0, 1) } else { g.with_edge(1, 2) };
                TraceRecord { fingerprint: h.fingerprint(), edges: h.edges().to_vec(), weight: w, k: None }
            }).collect();
            let a = edge_posteriors(&Trace { p: 3, records: records.clone(), burn_in: 0, config: None }).unwrap();
            let scaled = records.into_iter().map(|mut r| { r.weight *= scale; r }).collect();
            let b = edge_posteriors(&Trace { p: 3, records: scaled, burn_in: 0, config: None }).unwrap();
            for (x, y) in a.edge_prob.iter().zip(b.edge_prob.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn rates_lie_in_unit_interval(seed in 0u64..200) {
            let chain = chain_for(5, seed, RatioProvider::approximation(), 10);
            let mut rng = rng::seeded(seed);
            let mut state = chain.initial_state(&mut rng).unwrap();
            for _ in 0..5 {
                for r in chain.rates(&state).unwrap() {
                    prop_assert!(r > 0.0 && r <= 1.0);
                }
                let out = chain.step(&state, &mut rng).unwrap();
                prop_assert!(out.weight > 0.0 && out.weight.is_finite());
                prop_assert!(out.state.k.matrix().clone().cholesky().is_some());
                state = out.state;
            }
        }
    }

    #[test]
    fn approximation_prior_ratios() {
        let eval = RatioProvider::approximation().evaluator(3.0, 0).unwrap();
        let path = Graph::path(3);
        assert_relative_eq!(eval.log_ratio(&Graph::complete(2), 0, 1).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(eval.log_ratio(&path, 0, 2).unwrap(), (1.5 * PI).ln(), epsilon = 1e-12);
        assert_relative_eq!(eval.log_ratio(&Graph::complete(3), 0, 2).unwrap(), (1.5 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn block_providers_agree_with_whole_graph_constants() {
        // triangle 0-1-2 with a pendant path 2-3-4 and an isolated vertex 5
        let g = Graph::new(6, vec![(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]).unwrap();
        let exact = RatioProvider::exact_decomposable().evaluator(3.0, 0).unwrap();
        for (i, j) in [(0, 1), (2, 3), (0, 3), (2, 4), (4, 5), (1, 5)] {
            let with = g.with_edge(i, j);
            let without = g.without_edge(i, j);
            let direct = gwishart::exact_log_norm_decomposable(&with, 3.0).unwrap()
                - gwishart::exact_log_norm_decomposable(&without, 3.0).unwrap();
            assert_relative_eq!(exact.log_ratio(&g, i, j).unwrap(), direct, epsilon = 1e-10);
        }
        let mc = RatioProvider::mc_ratio(100).evaluator(3.0, 0).unwrap();
        // chordal blocks under an elimination order need no sampling
        assert_relative_eq!(
            mc.log_ratio(&g, 0, 1).unwrap(),
            exact.log_ratio(&g, 0, 1).unwrap(),
            epsilon = 1e-10
        );
        assert!(mc.cache_len() > 0);
    }

    #[test]
    fn mc_provider_on_cycle_matches_independent_estimate() {
        let g = Graph::cycle(5);
        let mc = RatioProvider::mc_ratio(20_000).evaluator(3.0, 3).unwrap();
        let v = mc.log_ratio(&g, 0, 1).unwrap();
        let c5 = gwishart::mc_log_norm(&g, 3.0, 200_000, 11).unwrap();
        let path = gwishart::exact_log_norm_decomposable(&Graph::path(5), 3.0).unwrap();
        assert!((v - (c5.log_value - path)).abs() < 0.02, "{v} vs {}", c5.log_value - path);
    }

    #[test]
    fn provider_validation() {
        assert!(RatioProvider::mc_ratio(99).validate().is_err());
        assert!(RatioProvider::mc_ratio(100).validate().is_ok());
        assert_eq!("mc".parse::<ProviderMode>().unwrap(), ProviderMode::McRatio);
        assert!("bogus".parse::<ProviderMode>().is_err());
    }

    #[test]
    fn single_move_from_empty_bivariate_graph() {
        let mut config = ChainConfig::new(3.0, 10, 0, RatioProvider::approximation(), 5);
        config.refresh = RefreshMode::AfterJump;
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.5, 0.3, 1.0, 0.9]);
        let chain = Chain::from_data(config, &x).unwrap();
        let mut rng = rng::seeded(0);
        let state = chain.initial_state(&mut rng).unwrap();
        let rates = chain.rates(&state).unwrap();
        assert_eq!(rates.len(), 1);
        let out = chain.step(&state, &mut rng).unwrap();
        assert_eq!(out.flipped, Some((0, 1)));
        assert!(out.state.graph.has_edge(0, 1));
        assert_relative_eq!(out.weight, 1.0 / rates[0], epsilon = 1e-14);
        let death = death_rate(&chain, &out.state, (0, 1)).unwrap();
        assert!(death > 0.0 && death <= 1.0);
        assert_eq!(birth_rate(&chain, &out.state, (0, 1)), Err(Error::EdgePresent(0, 1)));
    }

    #[test]
    fn jump_preserves_pattern_and_definiteness() {
        let chain = chain_for(6, 3, RatioProvider::approximation(), 10);
        let mut rng = rng::seeded(3);
        let mut state = chain.initial_state(&mut rng).unwrap();
        for _ in 0..300 {
            state = chain.step(&state, &mut rng).unwrap().state;
            let k = state.k.matrix().clone();
            assert!(PrecisionMatrix::new(k, state.graph.clone()).is_ok());
        }
    }

    #[test]
    fn trace_length_and_determinism() {
        let x = DMatrix::from_fn(15, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let config = ChainConfig::new(3.0, 6, 5, RatioProvider::approximation(), 2);
        assert_eq!(run(&x, config).unwrap().records.len(), 1);
        let config = ChainConfig::new(3.0, 200, 50, RatioProvider::mc_ratio(100), 2);
        let a = run(&x, config).unwrap();
        let b = run(&x, config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 150);
        let bad = ChainConfig::new(3.0, 5, 5, RatioProvider::approximation(), 2);
        assert!(matches!(run(&x, bad), Err(Error::InvalidConfig(_))));
    }

    fn trace_of(records: &[(&[Edge], f64)]) -> Trace {
        Trace {
            p: 3,
            records: records
                .iter()
                .map(|&(e, w)| TraceRecord {
                    fingerprint: 0,
                    edges: e.to_vec(),
                    weight: w,
                    k: None,
                })
                .collect(),
            burn_in: 0,
            config: None,
        }
    }

    #[test]
    fn edge_posterior_examples() {
        let s = edge_posteriors(&trace_of(&[(&[(0, 1)], 5.0)])).unwrap();
        assert_eq!(s.prob(0, 1), 1.0);
        assert_eq!(s.prob(1, 0), 1.0);
        let s = edge_posteriors(&trace_of(&[(&[(0, 1)], 1.0), (&[], 1.0)])).unwrap();
        assert_eq!(s.prob(0, 1), 0.5);
        let s = edge_posteriors(&trace_of(&[(&[], 1.0), (&[(0, 1)], 3.0)])).unwrap();
        assert_eq!(s.prob(0, 1), 0.75);
        assert_eq!(edge_posteriors(&trace_of(&[])), Err(Error::EmptyTrace));
    }

    #[test]
    fn selection_examples() {
        let mut s = PosteriorSummary { p: 3, edge_prob: DMatrix::zeros(3, 3) };
        assert_eq!(select_graph(&s, 0.5).unwrap().n_edges(), 0);
        for (i, j, v) in [(0, 1, 0.6), (1, 2, 0.4), (0, 2, 0.85)] {
            s.edge_prob[(i, j)] = v;
            s.edge_prob[(j, i)] = v;
        }
        let half = select_graph(&s, 0.5).unwrap();
        assert_eq!(half.edges(), &[(0, 1), (0, 2)]);
        let strict = select_graph(&s, 0.8).unwrap();
        assert!(strict.edges().iter().all(|&(i, j)| half.has_edge(i, j)));
        assert!(select_graph(&s, 1.0).is_err());
    }

    #[test]
    fn io_roundtrips() {
        let t = trace_of(&[(&[(0, 1), (1, 2)], 0.25), (&[], 2.0)]);
        let mut buf = Vec::new();
        write_trace_jsonl(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"edges":[[0,1],[1,2]],"w":0.25}"#));
        let back = read_trace_jsonl(std::io::Cursor::new(buf), 3).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(edge_posteriors(&back).unwrap(), edge_posteriors(&t).unwrap());
        let s = edge_posteriors(&t).unwrap();
        let json = s.to_json_string();
        assert!(json.contains("\"schema_version\""));
        assert_eq!(PosteriorSummary::from_json_str(&json).unwrap(), s);
    }
}
