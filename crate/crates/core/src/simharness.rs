//! Data simulation, structure-recovery metrics and experiment orchestration.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bdmcmc::{self, Chain, ChainConfig, PosteriorSummary, RatioProvider, RefreshMode};
use crate::error::{Error, Result};
use crate::graph::{self, Graph, GraphKind};
use crate::gwishart::PrecisionMatrix;
use crate::rng;
use crate::sampler::{GWishartSampler, SamplerConfig};

/// Observations with the generating structure when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub truth: Option<Graph>,
    pub gen_k: Option<PrecisionMatrix>,
    pub seed: u64,
}

/// Draws K ~ W_G(δ, I) and n rows from N(0, K⁻¹).
pub fn simulate_dataset(g: &Graph, delta: f64, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()));
    }
    let p = g.p();
    let sampler = GWishartSampler::new(delta, &DMatrix::identity(p, p), SamplerConfig::default())?;
    let k = sampler.sample(g, &mut rng::stream(seed, 0))?;
    let x = sample_rows(k.matrix(), n, seed)?;
    Ok(Dataset {
        x,
        truth: Some(g.clone()),
        gen_k: Some(k),
        seed,
    })
}

/// n rows from N(0, K⁻¹): with K = LLᵀ, x solves Lᵀx = z for standard normal z.
pub fn sample_rows(k: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let p = k.nrows();
    let l = k.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
    let lt = l.transpose();
    let mut rng = rng::stream(seed, 1);
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = lt
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(x.transpose())
}

/// Header-less CSV, one row per observation.
pub fn write_data_csv<W: Write>(x: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_data_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse("ragged data rows".into()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------
// Metrics

/// Confusion counts over all vertex pairs and the derived scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub mcc: f64,
}

fn ratio_or_zero(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn metrics(true_g: &Graph, est_g: &Graph) -> Result<Confusion> {
    if true_g.p() != est_g.p() {
        return Err(Error::DimensionMismatch {
            expected: true_g.p(),
            got: est_g.p(),
        });
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (i, j) in true_g.pairs() {
        match (true_g.has_edge(i, j), est_g.has_edge(i, j)) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc = if factors.contains(&0) {
        0.0
    } else {
        let denom = factors.iter().map(|&f| f as f64).product::<f64>().sqrt();
        (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / denom
    };
    Ok(Confusion {
        tp,
        tn,
        fp,
        fn_,
        sensitivity: ratio_or_zero(tp, tp + fn_),
        specificity: ratio_or_zero(tn, tn + fp),
        mcc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// (false positive rate, true positive rate), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve of edge probabilities against the true graph, sweeping the
/// threshold over the distinct probabilities; AUC by the trapezoid rule.
pub fn roc(summary: &PosteriorSummary, true_g: &Graph) -> Result<Roc> {
    if summary.p != true_g.p() {
        return Err(Error::DimensionMismatch {
            expected: true_g.p(),
            got: summary.p,
        });
    }
    let mut scored: Vec<(f64, bool)> = true_g
        .pairs()
        .map(|(i, j)| (summary.edge_prob[(i, j)], true_g.has_edge(i, j)))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!("{pos} true edges and {neg} non-edges")));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < scored.len() {
        let v = scored[k].0;
        while k < scored.len() && scored[k].0 == v {
            if scored[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(Roc { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn metrics_report(summary: &PosteriorSummary, true_g: &Graph, threshold: f64) -> Result<MetricsReport> {
    let est = bdmcmc::select_graph(summary, threshold)?;
    let confusion = metrics(true_g, &est)?;
    let r = roc(summary, true_g)?;
    Ok(MetricsReport {
        confusion,
        roc: r.points,
        auc: r.auc,
    })
}

// ---------------------------------------------------------------------------
// Experiments

/// Where the true graph of each replication comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Generated(GraphKind),
    Fixed { label: String, graph: Graph },
}

impl GraphSpec {
    pub fn label(&self) -> String {
        match self {
            GraphSpec::Generated(kind) => kind.to_string(),
            GraphSpec::Fixed { label, .. } => label.clone(),
        }
    }

    fn graph(&self, p: usize, seed: u64) -> Result<Graph> {
        match self {
            GraphSpec::Generated(kind) => graph::generate(*kind, p, seed),
            GraphSpec::Fixed { graph, .. } => Ok(graph.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub p: usize,
    pub n: usize,
    pub delta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub provider: RatioProvider,
    pub replications: usize,
    pub seed: u64,
    pub threshold: f64,
    pub refresh: RefreshMode,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 20 000 iterations with 40% burn-in.
    pub fn new(graph: GraphSpec, p: usize, n: usize, provider: RatioProvider, replications: usize, seed: u64) -> Self {
        ExperimentConfig {
            graph,
            p,
            n,
            delta: 3.0,
            iterations: 20_000,
            burn_in: 8_000,
            provider,
            replications,
            seed,
            threshold: 0.5,
            refresh: RefreshMode::default(),
        }
    }
}

/// One replication's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub replication: usize,
    pub truth: Graph,
    pub summary: PosteriorSummary,
    pub selected: Graph,
    pub metrics: MetricsReport,
    pub seconds_per_1k_iters: f64,
}

impl ReplicationReport {
    /// Mean posterior probability over true edges and over non-edges.
    pub fn mean_probs(&self) -> (f64, f64) {
        let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0, 0.0, 0);
        for (i, j) in self.truth.pairs() {
            let v = self.summary.prob(i, j);
            if self.truth.has_edge(i, j) {
                s_in += v;
                n_in += 1;
            } else {
                s_out += v;
                n_out += 1;
            }
        }
        (s_in / n_in.max(1) as f64, s_out / n_out.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reports: Vec<ReplicationReport>,
}

/// Generates a graph, simulates data, runs the chain, selects at the
/// threshold and scores, once per replication.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.replications == 0 {
        return Err(Error::InvalidConfig("at least one replication is needed".into()));
    }
    let reports = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        reports,
    })
}

fn run_replication(config: &ExperimentConfig, replication: usize) -> Result<ReplicationReport> {
    let seed = rng::derive_seed(config.seed, replication as u64);
    let truth = config.graph.graph(config.p, rng::derive_seed(seed, 1))?;
    let data = simulate_dataset(&truth, config.delta, config.n, rng::derive_seed(seed, 2))?;
    let mut chain_cfg = ChainConfig::new(
        config.delta,
        config.iterations,
        config.burn_in,
        config.provider,
        rng::derive_seed(seed, 3),
    );
    chain_cfg.refresh = config.refresh;
    let chain = Chain::from_data(chain_cfg, &data.x)?;
    let start = Instant::now();
    let trace = bdmcmc::run_chain(&chain)?;
    let secs = start.elapsed().as_secs_f64();
    let summary = bdmcmc::edge_posteriors(&trace)?;
    let selected = bdmcmc::select_graph(&summary, config.threshold)?;
    let metrics = metrics_report(&summary, &truth, config.threshold)?;
    Ok(ReplicationReport {
        replication,
        truth,
        summary,
        selected,
        metrics,
        seconds_per_1k_iters: secs * 1000.0 / config.iterations as f64,
    })
}

pub const REPORT_HEADER: [&str; 9] = [
    "kind",
    "p",
    "n",
    "provider",
    "sensitivity",
    "specificity",
    "mcc",
    "auc",
    "seconds_per_1k_iters",
];

/// One CSV row per replication.
pub fn write_report_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(REPORT_HEADER).map_err(err)?;
    let c = &result.config;
    for r in &result.reports {
        let m = &r.metrics;
        w.write_record([
            c.graph.label(),
            c.p.to_string(),
            c.n.to_string(),
            c.provider.mode.to_string(),
            m.confusion.sensitivity.to_string(),
            m.confusion.specificity.to_string(),
            m.confusion.mcc.to_string(),
            m.auc.to_string(),
            r.seconds_per_1k_iters.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Timing of one provider at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub p: usize,
    pub provider: String,
    pub iterations: usize,
    pub seconds_per_1k_iters: f64,
}

/// Seconds per 1000 iterations of each provider on random_p data, sharing
/// the graph and data across providers at each p.
pub fn bench(ps: &[usize], providers: &[RatioProvider], iterations: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("bench needs at least one iteration".into()));
    }
    let mut rows = Vec::new();
    for &p in ps {
        let g = graph::generate(GraphKind::RandomP, p, rng::derive_seed(seed, p as u64))?;
        let data = simulate_dataset(&g, 3.0, 3 * p, rng::derive_seed(seed, 1000 + p as u64))?;
        for provider in providers {
            let cfg = ChainConfig::new(3.0, iterations, 0, *provider, seed);
            let chain = Chain::from_data(cfg, &data.x)?;
            let start = Instant::now();
            bdmcmc::run_chain(&chain)?;
            let secs = start.elapsed().as_secs_f64();
            rows.push(BenchRow {
                p,
                provider: provider.mode.to_string(),
                iterations,
                seconds_per_1k_iters: secs * 1000.0 / iterations as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}
