//! Command-line front end. Every subcommand writes to `--out` (with a run
//! manifest beside it) or to standard output.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bdmcmc::{self, ChainConfig, PosteriorSummary, ProviderMode, RatioProvider, RefreshMode};
use crate::graph::{self, Graph, GraphKind, PathCaps, PathProfile};
use crate::gwishart::{self, NormEstimate};
use crate::manifest::RunManifest;
use crate::simharness::{self, ExperimentConfig, GraphSpec};
use crate::{special, SCHEMA_VERSION};

/// The fifteen rows of the bound table, as per-path sizes: each `1` is a
/// common neighbor, each larger digit a chordless path with that many
/// interior vertices.
pub const TABLE1_ROWS: [&str; 15] = [
    "11112", "11113", "11114", "11122", "11123", "11124", "11222", "11223", "11224", "12222", "12223", "12224",
    "22222", "22223", "22224",
];

#[derive(Debug, Parser)]
#[command(name = "ggmbd", version, about = "G-Wishart constants, edge-ratio approximation and birth-death MCMC for Gaussian graphical models")]
struct Cli {
    /// 64-bit seed; drawn from system entropy and recorded when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bitwise-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file; a `.manifest.json` is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random graph as JSON.
    GenGraph {
        #[arg(long)]
        kind: GraphKind,
        #[arg(long)]
        p: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate data from a G-Wishart precision matrix on a graph.
    GenData {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate log I_G(δ, I).
    Const {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long, conflicts_with = "exact", required_unless_present = "exact")]
        mc: Option<usize>,
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// I_{G−e}/I_G for an edge e of the graph, with the approximation's error bound.
    Ratio {
        #[arg(long)]
        graph: PathBuf,
        /// Edge as `i,j`.
        #[arg(long, value_parser = parse_edge)]
        edge: (usize, usize),
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long, conflicts_with = "mc", required_unless_present = "mc")]
        approx: bool,
        #[arg(long)]
        mc: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the birth-death sampler on a CSV data file.
    Bdmcmc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long)]
        iterations: usize,
        #[arg(long)]
        burn_in: usize,
        /// approx, mc or exact.
        #[arg(long, default_value = "approx")]
        provider: ProviderMode,
        #[arg(long, default_value_t = bdmcmc::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        /// Rate of the competing precision-refresh event.
        #[arg(long, default_value_t = 1.0)]
        refresh_rate: f64,
        /// Refresh K after every jump instead (biased; for comparison only).
        #[arg(long)]
        refresh_after_jump: bool,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
    /// Score a posterior summary against the true graph.
    Evaluate {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Bound B and Monte Carlo gap for path configurations; all fifteen
    /// table rows when neither `--config` nor `--paths` is given.
    Table1 {
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        /// Count encoding: digit at position j is the number of paths with
        /// j+1 interior vertices.
        #[arg(long, conflicts_with = "paths")]
        config: Option<String>,
        /// Per-path encoding: one digit per path giving its interior size.
        #[arg(long)]
        paths: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Seconds per 1000 iterations by dimension and provider.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 30])]
        ps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![ProviderMode::Approximation, ProviderMode::McRatio])]
        providers: Vec<ProviderMode>,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = bdmcmc::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate, sample and score over several replications.
    Experiment {
        #[arg(long)]
        kind: GraphKind,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "approx")]
        provider: ProviderMode,
        #[arg(long, default_value_t = bdmcmc::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
        #[arg(long, default_value_t = 20_000)]
        iterations: usize,
        #[arg(long, default_value_t = 8_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenGraph { .. } => "gen-graph",
            Command::GenData { .. } => "gen-data",
            Command::Const { .. } => "const",
            Command::Ratio { .. } => "ratio",
            Command::Bdmcmc { .. } => "bdmcmc",
            Command::Evaluate { .. } => "evaluate",
            Command::Table1 { .. } => "table1",
            Command::Bench { .. } => "bench",
            Command::Experiment { .. } => "experiment",
            Command::Replay { .. } => "replay",
        }
    }
}

fn parse_edge(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `i,j`, got `{s}`"))?;
    let i = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let j = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((i, j))
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 2 on a usage error, 1 on a runtime error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &argv) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Ctx {
    manifest: RunManifest,
    seed: u64,
    start: Instant,
}

impl Ctx {
    /// Writes `body` to `out` plus its manifest, or to standard output.
    fn emit(&mut self, out: Option<&Path>, body: &str) -> Result<(), Failure> {
        match out {
            Some(path) => {
                std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
                self.record(path)?;
            }
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(body.as_bytes())?;
                stdout.flush()?;
            }
        }
        Ok(())
    }

    fn record(&mut self, path: &Path) -> Result<(), Failure> {
        self.manifest.outputs.push(path.display().to_string());
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.write_for(path)?;
        Ok(())
    }
}

fn resolved_argv(argv: &[String], seed: u64, had_seed: bool) -> Vec<String> {
    let mut v = argv.to_vec();
    if !had_seed {
        v.push("--seed".into());
        v.push(seed.to_string());
    }
    v
}

fn execute(cli: Cli, argv: &[String]) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Replay { manifest } = &cli.command {
        let m = RunManifest::read(manifest)?;
        if m.argv.iter().any(|a| a == "replay") {
            return Err(Failure::Usage("manifest records a replay".into()));
        }
        let inner = Cli::try_parse_from(&m.argv).map_err(|e| Failure::Usage(e.to_string()))?;
        return execute(inner, &m.argv);
    }
    let seed_from_entropy = cli.seed.is_none();
    let seed = cli.seed.unwrap_or_else(rand::random);
    let manifest = RunManifest::new(
        cli.command.name(),
        resolved_argv(argv, seed, !seed_from_entropy),
        Some(seed),
        seed_from_entropy,
        cli.threads,
    );
    let mut ctx = Ctx {
        manifest,
        seed,
        start: Instant::now(),
    };
    match cli.command {
        Command::GenGraph { kind, p, out } => {
            let g = graph::generate(kind, p, ctx.seed)?;
            ctx.emit(out.out.as_deref(), &(g.to_json_string() + "\n"))
        }
        Command::GenData { graph, delta, n, out } => {
            if n == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            let g = read_graph(&graph)?;
            let ds = simharness::simulate_dataset(&g, delta, n, ctx.seed)?;
            let mut buf = Vec::new();
            simharness::write_data_csv(&ds.x, &mut buf)?;
            ctx.emit(out.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::Const { graph, delta, mc, exact, out } => {
            let g = read_graph(&graph)?;
            let est = if exact {
                NormEstimate {
                    log_value: gwishart::exact_log_norm_decomposable(&g, delta)?,
                    std_error: 0.0,
                    n_samples: 0,
                }
            } else {
                gwishart::mc_log_norm(&g, delta, mc.expect("clap enforces --mc or --exact"), ctx.seed)?
            };
            ctx.emit(out.out.as_deref(), &json_line(&versioned(&est)))
        }
        Command::Ratio {
            graph,
            edge,
            delta,
            approx,
            mc,
            out,
        } => {
            let g = read_graph(&graph)?;
            let (i, j) = edge;
            if i >= g.p() || j >= g.p() || i == j {
                return Err(Failure::Usage(format!("edge ({i}, {j}) is not a vertex pair of the graph")));
            }
            if !g.has_edge(i, j) {
                return Err(crate::Error::EdgeAbsent(i, j).into());
            }
            let minus = g.without_edge(i, j);
            let profile = graph::path_profile(&minus, i, j, PathCaps::default())?;
            let bound = gwishart::error_bound(delta, &profile)?;
            let (value, std_error, method) = if approx {
                (gwishart::ratio_approx(delta, profile.d)?, None, "approximation")
            } else {
                let n = mc.expect("clap enforces --approx or --mc");
                let est = gwishart::mc_ratio(&g, edge, delta, n, ctx.seed)?;
                (est.log_value.exp(), Some(est.std_error), "mc_ratio")
            };
            let body = json!({
                "schema_version": SCHEMA_VERSION,
                "method": method,
                "edge": [i, j],
                "delta": delta,
                "value": value,
                "log_std_error": std_error,
                "d": profile.d,
                "long_lengths": profile.long_lengths,
                "bound": bound.value,
                "bound_truncated": bound.truncated,
            });
            match out.out.as_deref() {
                Some(path) => ctx.emit(Some(path), &json_line(&body)),
                None => ctx.emit(None, &format!("ratio = {value:.5}\nB = {}\n", round_sig(bound.value))),
            }
        }
        Command::Bdmcmc {
            data,
            delta,
            iterations,
            burn_in,
            provider,
            mc_samples,
            refresh_rate,
            refresh_after_jump,
            trace,
            summary,
        } => {
            if iterations <= burn_in {
                return Err(Failure::Usage(format!(
                    "--iterations ({iterations}) must exceed --burn-in ({burn_in})"
                )));
            }
            let provider = RatioProvider {
                mode: provider,
                mc_samples,
            };
            let mut cfg = ChainConfig::new(delta, iterations, burn_in, provider, ctx.seed);
            cfg.refresh = if refresh_after_jump {
                RefreshMode::AfterJump
            } else {
                RefreshMode::Competing { rate: refresh_rate }
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let x = simharness::read_data_csv(BufReader::new(
                File::open(&data).with_context(|| format!("opening {}", data.display()))?,
            ))?;
            let tr = bdmcmc::run(&x, cfg)?;
            let mut w = BufWriter::new(File::create(&trace).with_context(|| format!("creating {}", trace.display()))?);
            bdmcmc::write_trace_jsonl(&tr, &mut w)?;
            w.flush()?;
            ctx.record(&trace)?;
            let post = bdmcmc::edge_posteriors(&tr)?;
            std::fs::write(&summary, post.to_json_string() + "\n")?;
            ctx.record(&summary)
        }
        Command::Evaluate {
            summary,
            truth,
            threshold,
            out,
        } => {
            let post = PosteriorSummary::from_json_str(&read_text(&summary)?)?;
            let g = read_graph(&truth)?;
            let m = simharness::metrics_report(&post, &g, threshold)?;
            let c = &m.confusion;
            let body = format!(
                "threshold,tp,tn,fp,fn,sensitivity,specificity,mcc,auc\n{threshold},{},{},{},{},{},{},{},{}\n",
                c.tp, c.tn, c.fp, c.fn_, c.sensitivity, c.specificity, c.mcc, m.auc
            );
            ctx.emit(out.out.as_deref(), &body)
        }
        Command::Table1 {
            delta,
            config,
            paths,
            samples,
            out,
        } => {
            let profiles: Vec<(String, PathProfile)> = match (config, paths) {
                (Some(c), _) => vec![(c.clone(), parse_count_config(&c).map_err(Failure::Usage)?)],
                (None, Some(p)) => vec![(p.clone(), parse_path_config(&p).map_err(Failure::Usage)?)],
                (None, None) => TABLE1_ROWS
                    .iter()
                    .map(|s| (s.to_string(), parse_path_config(s).expect("table rows are valid")))
                    .collect(),
            };
            let mut body = String::from("config,delta,d,long_lengths,r_delta_d_minus_1,sum_r_delta_l,bound,gap,gap_std_error\n");
            for (k, (label, prof)) in profiles.iter().enumerate() {
                let row = table1_row(delta, prof, samples, crate::rng::derive_seed(ctx.seed, k as u64))?;
                let lens: Vec<String> = prof.long_lengths.iter().map(|l| l.to_string()).collect();
                body.push_str(&format!(
                    "{label},{delta},{},{},{:.4},{:.4},{:.4},{:.4},{:.5}\n",
                    prof.d,
                    lens.join(" "),
                    row.r_d,
                    row.sum_r,
                    row.bound,
                    row.gap,
                    row.gap_se
                ));
            }
            ctx.emit(out.out.as_deref(), &body)
        }
        Command::Bench {
            ps,
            providers,
            iterations,
            mc_samples,
            out,
        } => {
            let providers: Vec<RatioProvider> = providers
                .into_iter()
                .map(|mode| RatioProvider { mode, mc_samples })
                .collect();
            let rows = simharness::bench(&ps, &providers, iterations, ctx.seed)?;
            let mut buf = Vec::new();
            simharness::write_bench_csv(&rows, &mut buf)?;
            ctx.emit(out.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::Experiment {
            kind,
            p,
            n,
            provider,
            mc_samples,
            delta,
            iterations,
            burn_in,
            replications,
            out,
        } => {
            if iterations <= burn_in {
                return Err(Failure::Usage(format!(
                    "--iterations ({iterations}) must exceed --burn-in ({burn_in})"
                )));
            }
            let mut cfg = ExperimentConfig::new(
                GraphSpec::Generated(kind),
                p,
                n,
                RatioProvider { mode: provider, mc_samples },
                replications,
                ctx.seed,
            );
            cfg.delta = delta;
            cfg.iterations = iterations;
            cfg.burn_in = burn_in;
            let result = simharness::run_experiment(&cfg)?;
            let mut buf = Vec::new();
            simharness::write_report_csv(&result, &mut buf)?;
            ctx.emit(out.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::Replay { .. } => unreachable!("handled above"),
    }
}

/// One row of the bound table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Row {
    pub r_d: f64,
    pub sum_r: f64,
    pub bound: f64,
    pub gap: f64,
    pub gap_se: f64,
}

pub fn table1_row(delta: f64, profile: &PathProfile, samples: usize, seed: u64) -> crate::Result<Table1Row> {
    let rd = special::big_r(delta)?;
    let bound = gwishart::error_bound(delta, profile)?;
    let gap = gwishart::theorem_gap_mc(delta, profile.d, &profile.long_lengths, samples, seed)?;
    Ok(Table1Row {
        r_d: special::big_r(delta + profile.d as f64 - 1.0)?,
        sum_r: profile.long_lengths.iter().map(|&l| rd.powi(l as i32)).sum(),
        bound: bound.value,
        gap: gap.gap,
        gap_se: gap.std_error,
    })
}

/// Count encoding: the digit at position j is the number of paths with j+1
/// interior vertices, so position 0 counts common neighbors.
pub fn parse_count_config(s: &str) -> Result<PathProfile, String> {
    let mut d = 0;
    let mut long = Vec::new();
    for (j, c) in s.chars().enumerate() {
        let k = c.to_digit(10).ok_or_else(|| format!("config `{s}` must be all digits"))? as usize;
        if j == 0 {
            d = k;
        } else {
            long.extend(std::iter::repeat_n(j + 1, k));
        }
    }
    if s.is_empty() {
        return Err("empty config".into());
    }
    Ok(PathProfile::new(d, long))
}

/// Per-path encoding: one nonzero digit per path giving its interior size.
pub fn parse_path_config(s: &str) -> Result<PathProfile, String> {
    if s.is_empty() {
        return Err("empty config".into());
    }
    let mut d = 0;
    let mut long = Vec::new();
    for c in s.chars() {
        match c.to_digit(10) {
            Some(1) => d += 1,
            Some(k) if k >= 2 => long.push(k as usize),
            _ => return Err(format!("paths `{s}` must be digits 1-9")),
        }
    }
    Ok(PathProfile::new(d, long))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path) -> anyhow::Result<Graph> {
    let g = Graph::from_json_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if g.p() == 0 {
        bail!("graph has no vertices");
    }
    Ok(g)
}

fn versioned<T: Serialize>(value: &T) -> serde_json::Value {
    let mut v = serde_json::to_value(value).expect("plain data serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    v
}

fn json_line(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("json values serialize") + "\n"
}

fn round_sig(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.3}")
    }
}
