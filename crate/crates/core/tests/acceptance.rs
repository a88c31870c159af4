//! Acceptance criteria, one PASS/FAIL line each.
//!
//! A criterion listed in `KNOWN_UNATTAINABLE` still runs and still prints
//! FAIL when it fails; it just does not turn the exit code nonzero. Any
//! other failure does.

mod common;

use std::time::Instant;

use ggmbd::bdmcmc::{self, ChainConfig, RatioProvider};
use ggmbd::cli::{parse_path_config, table1_row, TABLE1_ROWS};
use ggmbd::graph::{self, Graph};
use ggmbd::gwishart;
use ggmbd::rng::derive_seed;
use ggmbd::simharness::{self, ExperimentConfig, GraphSpec};
use ggmbd::special;

/// Criteria whose stated reference values cannot all be met, with the reason.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[(
    4,
    "the stated log-moment mean -2.766 at delta=4 is an arithmetic slip; \
     psi(1/2) - psi(5/2) = -8/3 = -2.6667",
)];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, start: Instant, result: (bool, String)) -> Outcome {
    let (pass, detail) = result;
    println!(
        "{} criterion {id:>2} [{name}] {detail} ({:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    Outcome { id, pass, detail }
}

/// Table values in row order of `TABLE1_ROWS`: (R_{δ+d−1}, Σ R_δ^ℓ, B, gap).
const TABLE1: [(f64, f64, f64, f64); 15] = [
    (0.339, 0.25, 0.038, 0.0136),
    (0.339, 0.125, 0.019, 0.0036),
    (0.339, 0.0625, 0.009, 0.0014),
    (0.375, 0.5, 0.084, 0.0333),
    (0.375, 0.375, 0.063, 0.0213),
    (0.375, 0.312, 0.052, 0.0186),
    (0.424, 0.75, 0.143, 0.0591),
    (0.424, 0.625, 0.119, 0.0452),
    (0.424, 0.562, 0.107, 0.0411),
    (0.5, 1.0, 0.225, 0.0944),
    (0.5, 0.875, 0.196, 0.0797),
    (0.5, 0.8125, 0.182, 0.076),
    (0.636, 1.25, 0.357, 0.1541),
    (0.636, 1.125, 0.321, 0.1369),
    (0.636, 1.062, 0.303, 0.1323),
];

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn criterion_1() -> (bool, String) {
    let mut worst: (f64, &str) = (0.0, "");
    let mut ok = true;
    for (s, &(r, sum, b, _)) in TABLE1_ROWS.iter().zip(&TABLE1) {
        let prof = parse_path_config(s).unwrap();
        let row = table1_row(3.0, &prof, 1, 0).unwrap();
        let db = (round3(row.bound) - b).abs();
        let dr = (row.r_d - r).abs();
        let ds = (row.sum_r - sum).abs();
        ok &= db <= 0.001 + 1e-9 && dr < 1e-3 && ds < 1e-3;
        if db > worst.0 {
            worst = (db, s);
        }
    }
    (ok, format!("15 rows; max |B - table| after rounding {:.4} at {}", worst.0, worst.1))
}

struct GapRun {
    gaps: Vec<(f64, f64)>,
    bounds: Vec<f64>,
}

fn gap_run() -> GapRun {
    let mut gaps = Vec::new();
    let mut bounds = Vec::new();
    for (k, s) in TABLE1_ROWS.iter().enumerate() {
        let prof = parse_path_config(s).unwrap();
        let row = table1_row(3.0, &prof, 1_000_000, derive_seed(2024, k as u64)).unwrap();
        gaps.push((row.gap, row.gap_se));
        bounds.push(row.bound);
    }
    GapRun { gaps, bounds }
}

fn criterion_2(run: &GapRun) -> (bool, String) {
    let rows = [0usize, 3, 6, 9, 12];
    let mut parts = Vec::new();
    let mut ok = true;
    for &k in &rows {
        let (gap, _) = run.gaps[k];
        let want = TABLE1[k].3;
        ok &= (gap - want).abs() <= 0.005;
        parts.push(format!("{}:{gap:.4}/{want}", TABLE1_ROWS[k]));
    }
    (ok, format!("10^6 samples; {}", parts.join(" ")))
}

fn criterion_3(run: &GapRun) -> (bool, String) {
    let mut ok = true;
    let mut min_slack = f64::INFINITY;
    for (&(gap, se), &b) in run.gaps.iter().zip(&run.bounds) {
        ok &= gap >= -3.0 * se && gap <= b + 3.0 * se;
        min_slack = min_slack.min(b - gap);
    }
    (ok, format!("0 <= gap <= B + 3se on 15 rows; min B - gap {min_slack:.4}"))
}

fn criterion_4() -> (bool, String) {
    use std::f64::consts::PI;
    let want_r = [8.0 / (3.0 * PI), 9.0 * PI / 32.0, 128.0 / (45.0 * PI), 75.0 * PI / 256.0];
    let r_err = (3..=6)
        .zip(want_r)
        .map(|(d, w)| (special::little_r(d as f64).unwrap() - w).abs())
        .fold(0.0, f64::max);
    let want_m = [-2.3863, -2.766, -2.8863];
    let mut parts = Vec::new();
    let mut ok = r_err <= 1e-12;
    for (d, w) in [3.0, 4.0, 5.0].into_iter().zip(want_m) {
        let (mean, _) = special::log_x1sq_moments(d).unwrap();
        let hit = (mean - w).abs() < 5e-5;
        ok &= hit;
        parts.push(format!("delta={d}: {mean:.4} vs {w}{}", if hit { "" } else { " MISMATCH" }));
    }
    (ok, format!("little_r max err {r_err:.1e}; log means {}", parts.join(", ")))
}

fn criterion_5() -> (bool, String) {
    let k3 = Graph::complete(3);
    let exact1 = (gwishart::exact_log_norm_decomposable(&k3.without_edge(0, 1), 3.0).unwrap()
        - gwishart::exact_log_norm_decomposable(&k3, 3.0).unwrap())
    .exp();
    let k4 = Graph::complete(4);
    let exact2 = (gwishart::exact_log_norm_decomposable(&k4.without_edge(0, 1), 3.0).unwrap()
        - gwishart::exact_log_norm_decomposable(&k4, 3.0).unwrap())
    .exp();
    let e1 = (gwishart::ratio_approx(3.0, 1).unwrap() - exact1).abs();
    let e2 = (gwishart::ratio_approx(3.0, 2).unwrap() - exact2).abs();
    (e1 <= 1e-10 && e2 <= 1e-10, format!("K3 -> path: err {e1:.1e}; two triangles, d=2: err {e2:.1e}"))
}

fn criterion_6() -> (bool, String) {
    let mut hits = 0;
    let mut tried = 0;
    let mut seed = 0u64;
    let mut zs = Vec::new();
    while tried < 10 {
        seed += 1;
        let p = 3 + (seed % 4) as usize;
        let m = 1 + (derive_seed(seed, 7) % (p * (p - 1) / 2 - 1) as u64) as usize;
        let g = graph::random_with_edge_count(p, m, derive_seed(seed, 8)).unwrap();
        if !graph::is_decomposable(&g) {
            continue;
        }
        tried += 1;
        let exact = gwishart::exact_log_norm_decomposable(&g, 3.0).unwrap();
        let est = gwishart::mc_log_norm(&g, 3.0, 100_000, derive_seed(seed, 9)).unwrap();
        let diff = (est.log_value - exact).abs();
        if diff <= 3.0 * est.std_error + 1e-9 {
            hits += 1;
        }
        zs.push(if est.std_error > 0.0 { diff / est.std_error } else { 0.0 });
    }
    let zmax = zs.iter().cloned().fold(0.0, f64::max);
    (hits >= 9, format!("{hits}/10 within 3 se; max |z| {zmax:.2}"))
}

fn criterion_7() -> (bool, String) {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, &(delta, rho, n)) in [(3.0, 0.3, 30usize), (4.0, 0.2, 40)].iter().enumerate() {
        let x = common::bivariate(rho, n, derive_seed(77, k as u64));
        let exact = common::p2_edge_posterior(delta, &x);
        let cfg = ChainConfig::new(delta, 50_000, 5_000, RatioProvider::approximation(), derive_seed(78, k as u64));
        let trace = bdmcmc::run(&x, cfg).unwrap();
        let est = bdmcmc::edge_posteriors(&trace).unwrap().prob(0, 1);
        ok &= (est - exact).abs() <= 0.02;
        parts.push(format!("delta={delta}: chain {est:.4} vs exact {exact:.4}"));
    }
    (ok, parts.join("; "))
}

fn cycle_config(provider: RatioProvider, replications: usize) -> ExperimentConfig {
    let spec = GraphSpec::Fixed {
        label: "cycle".into(),
        graph: Graph::cycle(10),
    };
    ExperimentConfig::new(spec, 10, 500, provider, replications, 31)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_8() -> (bool, String, Vec<bdmcmc::PosteriorSummary>) {
    let result = simharness::run_experiment(&cycle_config(RatioProvider::approximation(), 10)).unwrap();
    let mut mcc = Vec::new();
    let mut base = Vec::new();
    let mut separated = true;
    for r in &result.reports {
        mcc.push(r.metrics.confusion.mcc);
        let m = r.selected.n_edges();
        let draws = 50;
        let b: f64 = (0..draws)
            .map(|t| {
                let g = graph::random_with_edge_count(10, m, derive_seed(r.replication as u64, t)).unwrap();
                simharness::metrics(&r.truth, &g).unwrap().mcc
            })
            .sum::<f64>()
            / draws as f64;
        base.push(b);
        let (pin, pout) = r.mean_probs();
        separated &= pin > pout;
    }
    let (m, b) = (median(mcc), median(base));
    let summaries = result.reports.iter().map(|r| r.summary.clone()).collect();
    (
        m > b && separated,
        format!("median MCC {m:.3} vs baseline {b:.3}; true-edge mean prob above non-edge in every replication: {separated}"),
        summaries,
    )
}

fn criterion_9(approx: &[bdmcmc::PosteriorSummary]) -> (bool, String) {
    let reps = 1;
    let mc = simharness::run_experiment(&cycle_config(RatioProvider::mc_ratio(2000), reps)).unwrap();
    let mut total = 0.0;
    let mut count = 0;
    for (r, a) in mc.reports.iter().zip(approx) {
        for (i, j) in Graph::empty(10).pairs() {
            total += (r.summary.prob(i, j) - a.prob(i, j)).abs();
            count += 1;
        }
    }
    let mad = total / count as f64;
    (mad <= 0.15, format!("mean |approx - mc| over {reps} replications {mad:.4}"))
}

fn criterion_10() -> (bool, String) {
    let rows = simharness::bench(&[30], &[RatioProvider::approximation(), RatioProvider::mc_ratio(2000)], 20, 5).unwrap();
    let (a, m) = (rows[0].seconds_per_1k_iters, rows[1].seconds_per_1k_iters);
    (m >= 2.0 * a, format!("p=30 s/1k iters: approximation {a:.3}, mc_ratio {m:.3}, factor {:.1}", m / a))
}

fn main() {
    let mut outcomes = Vec::new();
    let t = Instant::now();
    outcomes.push(report(1, "table closed-form columns", t, criterion_1()));
    let t = Instant::now();
    let gaps = gap_run();
    outcomes.push(report(2, "table Monte Carlo column", t, criterion_2(&gaps)));
    outcomes.push(report(3, "bound sandwich", t, criterion_3(&gaps)));
    let t = Instant::now();
    outcomes.push(report(4, "gamma constants", t, criterion_4()));
    let t = Instant::now();
    outcomes.push(report(5, "exactness", t, criterion_5()));
    let t = Instant::now();
    outcomes.push(report(6, "MC calibration", t, criterion_6()));
    let t = Instant::now();
    outcomes.push(report(7, "p=2 stationarity", t, criterion_7()));
    let t = Instant::now();
    let (pass, detail, summaries) = criterion_8();
    outcomes.push(report(8, "structure recovery", t, (pass, detail)));
    let t = Instant::now();
    outcomes.push(report(9, "provider agreement", t, criterion_9(&summaries)));
    let t = Instant::now();
    outcomes.push(report(10, "timing ordering", t, criterion_10()));

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    let mut unexpected = false;
    for o in outcomes.iter().filter(|o| !o.pass) {
        match KNOWN_UNATTAINABLE.iter().find(|(id, _)| *id == o.id) {
            Some((_, why)) => println!("known failure, criterion {}: {why}", o.id),
            None => {
                println!("unexpected failure, criterion {}: {}", o.id, o.detail);
                unexpected = true;
            }
        }
    }
    if unexpected {
        std::process::exit(1);
    }
}
