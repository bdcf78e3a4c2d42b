//! Tables behind the non-main scenarios. Each function is deterministic in
//! its seed and independent of the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{first_clash_time, ClashSample};
use crate::error::Result;
use crate::estimators::{estimate_survival_with, TreeRunOptions, DEFAULT_CERTIFY_SIZE};
use crate::graph::{Multigraph, Network};
use crate::harris::{
    duality_check, multi_type_survivors, FastContact, ProcessParams, Step,
};
use crate::oracle::ContactChain;
use crate::rng::{replica_seed, rng_from_seed, substream};
use crate::stats;
use crate::tree::{LazyTree, TreeShape};

/// The tiny-graph corpus, with names.
pub fn tiny_corpus() -> Vec<(&'static str, Network)> {
    vec![
        ("isolated_vertex", Network::isolated(1)),
        ("K2", Network::path(2)),
        ("P3", Network::path(3)),
        ("triangle", Network::cycle(3)),
        ("K4", Network::complete(4)),
        ("star_S3", Network::star(3)),
    ]
}

/// Extinction times from `initial`, one per replica.
pub fn extinction_times(net: &Network, params: ProcessParams, initial: &[usize], replicas: usize, seed: u64) -> Result<Vec<f64>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(replica_seed(seed, r as u64));
            let mut e = FastContact::new(net, params, initial)?;
            loop {
                if let Step::Extinct = e.step(&mut rng, f64::INFINITY) {
                    return Ok(e.time());
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub graph: String,
    pub lambda: f64,
    pub exact: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub z: f64,
    pub pass: bool,
}

/// Monte Carlo mean extinction time from vertex 0 against the exact value.
pub fn oracle_validation_table(lambdas: &[f64], replicas: usize, seed: u64) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    for (gi, (name, net)) in tiny_corpus().into_iter().enumerate() {
        for (li, &lambda) in lambdas.iter().enumerate() {
            let exact = ContactChain::<f64>::new(&net, lambda)?.exact_extinction_expectation(&[0])?;
            let params = ProcessParams::new(lambda)?;
            let s = substream(seed, (gi * 64 + li) as u64);
            let xs = extinction_times(&net, params, &[0], replicas, s)?;
            let mc_mean = stats::mean(&xs);
            let mc_stderr = stats::std_error(&xs);
            let z = (mc_mean - exact) / mc_stderr;
            rows.push(OracleRow {
                graph: name.to_string(),
                lambda,
                exact,
                mc_mean,
                mc_stderr,
                z,
                pass: z.abs() < 3.0,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub graph: String,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub t: f64,
    pub p_ab: f64,
    pub p_ba: f64,
    pub z: f64,
    /// Exact `P(xi_t^A ∩ B != ∅)`.
    pub exact: f64,
    pub pass: bool,
}

/// Test cases `(graph, A, B, t)` for the duality scenario.
pub fn duality_cases() -> Vec<(&'static str, Network, Vec<usize>, Vec<usize>, f64)> {
    vec![
        ("K2", Network::path(2), vec![0], vec![1], 1.0),
        ("K2", Network::path(2), vec![0], vec![0, 1], 0.5),
        ("P3", Network::path(3), vec![0], vec![2], 1.0),
        ("P3", Network::path(3), vec![1], vec![0, 2], 0.5),
        ("P3", Network::path(3), vec![0], vec![1], 2.0),
        ("triangle", Network::cycle(3), vec![0], vec![1], 1.0),
        ("triangle", Network::cycle(3), vec![0, 1], vec![2], 1.5),
    ]
}

pub fn duality_table(lambda: f64, replicas: usize, seed: u64) -> Result<Vec<DualityRow>> {
    let params = ProcessParams::new(lambda)?;
    duality_cases()
        .into_iter()
        .enumerate()
        .map(|(i, (name, net, a, b, t))| {
            let r = duality_check(&net, &a, &b, params, t, replicas, substream(seed, i as u64))?;
            let chain = ContactChain::<f64>::new(&net, lambda)?;
            let exact = chain.hit_probability(&chain.exact_marginal(t, &a)?, &b)?;
            Ok(DualityRow {
                graph: name.to_string(),
                a,
                b,
                t,
                p_ab: r.p_ab,
                p_ba: r.p_ba,
                z: r.z,
                exact,
                pass: r.z.abs() < 3.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRow {
    pub n: usize,
    pub radius: usize,
    pub samples: usize,
    /// Fraction of samples whose ball around vertex 0 is a d-regular tree ball.
    pub tree_fraction: f64,
    pub simple_fraction: f64,
    /// `exp((1 - d^2)/4)`.
    pub simple_limit: f64,
}

pub fn local_limit_table(d: usize, n_grid: &[usize], radius: usize, samples: usize, seed: u64) -> Result<Vec<LocalRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let flags: Vec<(bool, bool)> = (0..samples)
                .into_par_iter()
                .map(|r| {
                    let g = Multigraph::sample(n, d, replica_seed(substream(seed, n as u64), r as u64))?;
                    let ball = g.extract_ball(0, radius)?;
                    Ok((ball.is_regular_tree_ball(d), g.is_simple()))
                })
                .collect::<Result<_>>()?;
            let frac = |f: &dyn Fn(&(bool, bool)) -> bool| flags.iter().filter(|x| f(x)).count() as f64 / samples as f64;
            Ok(LocalRow {
                n,
                radius,
                samples,
                tree_fraction: frac(&|x| x.0),
                simple_fraction: frac(&|x| x.1),
                simple_limit: ((1.0 - (d * d) as f64) / 4.0).exp(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypesRow {
    pub replica: usize,
    pub k: usize,
    pub survivors: usize,
    pub union_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypesSummary {
    pub k: usize,
    pub horizon: f64,
    pub runs: usize,
    pub s_over_k: f64,
    pub s_over_k_stderr: f64,
    pub p_hat: f64,
    pub p_ci: (f64, f64),
    pub survival_replicas: usize,
    pub survival_horizon: f64,
    pub within_ci: bool,
}

/// Multi-type runs on the tree plus a survival estimate at `horizon - k`.
#[allow(clippy::too_many_arguments)]
pub fn surviving_types_table(
    d: usize,
    lambda: f64,
    k: usize,
    horizon: f64,
    runs: usize,
    survival_replicas: usize,
    seed: u64,
    node_budget: usize,
) -> Result<(Vec<TypesRow>, TypesSummary)> {
    let params = ProcessParams::new(lambda)?;
    let shape = TreeShape::new(d, false)?;
    let rows: Vec<TypesRow> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut tree = LazyTree::new(shape, node_budget);
            let out = multi_type_survivors(
                &mut tree,
                LazyTree::ROOT,
                k,
                params,
                horizon,
                replica_seed(substream(seed, 1), r as u64),
            )?;
            Ok(TypesRow {
                replica: r,
                k,
                survivors: out.survivors,
                union_size: out.union_size,
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.survivors as f64 / k as f64).collect();
    let survival_horizon = horizon - k as f64;
    let opts = TreeRunOptions {
        node_budget,
        ..TreeRunOptions::default()
    };
    let surv = estimate_survival_with(
        d,
        params,
        survival_horizon,
        survival_replicas,
        substream(seed, 2),
        DEFAULT_CERTIFY_SIZE,
        &opts,
    )?;
    let s_over_k = stats::mean(&ratios);
    let summary = TypesSummary {
        k,
        horizon,
        runs,
        s_over_k,
        s_over_k_stderr: stats::std_error(&ratios),
        p_hat: surv.p_hat,
        p_ci: surv.ci,
        survival_replicas,
        survival_horizon,
        within_ci: surv.ci.0 <= s_over_k && s_over_k <= surv.ci.1,
    };
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashSummaryPoint {
    pub n: usize,
    pub clashes: usize,
    pub median_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashSummary {
    pub points: Vec<ClashSummaryPoint>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub c_hat: f64,
    /// `1 / (2 c_hat)`.
    pub target_slope: f64,
    /// `slope / target_slope`.
    pub ratio: f64,
}

/// First-clash samples and the regression of the median against `ln N`.
pub fn clash_time_table(
    n_grid: &[usize],
    d: usize,
    lambda: f64,
    horizon: f64,
    replicas: usize,
    seed: u64,
    c_hat: f64,
) -> Result<(Vec<ClashSample>, ClashSummary)> {
    let params = ProcessParams::new(lambda)?;
    let rows = first_clash_time(n_grid, d, params, horizon, replicas, seed)?;
    let points: Vec<ClashSummaryPoint> = n_grid
        .iter()
        .map(|&n| {
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.first_clash_time)
                .collect();
            ClashSummaryPoint {
                n,
                clashes: times.len(),
                median_time: if times.is_empty() { f64::NAN } else { stats::median(&times) },
            }
        })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.median_time).collect();
    let fit = stats::ols(&x, &y);
    let target_slope = 1.0 / (2.0 * c_hat);
    Ok((
        rows,
        ClashSummary {
            points,
            slope: fit.slope,
            slope_stderr: fit.slope_stderr,
            c_hat,
            target_slope,
            ratio: fit.slope / target_slope,
        },
    ))
}
