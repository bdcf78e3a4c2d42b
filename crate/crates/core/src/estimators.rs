//! Monte Carlo estimators on the d-regular tree: growth rate, survival
//! probability, moments, left tail, history intersections, and a heuristic
//! bracket for the two critical values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harris::ProcessParams;
use crate::rng::{replica_seed, rng_from_seed, substream};
use crate::stats;
use crate::tree::{simulate_tree, LazyTree, TreeContact, TreeShape, DEFAULT_NODE_BUDGET};

/// Exponential growth rate of the unconditional mean `E|xi_t|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub c_hat: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub replicas: usize,
    pub severed: bool,
    pub grid: Vec<f64>,
    /// Unconditional mean of `|xi_t|` on `grid` (extinct runs count as 0).
    pub mean: Vec<f64>,
}

impl GrowthEstimate {
    /// `mean(t) * exp(-c_hat t)` on the fit window.
    pub fn normalized_window_means(&self) -> Vec<(f64, f64)> {
        self.grid
            .iter()
            .zip(&self.mean)
            .filter(|(t, _)| **t >= self.window.0 && **t <= self.window.1)
            .map(|(&t, &m)| (t, m * (-self.c_hat * t).exp()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub ci: (f64, f64),
    pub horizon: f64,
    pub replicas: usize,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: u32,
    pub grid: Vec<f64>,
    pub moments: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Slope of `log E|xi_t|^n` over the second half of the grid.
    pub growth_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub frequency: f64,
    pub ci: (f64, f64),
    pub alive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEstimate {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean history size of one process, for comparison.
    pub history_mean: Vec<f64>,
    pub replicas: usize,
}

/// Machine-readable summary record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub window: Option<(f64, f64)>,
    pub replicas: usize,
    pub seed: u64,
}

impl EstimateSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// Shared settings for tree-based estimators.
#[derive(Debug, Clone)]
pub struct TreeRunOptions {
    pub severed: bool,
    /// Points per unit time on the default grid.
    pub grid_density: usize,
    pub node_budget: usize,
    pub bootstrap: usize,
}

impl Default for TreeRunOptions {
    fn default() -> Self {
        TreeRunOptions {
            severed: false,
            grid_density: 4,
            node_budget: DEFAULT_NODE_BUDGET,
            bootstrap: 200,
        }
    }
}

/// `0, 1/k, 2/k, ..., horizon`.
pub fn uniform_grid(horizon: f64, per_unit: usize) -> Vec<f64> {
    let steps = (horizon * per_unit as f64).round().max(1.0) as usize;
    (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect()
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas == 0 {
        return Err(invalid("replicas must be positive"));
    }
    Ok(())
}

/// `|xi_t|` on `grid` for each replica.
pub fn tree_counts(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    opts: &TreeRunOptions,
) -> Result<Vec<Vec<usize>>> {
    check_replicas(replicas)?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let run = simulate_tree(
                d,
                params,
                horizon,
                opts.severed,
                replica_seed(seed, r as u64),
                grid,
                opts.node_budget,
            )?;
            Ok(run.samples.iter().map(|s| s.infected).collect())
        })
        .collect()
}

fn window_indices(grid: &[f64], window: (f64, f64)) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| grid[i] >= window.0 && grid[i] <= window.1)
        .collect()
}

fn log_slope(grid: &[f64], values: &[f64], idx: &[usize]) -> Option<f64> {
    if idx.iter().any(|&i| !(values[i] > 0.0)) || idx.len() < 2 {
        return None;
    }
    let x: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| values[i].ln()).collect();
    Some(stats::ols(&x, &y).slope)
}

fn column_means(rows: &[Vec<usize>], pick: impl Fn(usize) -> usize, power: i32) -> Vec<f64> {
    let len = rows.first().map_or(0, |r| r.len());
    let mut acc = vec![0.0; len];
    let n = rows.len();
    for i in 0..n {
        let row = &rows[pick(i)];
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += (x as f64).powi(power);
        }
    }
    acc.iter().map(|a| a / n as f64).collect()
}

/// Bootstrap standard deviation and percentile interval of `stat`.
fn bootstrap<F>(n: usize, b: usize, seed: u64, stat: F) -> Vec<Vec<f64>>
where
    F: Fn(&[usize]) -> Vec<f64> + Sync,
{
    (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(replica_seed(seed, k as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx)
        })
        .collect()
}

/// Least-squares slope of the log unconditional mean over the window
/// `[horizon/2, horizon]`, with a bootstrap standard error.
pub fn estimate_c_lambda(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<GrowthEstimate> {
    estimate_c_lambda_with(d, params, horizon, replicas, seed, None, &TreeRunOptions::default())
}

pub fn estimate_c_lambda_with(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
    window: Option<(f64, f64)>,
    opts: &TreeRunOptions,
) -> Result<GrowthEstimate> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let window = window.unwrap_or((horizon / 2.0, horizon));
    if !(window.0 >= 0.0 && window.0 < window.1 && window.1 <= horizon) {
        return Err(invalid(format!("window {window:?} not inside [0, {horizon}]")));
    }
    let grid = uniform_grid(horizon, opts.grid_density);
    let counts = tree_counts(d, params, horizon, &grid, replicas, seed, opts)?;
    let mean = column_means(&counts, |i| i, 1);
    let idx = window_indices(&grid, window);
    let c_hat = log_slope(&grid, &mean, &idx).ok_or_else(|| {
        Error::Estimation(format!(
            "mean infection hit 0 on the window at lambda = {}",
            params.lambda
        ))
    })?;
    let boots = bootstrap(replicas, opts.bootstrap, substream(seed, 0xB007), |pick| {
        let m = column_means(&counts, |i| pick[i], 1);
        log_slope(&grid, &m, &idx).into_iter().collect()
    });
    let slopes: Vec<f64> = boots.into_iter().flatten().collect();
    let mut stderr = if slopes.len() >= 2 {
        stats::variance(&slopes).sqrt()
    } else {
        f64::NAN
    };
    if !(stderr > 0.0) {
        let x: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| mean[i].ln()).collect();
        stderr = stats::ols(&x, &y).slope_stderr.max(f64::EPSILON);
    }
    Ok(GrowthEstimate {
        c_hat,
        stderr,
        window,
        replicas,
        severed: opts.severed,
        grid,
        mean,
    })
}

/// Runs one tree process until `horizon`, extinction, or until it holds
/// `certify` infected vertices at once (counted as surviving).
fn survives(
    shape: TreeShape,
    params: ProcessParams,
    horizon: f64,
    certify: usize,
    seed: u64,
    budget: usize,
) -> Result<bool> {
    let mut tree = LazyTree::new(shape, budget);
    let mut proc = TreeContact::new(&tree, params);
    let mut rng = rng_from_seed(seed);
    while proc.step(&mut tree, &mut rng, horizon)? {
        if proc.infected_count() >= certify {
            return Ok(true);
        }
    }
    Ok(proc.infected_count() > 0)
}

/// Default infected-set size at which survival is treated as settled.
pub const DEFAULT_CERTIFY_SIZE: usize = 2000;

/// Fraction of replicas alive at `horizon`, with a 95% Wilson interval.
pub fn estimate_survival(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<SurvivalEstimate> {
    estimate_survival_with(d, params, horizon, replicas, seed, DEFAULT_CERTIFY_SIZE, &TreeRunOptions::default())
}

pub fn estimate_survival_with(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
    certify: usize,
    opts: &TreeRunOptions,
) -> Result<SurvivalEstimate> {
    check_replicas(replicas)?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let shape = TreeShape::new(d, opts.severed)?;
    let alive: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            survives(
                shape,
                params,
                horizon,
                certify,
                replica_seed(seed, r as u64),
                opts.node_budget,
            )
        })
        .collect::<Result<_>>()?;
    let survivors = alive.iter().filter(|&&a| a).count();
    Ok(SurvivalEstimate {
        p_hat: survivors as f64 / replicas as f64,
        ci: stats::wilson(survivors, replicas, 0.95),
        horizon,
        replicas,
        survivors,
    })
}

/// Empirical moments `E|xi_t|^n`, `n = 1..=n_max`, with bootstrap 95%
/// percentile intervals and fitted growth rates.
pub fn estimate_moments(
    d: usize,
    params: ProcessParams,
    n_max: u32,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    if n_max == 0 || n_max > 4 {
        return Err(invalid(format!("n_max must be in 1..=4, got {n_max}")));
    }
    let opts = TreeRunOptions::default();
    let grid = uniform_grid(horizon, opts.grid_density);
    let counts = tree_counts(d, params, horizon, &grid, replicas, seed, &opts)?;
    let idx = window_indices(&grid, (horizon / 2.0, horizon));
    let mut out = Vec::new();
    for n in 1..=n_max {
        let moments = column_means(&counts, |i| i, n as i32);
        let boots = bootstrap(replicas, opts.bootstrap, substream(seed, 0xB000 + n as u64), |pick| {
            column_means(&counts, |i| pick[i], n as i32)
        });
        let mut lo = Vec::with_capacity(grid.len());
        let mut hi = Vec::with_capacity(grid.len());
        for g in 0..grid.len() {
            let col: Vec<f64> = boots.iter().map(|b| b[g]).collect();
            lo.push(stats::quantile(&col, 0.025));
            hi.push(stats::quantile(&col, 0.975));
        }
        let growth_rate = log_slope(&grid, &moments, &idx).unwrap_or(f64::NAN);
        out.push(MomentEstimate {
            n,
            grid: grid.clone(),
            moments,
            ci_low: lo,
            ci_high: hi,
            growth_rate,
        });
    }
    Ok(out)
}

/// Grid times at which `(E|xi_t|^n)^{1/n}` fails to be non-decreasing in `n`.
pub fn moment_order_violations(moments: &[MomentEstimate]) -> Vec<f64> {
    let Some(first) = moments.first() else {
        return Vec::new();
    };
    (0..first.grid.len())
        .filter(|&g| {
            moments.windows(2).any(|w| {
                let a = w[0].moments[g].powf(1.0 / w[0].n as f64);
                let b = w[1].moments[g].powf(1.0 / w[1].n as f64);
                b < a * (1.0 - 1e-12)
            })
        })
        .map(|g| first.grid[g])
        .collect()
}

/// `P(log|xi_t| <= c_hat t - t^delta | xi_t != ∅)` at each `t`.
#[allow(clippy::too_many_arguments)]
pub fn left_tail(
    d: usize,
    params: ProcessParams,
    delta: f64,
    c_hat: f64,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
    opts: &TreeRunOptions,
) -> Result<Vec<TailPoint>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    let horizon = t_grid
        .iter()
        .copied()
        .fold(f64::NAN, f64::max);
    if !(horizon > 0.0) {
        return Err(invalid("t grid must contain a positive time"));
    }
    let counts = tree_counts(d, params, horizon, t_grid, replicas, seed, opts)?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let threshold = c_hat * t - t.powf(delta);
            let alive: Vec<usize> = counts.iter().map(|r| r[g]).filter(|&x| x > 0).collect();
            let hits = alive.iter().filter(|&&x| (x as f64).ln() <= threshold).count();
            TailPoint {
                t,
                frequency: if alive.is_empty() {
                    f64::NAN
                } else {
                    hits as f64 / alive.len() as f64
                },
                ci: stats::wilson(hits, alive.len(), 0.95),
                alive: alive.len(),
            }
        })
        .collect())
}

/// Mean size of the intersection of the histories of two independent
/// processes started from the root of the same tree.
pub fn history_intersection(
    d: usize,
    params: ProcessParams,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    node_budget: usize,
) -> Result<IntersectionEstimate> {
    check_replicas(replicas)?;
    let horizon = grid.iter().copied().fold(0.0, f64::max);
    if !(horizon > 0.0) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("grid must be sorted with a positive last time"));
    }
    let shape = TreeShape::new(d, false)?;
    let per: Vec<(Vec<usize>, Vec<usize>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, r as u64);
            let mut tree = LazyTree::new(shape, node_budget);
            let mut a = TreeContact::new(&tree, params);
            let mut rng = rng_from_seed(substream(s, 1));
            while a.step(&mut tree, &mut rng, horizon)? {}
            let mut b = TreeContact::new(&tree, params);
            let mut rng = rng_from_seed(substream(s, 2));
            while b.step(&mut tree, &mut rng, horizon)? {}
            let mut both = Vec::new();
            let mut first_a = Vec::new();
            for x in 0..tree.len() {
                if let Some(ta) = a.first_infection(x) {
                    first_a.push(ta);
                    if let Some(tb) = b.first_infection(x) {
                        both.push(ta.max(tb));
                    }
                }
            }
            let count = |times: &[f64], t: f64| times.iter().filter(|&&s| s <= t).count();
            Ok((
                grid.iter().map(|&t| count(&both, t)).collect(),
                grid.iter().map(|&t| count(&first_a, t)).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    let mut history_mean = Vec::new();
    for g in 0..grid.len() {
        let col: Vec<f64> = per.iter().map(|p| p.0[g] as f64).collect();
        mean.push(stats::mean(&col));
        stderr.push(stats::std_error(&col));
        let h: Vec<f64> = per.iter().map(|p| p.1[g] as f64).collect();
        history_mean.push(stats::mean(&h));
    }
    Ok(IntersectionEstimate {
        grid: grid.to_vec(),
        mean,
        stderr,
        history_mean,
        replicas,
    })
}

/// `P(root infected at t | alive at t)` at each grid time.
pub fn root_occupancy(
    d: usize,
    params: ProcessParams,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    node_budget: usize,
) -> Result<Vec<f64>> {
    check_replicas(replicas)?;
    let horizon = grid.iter().copied().fold(0.0, f64::max);
    let shape = TreeShape::new(d, false)?;
    let rows: Vec<Vec<(bool, bool)>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut tree = LazyTree::new(shape, node_budget);
            let mut p = TreeContact::new(&tree, params);
            let mut rng = rng_from_seed(replica_seed(seed, r as u64));
            let mut out = Vec::with_capacity(grid.len());
            let mut gi = 0;
            loop {
                let snap = (p.infected_count() > 0, p.is_infected(LazyTree::ROOT));
                let more = p.step(&mut tree, &mut rng, horizon)?;
                while gi < grid.len() && grid[gi] < p.time() {
                    out.push(snap);
                    gi += 1;
                }
                if !more {
                    let fin = (p.infected_count() > 0, p.is_infected(LazyTree::ROOT));
                    out.resize(grid.len(), fin);
                    return Ok(out);
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok((0..grid.len())
        .map(|g| {
            let alive = rows.iter().filter(|r| r[g].0).count();
            let root = rows.iter().filter(|r| r[g].1).count();
            if alive == 0 {
                f64::NAN
            } else {
                root as f64 / alive as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub lambda: f64,
    pub c_hat: f64,
    pub c_stderr: f64,
    pub p_hat: f64,
    /// Root occupancy given survival at half the occupancy horizon and at
    /// the full horizon.
    pub occupancy_half: f64,
    pub occupancy_full: f64,
    /// Median extinction time (capped) on random regular graphs, one per
    /// entry of the graph N grid, started from all vertices infected.
    pub graph_tau_median: Vec<f64>,
    /// Largest-N median over smallest-N median.
    pub graph_tau_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub d: usize,
    pub rows: Vec<CalibrationRow>,
    pub graph_n_grid: Vec<usize>,
    /// Grid neighbors between which graph extinction times switch from
    /// logarithmic to exponential growth in N.
    pub lambda1_bracket: Option<(f64, f64)>,
    /// Grid neighbors between which the tree growth rate turns positive.
    pub lambda1_tree_bracket: Option<(f64, f64)>,
    /// Grid neighbors between which root occupancy stops decaying.
    pub lambda2_bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub growth_horizon: f64,
    pub occupancy_horizon: f64,
    pub replicas: usize,
    /// Occupancy is "not decaying" when full/half is at least this ratio.
    pub persistence_ratio: f64,
    pub node_budget: usize,
    pub graph_n_grid: Vec<usize>,
    pub graph_replicas: usize,
    /// Extinction times are censored here.
    pub graph_time_cap: f64,
    /// Median ratio above which extinction counts as exponentially slow; a
    /// censored median at the largest N counts as slow too.
    pub graph_ratio_threshold: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            growth_horizon: 8.0,
            occupancy_horizon: 8.0,
            replicas: 2000,
            persistence_ratio: 0.9,
            node_budget: DEFAULT_NODE_BUDGET,
            graph_n_grid: vec![100, 200, 400],
            graph_replicas: 40,
            graph_time_cap: 200.0,
            graph_ratio_threshold: 2.0,
        }
    }
}

/// Median extinction time from full occupancy on sampled d-regular graphs,
/// censored at `cap`.
pub fn graph_extinction_median(d: usize, params: ProcessParams, n: usize, replicas: usize, cap: f64, seed: u64) -> Result<f64> {
    let times: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, r as u64);
            let g = crate::graph::Multigraph::sample(n, d, substream(s, 1))?;
            let all: Vec<usize> = (0..n).collect();
            let mut e = crate::harris::FastContact::new(g.network(), params, &all)?;
            let mut rng = rng_from_seed(substream(s, 2));
            loop {
                match e.step(&mut rng, cap) {
                    crate::harris::Step::Jump(_) => {}
                    crate::harris::Step::Extinct => return Ok(e.time()),
                    crate::harris::Step::Horizon => return Ok(cap),
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(stats::median(&times))
}

/// Heuristic brackets for the weak and strong survival thresholds.
///
/// The lower threshold is bracketed where extinction times on random regular
/// graphs stop growing like `log N` and blow up across the N grid; the tree
/// growth rate turning significantly positive gives a second bracket. The
/// upper one is where the conditional root occupancy stops decaying between
/// half and full horizon.
pub fn calibrate(d: usize, lambdas: &[f64], seed: u64, opts: &CalibrationOptions) -> Result<CalibrationReport> {
    if opts.graph_n_grid.iter().any(|&n| n == 0 || n * d % 2 != 0) {
        return Err(invalid("graph N grid needs N*d even and N > 0"));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) || lambdas.is_empty() {
        return Err(invalid("lambda grid must be non-empty and strictly increasing"));
    }
    let run_opts = TreeRunOptions {
        node_budget: opts.node_budget,
        ..TreeRunOptions::default()
    };
    let mut rows = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let params = ProcessParams::new(lambda)?;
        let s = substream(seed, i as u64);
        let g = estimate_c_lambda_with(d, params, opts.growth_horizon, opts.replicas, s, None, &run_opts);
        let (c_hat, c_stderr) = match g {
            Ok(g) => (g.c_hat, g.stderr),
            Err(Error::Estimation(_)) => (f64::NEG_INFINITY, f64::NAN),
            Err(e) => return Err(e),
        };
        let surv = estimate_survival_with(
            d,
            params,
            opts.growth_horizon,
            opts.replicas,
            substream(s, 7),
            DEFAULT_CERTIFY_SIZE,
            &run_opts,
        )?;
        let h = opts.occupancy_horizon;
        let occ = root_occupancy(d, params, &[h / 2.0, h], opts.replicas, substream(s, 9), opts.node_budget)?;
        let graph_tau_median = opts
            .graph_n_grid
            .iter()
            .map(|&n| {
                graph_extinction_median(d, params, n, opts.graph_replicas, opts.graph_time_cap, substream(s, 11 + n as u64))
            })
            .collect::<Result<Vec<f64>>>()?;
        let graph_tau_ratio = match (graph_tau_median.first(), graph_tau_median.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => b / a,
            _ => f64::NAN,
        };
        rows.push(CalibrationRow {
            lambda,
            c_hat,
            c_stderr,
            p_hat: surv.p_hat,
            occupancy_half: occ[0],
            occupancy_full: occ[1],
            graph_tau_median,
            graph_tau_ratio,
        });
    }
    let positive = |r: &CalibrationRow| r.c_hat - 2.0 * r.c_stderr > 0.0;
    let slow = |r: &CalibrationRow| {
        r.graph_tau_ratio >= opts.graph_ratio_threshold
            || r.graph_tau_median.last().is_some_and(|&m| m >= opts.graph_time_cap)
    };
    let persistent = |r: &CalibrationRow| {
        r.occupancy_half > 0.0 && r.occupancy_full >= opts.persistence_ratio * r.occupancy_half
    };
    let bracket = |pred: &dyn Fn(&CalibrationRow) -> bool| {
        rows.windows(2)
            .find(|w| !pred(&w[0]) && pred(&w[1]))
            .map(|w| (w[0].lambda, w[1].lambda))
    };
    Ok(CalibrationReport {
        d,
        graph_n_grid: opts.graph_n_grid.clone(),
        lambda1_bracket: bracket(&slow),
        lambda1_tree_bracket: bracket(&positive),
        lambda2_bracket: bracket(&persistent),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_decays_at_rate_one() {
        let p = ProcessParams::new(0.0).unwrap();
        let g = estimate_c_lambda(3, p, 3.0, 20_000, 1).unwrap();
        assert!((g.c_hat + 1.0).abs() < 4.0 * g.stderr + 0.02, "{} {}", g.c_hat, g.stderr);
        assert!(g.stderr > 0.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        let p = ProcessParams::new(0.0).unwrap();
        assert!(matches!(
            estimate_c_lambda(3, p, 40.0, 100, 1),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn survival_basics() {
        let p0 = ProcessParams::new(0.0).unwrap();
        let s = estimate_survival(3, p0, 30.0, 500, 2).unwrap();
        assert_eq!(s.survivors, 0);
        let lo = estimate_survival(3, ProcessParams::new(1.0).unwrap(), 8.0, 1000, 3).unwrap();
        let hi = estimate_survival(3, ProcessParams::new(2.0).unwrap(), 8.0, 1000, 3).unwrap();
        assert!(hi.p_hat >= lo.p_hat);
        assert!(lo.ci.0 <= lo.p_hat && lo.p_hat <= lo.ci.1);
    }

    #[test]
    fn first_moment_is_the_growth_mean() {
        let p = ProcessParams::new(1.0).unwrap();
        let m = estimate_moments(3, p, 3, 4.0, 500, 5).unwrap();
        let g = estimate_c_lambda(3, p, 4.0, 500, 5).unwrap();
        assert_eq!(m[0].moments, g.mean);
        assert!(moment_order_violations(&m).is_empty());
        assert!(estimate_moments(3, p, 5, 4.0, 10, 5).is_err());
    }

    #[test]
    fn intersection_starts_at_root() {
        let p = ProcessParams::new(0.8).unwrap();
        let e = history_intersection(3, p, &[0.0, 1.0, 3.0], 300, 4, 1_000_000).unwrap();
        assert_eq!(e.mean[0], 1.0);
        assert!(e.mean.iter().zip(&e.history_mean).all(|(i, h)| i <= h));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = ProcessParams::new(1.1).unwrap();
        let a = estimate_c_lambda(3, p, 3.0, 200, 9).unwrap();
        let b = estimate_c_lambda(3, p, 3.0, 200, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_json_fields() {
        let s = EstimateSummary {
            name: "c_lambda".into(),
            estimate: 0.5,
            stderr: 0.01,
            window: Some((2.0, 4.0)),
            replicas: 10,
            seed: 1,
        };
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        for k in ["estimate", "stderr", "window", "replicas", "seed"] {
            assert!(v.get(k).is_some());
        }
    }
}
