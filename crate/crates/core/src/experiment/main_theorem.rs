//! Reinfection times of the marked vertex on random regular graphs in the
//! weak and strong survival phases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::error::Result;
use crate::estimators::{estimate_c_lambda_with, TreeRunOptions};
use crate::graph::Multigraph;
use crate::harris::{record_reinfections_with, ProcessParams, ReinfectionOptions};
use crate::rng::{replica_seed, substream};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Weak,
    Strong,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Weak => "weak",
            Phase::Strong => "strong",
        }
    }
}

/// One attempted replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremRow {
    pub phase: Phase,
    pub n: usize,
    pub replica: usize,
    pub k: usize,
    /// Missing when the replica did not survive the conditioning or did not
    /// reach `k` reinfections before the horizon.
    pub i_k: Option<f64>,
    pub survived_cond: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub n: usize,
    pub k: usize,
    pub attempts: usize,
    pub survivors: usize,
    /// Survivors whose `k`-th reinfection was not seen before the horizon.
    pub censored: usize,
    pub median_i_k: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub lambda: f64,
    pub c_hat: f64,
    pub c_stderr: f64,
    pub points: Vec<PhasePoint>,
    /// OLS slope of the median `I_k` against `ln N`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// `1/c_hat` in the weak phase, 0 in the strong phase.
    pub target_slope: f64,
    /// Weak: `|slope c_hat - 1|`; strong: `|slope| c_hat`.
    pub slope_error: f64,
    /// Spearman correlation of the median `I_k` with `(ln N)^epsilon`.
    pub spearman_log_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremResult {
    pub rows: Vec<MainTheoremRow>,
    pub phases: Vec<PhaseSummary>,
    pub warnings: Vec<String>,
}

/// `floor((ln N)^epsilon)`, at least 1.
pub fn k_for(n: usize, epsilon: f64) -> usize {
    ((n as f64).ln().powf(epsilon).floor() as usize).max(1)
}

/// Default conditioning time `max(10, ln ln N)`.
pub fn default_t_cond(n: usize) -> f64 {
    (n as f64).ln().ln().max(10.0)
}

const BATCH: usize = 64;
const MIN_SURVIVORS: usize = 100;

fn median_with_censoring(values: &[Option<f64>]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    (
        stats::quantile(&v, 0.5),
        stats::quantile(&v, 0.25),
        stats::quantile(&v, 0.75),
    )
}

fn run_point(cfg: &ScenarioConfig, phase: Phase, lambda: f64, n: usize) -> Result<(Vec<MainTheoremRow>, PhasePoint)> {
    let params = ProcessParams::new(lambda)?;
    let k = k_for(n, cfg.epsilon);
    let t_cond = cfg.t_cond.unwrap_or_else(|| default_t_cond(n));
    let horizon = cfg.horizon.unwrap_or(1e4).max(t_cond);
    let certify = cfg.certify_size.unwrap_or((n / 10).clamp(1, 1000));
    let target = cfg.replicas;
    let max_attempts = cfg.max_attempts.unwrap_or(50 * target);
    let stream = substream(substream(cfg.seed, phase as u64 + 11), n as u64);
    let opts = ReinfectionOptions {
        condition_time: Some(t_cond),
        certify_size: Some(certify),
    };
    let mut rows = Vec::new();
    let mut survivors = 0;
    let mut next = 0;
    while survivors < target && next < max_attempts {
        let end = (next + BATCH).min(max_attempts);
        let batch: Vec<Result<MainTheoremRow>> = (next..end)
            .into_par_iter()
            .map(|r| {
                let s = replica_seed(stream, r as u64);
                let g = Multigraph::sample(n, cfg.d, substream(s, 1))?;
                let rec = record_reinfections_with(g.network(), 0, params, horizon, k, substream(s, 2), opts)?;
                let survived_cond = rec.extinction_time.is_none_or(|t| t > t_cond);
                Ok(MainTheoremRow {
                    phase,
                    n,
                    replica: r,
                    k,
                    i_k: if survived_cond { rec.kth(k) } else { None },
                    survived_cond,
                })
            })
            .collect();
        // Keep attempts in index order up to the one that completes the
        // target, so the result does not depend on the batch size.
        for row in batch {
            let row = row?;
            if row.survived_cond {
                survivors += 1;
            }
            rows.push(row);
            if survivors >= target {
                break;
            }
        }
        next = end;
    }
    let ik: Vec<Option<f64>> = rows.iter().filter(|r| r.survived_cond).map(|r| r.i_k).collect();
    let (median_i_k, q25, q75) = median_with_censoring(&ik);
    let point = PhasePoint {
        n,
        k,
        attempts: rows.len(),
        survivors,
        censored: ik.iter().filter(|x| x.is_none()).count(),
        median_i_k,
        q25,
        q75,
    };
    Ok((rows, point))
}

/// Runs every configured phase over the N grid and fits the phase slopes.
pub fn run_main_theorem(cfg: &ScenarioConfig) -> Result<MainTheoremResult> {
    let mut phases_in = Vec::new();
    if let Some(l) = cfg.lambda_weak {
        phases_in.push((Phase::Weak, l));
    }
    if let Some(l) = cfg.lambda_strong {
        phases_in.push((Phase::Strong, l));
    }
    let mut rows = Vec::new();
    let mut phases = Vec::new();
    let mut warnings = Vec::new();
    for (phase, lambda) in phases_in {
        let params = ProcessParams::new(lambda)?;
        let c_horizon = cfg.c_horizon.unwrap_or(match phase {
            Phase::Weak => 8.0,
            Phase::Strong => 5.0,
        });
        let run_opts = TreeRunOptions {
            node_budget: cfg.node_budget,
            ..TreeRunOptions::default()
        };
        let (c_hat, c_stderr) = match estimate_c_lambda_with(
            cfg.d,
            params,
            c_horizon,
            cfg.c_replicas,
            substream(cfg.seed, 0xC0 + phase as u64),
            None,
            &run_opts,
        ) {
            Ok(g) => (g.c_hat, g.stderr),
            Err(crate::error::Error::Estimation(msg)) => {
                warnings.push(format!("{} phase: growth rate unavailable ({msg})", phase.name()));
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e),
        };
        let mut points = Vec::new();
        for &n in &cfg.n_grid {
            let (r, p) = run_point(cfg, phase, lambda, n)?;
            if p.survivors < MIN_SURVIVORS {
                warnings.push(format!(
                    "{} phase, N = {n}: only {} surviving replicas",
                    phase.name(),
                    p.survivors
                ));
            }
            rows.extend(r);
            points.push(p);
        }
        let usable: Vec<&PhasePoint> = points.iter().filter(|p| p.median_i_k.is_finite()).collect();
        let x: Vec<f64> = usable.iter().map(|p| (p.n as f64).ln()).collect();
        let y: Vec<f64> = usable.iter().map(|p| p.median_i_k).collect();
        let (slope, slope_stderr) = if usable.len() >= 2 {
            let f = stats::ols(&x, &y);
            (f.slope, f.slope_stderr)
        } else {
            (f64::NAN, f64::NAN)
        };
        let xe: Vec<f64> = x.iter().map(|l| l.powf(cfg.epsilon)).collect();
        let spearman_log_eps = if usable.len() >= 2 {
            stats::spearman(&xe, &y)
        } else {
            f64::NAN
        };
        let (target_slope, slope_error) = match phase {
            Phase::Weak => (1.0 / c_hat, (slope * c_hat - 1.0).abs()),
            Phase::Strong => (0.0, slope.abs() * c_hat),
        };
        phases.push(PhaseSummary {
            phase,
            lambda,
            c_hat,
            c_stderr,
            points,
            slope,
            slope_stderr,
            target_slope,
            slope_error,
            spearman_log_eps,
        });
    }
    Ok(MainTheoremResult { rows, phases, warnings })
}
