//! Scenario runner: reads a config, runs the experiment, writes CSV and a
//! JSON manifest into the output directory.

pub mod config;
pub mod main_theorem;
pub mod output;
pub mod scenarios;

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

pub use config::{Scenario, ScenarioConfig};
pub use main_theorem::{run_main_theorem, MainTheoremResult, Phase};
pub use output::{Manifest, OutputSet};

use crate::cover::write_clash_csv;
use crate::error::{invalid, Result};
use crate::estimators::{
    calibrate, estimate_c_lambda_with, estimate_moments, left_tail, moment_order_violations, CalibrationOptions,
    TreeRunOptions,
};
use crate::harris::ProcessParams;
use crate::rng::{replica_seed, substream};
use crate::tree::simulate_tree;
use output::fmt_opt;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
            self.echo.insert("seed".into(), s.to_string());
        }
        if let Some(t) = o.threads {
            self.threads = t;
            self.echo.insert("threads".into(), t.to_string());
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
            self.echo.insert("out_dir".into(), d.display().to_string());
        }
        self.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

/// Runs the configured scenario on a pool of `cfg.threads` workers.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| invalid(format!("cannot start {} worker threads: {e}", cfg.threads)))?;
    let start = Instant::now();
    let mut out = OutputSet::create(&cfg.out_dir)?;
    let warnings = pool.install(|| dispatch(cfg, &mut out))?;
    let manifest = out.finish(
        cfg.scenario.name(),
        cfg.echo.clone(),
        cfg.seed,
        cfg.threads,
        start.elapsed().as_secs_f64(),
        warnings,
    )?;
    Ok(RunReport {
        manifest,
        out_dir: cfg.out_dir.clone(),
    })
}

fn lambda_of(cfg: &ScenarioConfig) -> Result<f64> {
    cfg.lambda
        .ok_or_else(|| invalid(format!("scenario {} requires lambda", cfg.scenario)))
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

#[derive(Serialize)]
struct GrowthReport {
    lambda: f64,
    c_hat: f64,
    c_stderr: f64,
    window: (f64, f64),
    severed_c_hat: Option<f64>,
    /// Range of `mean * exp(-c_hat t)` over the fit window.
    normalized_min: f64,
    normalized_max: f64,
    sandwich: (f64, f64),
    sandwich_pass: bool,
    moment_growth_rates: Vec<(u32, f64)>,
    moment_order_violations: Vec<f64>,
    left_tail: Vec<crate::estimators::TailPoint>,
    left_tail_severed: Vec<crate::estimators::TailPoint>,
}

fn dispatch(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let run_opts = TreeRunOptions {
        node_budget: cfg.node_budget,
        ..TreeRunOptions::default()
    };
    match cfg.scenario {
        Scenario::MainTheorem => {
            let r = run_main_theorem(cfg)?;
            let lambda_of_phase = |p: Phase| match p {
                Phase::Weak => cfg.lambda_weak,
                Phase::Strong => cfg.lambda_strong,
            };
            out.write_csv(
                "main_theorem.csv",
                &["phase", "lambda", "N", "replica", "k", "I_k", "survived_cond"],
                r.rows.iter().map(|row| {
                    vec![
                        s(row.phase.name()),
                        fmt_opt(lambda_of_phase(row.phase)),
                        s(row.n),
                        s(row.replica),
                        s(row.k),
                        fmt_opt(row.i_k),
                        s(row.survived_cond),
                    ]
                }),
            )?;
            out.write_json("main_theorem_summary.json", &r.phases)?;
            warnings.extend(r.warnings);
        }
        Scenario::CalibrateLambdas => {
            let h = cfg.horizon.unwrap_or(8.0);
            let opts = CalibrationOptions {
                growth_horizon: h,
                occupancy_horizon: h,
                replicas: cfg.replicas,
                node_budget: cfg.node_budget,
                ..CalibrationOptions::default()
            };
            let rep = calibrate(cfg.d, &cfg.lambda_grid, cfg.seed, &opts)?;
            out.write_csv(
                "calibration.csv",
                &[
                    "lambda",
                    "c_hat",
                    "c_stderr",
                    "p_hat",
                    "occupancy_half",
                    "occupancy_full",
                    "graph_tau_ratio",
                ],
                rep.rows.iter().map(|r| {
                    vec![
                        s(r.lambda),
                        s(r.c_hat),
                        s(r.c_stderr),
                        s(r.p_hat),
                        s(r.occupancy_half),
                        s(r.occupancy_full),
                        s(r.graph_tau_ratio),
                    ]
                }),
            )?;
            if rep.lambda1_bracket.is_none() {
                warnings.push("no lower-threshold bracket found on the grid".into());
            }
            if rep.lambda2_bracket.is_none() {
                warnings.push("no upper-threshold bracket found on the grid".into());
            }
            out.write_json("calibration.json", &rep)?;
        }
        Scenario::ClashTime => {
            let lambda = lambda_of(cfg)?;
            let params = ProcessParams::new(lambda)?;
            let g = estimate_c_lambda_with(
                cfg.d,
                params,
                cfg.c_horizon.unwrap_or(8.0),
                cfg.c_replicas,
                substream(cfg.seed, 0xC0),
                None,
                &run_opts,
            )?;
            let (rows, summary) = scenarios::clash_time_table(
                &cfg.n_grid,
                cfg.d,
                lambda,
                cfg.horizon.unwrap_or(100.0),
                cfg.replicas,
                cfg.seed,
                g.c_hat,
            )?;
            let mut buf = Vec::new();
            write_clash_csv(&mut buf, &rows)?;
            out.write("clash_time.csv", &buf)?;
            out.write_json("clash_time_summary.json", &summary)?;
        }
        Scenario::SurvivingTypes => {
            let lambda = lambda_of(cfg)?;
            let k = cfg.k.unwrap_or(50);
            let horizon = cfg.horizon.unwrap_or(k as f64 + 40.0);
            let (rows, summary) = scenarios::surviving_types_table(
                cfg.d,
                lambda,
                k,
                horizon,
                cfg.replicas,
                cfg.c_replicas,
                cfg.seed,
                cfg.node_budget,
            )?;
            out.write_csv(
                "surviving_types.csv",
                &["replica", "k", "survivors", "union_size"],
                rows.iter()
                    .map(|r| vec![s(r.replica), s(r.k), s(r.survivors), s(r.union_size)]),
            )?;
            out.write_json("surviving_types_summary.json", &summary)?;
        }
        Scenario::Duality => {
            let rows = scenarios::duality_table(cfg.lambda.unwrap_or(1.0), cfg.replicas, cfg.seed)?;
            let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            out.write_csv(
                "duality.csv",
                &["graph", "A", "B", "t", "p_AB", "p_BA", "z", "exact", "pass"],
                rows.iter().map(|r| {
                    vec![
                        r.graph.clone(),
                        join(&r.a),
                        join(&r.b),
                        s(r.t),
                        s(r.p_ab),
                        s(r.p_ba),
                        s(r.z),
                        s(r.exact),
                        s(r.pass),
                    ]
                }),
            )?;
        }
        Scenario::GrowthConcentration => {
            let lambda = lambda_of(cfg)?;
            let params = ProcessParams::new(lambda)?;
            let horizon = cfg.horizon.unwrap_or(8.0);
            let grid = crate::estimators::uniform_grid(horizon, run_opts.grid_density);
            let traj: Vec<Vec<String>> = (0..cfg.replicas)
                .map(|r| {
                    let run = simulate_tree(
                        cfg.d,
                        params,
                        horizon,
                        false,
                        replica_seed(substream(cfg.seed, 5), r as u64),
                        &grid,
                        cfg.node_budget,
                    )?;
                    Ok(run
                        .grid
                        .iter()
                        .zip(&run.samples)
                        .map(|(t, x)| {
                            vec![s(r), s(t), s(x.infected), s(x.history), s(x.pioneers), s(x.infected > 0)]
                        })
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            out.write_csv("trajectories.csv", &["replica", "t", "xi", "history", "pioneers", "alive"], traj)?;
            let g = estimate_c_lambda_with(cfg.d, params, horizon, cfg.c_replicas, cfg.seed, None, &run_opts)?;
            let severed_opts = TreeRunOptions {
                severed: true,
                ..run_opts.clone()
            };
            let severed = estimate_c_lambda_with(cfg.d, params, horizon, cfg.c_replicas, cfg.seed, None, &severed_opts)
                .ok()
                .map(|e| e.c_hat);
            let norm: Vec<f64> = g.normalized_window_means().iter().map(|x| x.1).collect();
            let (lo, hi) = norm
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let sandwich = (1.0 - 0.15, cfg.d as f64 / (cfg.d as f64 - 2.0) + 0.15);
            let moments = estimate_moments(cfg.d, params, 3, horizon, cfg.c_replicas, cfg.seed)?;
            let t_grid = if cfg.t_grid.is_empty() {
                vec![horizon / 3.0, 2.0 * horizon / 3.0, horizon]
            } else {
                cfg.t_grid.clone()
            };
            let tail = left_tail(cfg.d, params, cfg.delta, g.c_hat, &t_grid, cfg.c_replicas, cfg.seed, &run_opts)?;
            let tail_sev = left_tail(cfg.d, params, cfg.delta, g.c_hat, &t_grid, cfg.c_replicas, cfg.seed, &severed_opts)?;
            let report = GrowthReport {
                lambda,
                c_hat: g.c_hat,
                c_stderr: g.stderr,
                window: g.window,
                severed_c_hat: severed,
                normalized_min: lo,
                normalized_max: hi,
                sandwich,
                sandwich_pass: lo >= sandwich.0 && hi <= sandwich.1,
                moment_growth_rates: moments.iter().map(|m| (m.n, m.growth_rate)).collect(),
                moment_order_violations: moment_order_violations(&moments),
                left_tail: tail,
                left_tail_severed: tail_sev,
            };
            out.write_json("growth.json", &report)?;
        }
        Scenario::OracleValidation => {
            let lambdas = if cfg.lambda_grid.is_empty() {
                vec![0.5, 1.0, 2.0]
            } else {
                cfg.lambda_grid.clone()
            };
            let rows = scenarios::oracle_validation_table(&lambdas, cfg.replicas, cfg.seed)?;
            out.write_csv(
                "oracle_validation.csv",
                &["graph", "lambda", "exact", "mc_mean", "mc_stderr", "z", "pass"],
                rows.iter().map(|r| {
                    vec![
                        r.graph.clone(),
                        s(r.lambda),
                        s(r.exact),
                        s(r.mc_mean),
                        s(r.mc_stderr),
                        s(r.z),
                        s(r.pass),
                    ]
                }),
            )?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                warnings.push(format!("{failed} oracle comparisons outside 3 standard errors"));
            }
        }
        Scenario::LocalLimit => {
            let rows = scenarios::local_limit_table(cfg.d, &cfg.n_grid, cfg.radius, cfg.replicas, cfg.seed)?;
            out.write_csv(
                "local_limit.csv",
                &["N", "radius", "samples", "tree_fraction", "simple_fraction", "simple_limit"],
                rows.iter().map(|r| {
                    vec![
                        s(r.n),
                        s(r.radius),
                        s(r.samples),
                        s(r.tree_fraction),
                        s(r.simple_fraction),
                        s(r.simple_limit),
                    ]
                }),
            )?;
        }
    }
    Ok(warnings)
}
