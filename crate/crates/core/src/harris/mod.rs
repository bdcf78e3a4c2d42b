//! Contact process on finite multigraphs.
//!
//! Infected vertices recover at rate 1; every edge carries infection at
//! rate `lambda` between its endpoints, so `k` parallel edges transmit at
//! rate `k * lambda` and loops never change the state.
//!
//! Two engines share these semantics:
//! * [`FastContact`], a next-event engine over the set of active half-edges
//!   (infected tail, healthy head) that scales to large graphs;
//! * [`EventLog`], which pre-samples every Poisson mark on `[0, T]` and
//!   replays the graphical construction from any initial set.

mod log;
mod multitype;

pub use log::{duality_check, replay_graph_events, DualityResult, EventKind, EventLog, GraphEvent};
pub use multitype::{multi_type_survivors, MultiTypeOutcome, Substrate};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Network;
use crate::indexed_set::IndexedSet;
use crate::rng::{rng_from_seed, SimRng};

/// Infection rate per undirected edge; recovery rate is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub lambda: f64,
}

impl ProcessParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(ProcessParams { lambda })
    }
}

/// A single state change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub vertex: usize,
    /// `true` for healthy -> infected, `false` for a recovery.
    pub infected: bool,
}

/// Outcome of one call to [`FastContact::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Jump(Jump),
    /// No event before the horizon; the clock now sits at the horizon.
    Horizon,
    Extinct,
}

#[inline]
pub(crate) fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Next-event simulation with aggregated rates: recoveries at total rate
/// `|infected|`, infections at total rate `lambda * |active|` where the
/// active half-edges are those pointing from an infected vertex to a
/// healthy one. Each event costs O(degree).
#[derive(Debug, Clone)]
pub struct FastContact<'g> {
    net: &'g Network,
    lambda: f64,
    infected: Vec<bool>,
    infected_set: IndexedSet,
    active: IndexedSet,
    time: f64,
}

impl<'g> FastContact<'g> {
    pub fn new(net: &'g Network, params: ProcessParams, initial: &[usize]) -> Result<Self> {
        if initial.is_empty() {
            return Err(invalid("initial infected set is empty"));
        }
        let n = net.vertex_count();
        let mut engine = FastContact {
            net,
            lambda: params.lambda,
            infected: vec![false; n],
            infected_set: IndexedSet::with_universe(n),
            active: IndexedSet::with_universe(net.half_edge_count()),
            time: 0.0,
        };
        for &v in initial {
            if v >= n {
                return Err(invalid(format!("initial vertex {v} out of range")));
            }
            engine.infect(v);
        }
        Ok(engine)
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn infected_count(&self) -> usize {
        self.infected_set.len()
    }

    #[inline]
    pub fn is_infected(&self, v: usize) -> bool {
        self.infected[v]
    }

    pub fn infected_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.infected_set.iter().collect();
        v.sort_unstable();
        v
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    fn infect(&mut self, w: usize) {
        if self.infected[w] {
            return;
        }
        self.infected[w] = true;
        self.infected_set.insert(w);
        for h in self.net.half_edges(w) {
            let x = self.net.target(h);
            if self.infected[x] {
                if x != w {
                    self.active.remove(self.net.twin(h));
                }
            } else {
                self.active.insert(h);
            }
        }
    }

    fn recover(&mut self, v: usize) {
        self.infected[v] = false;
        self.infected_set.remove(v);
        for h in self.net.half_edges(v) {
            self.active.remove(h);
            let x = self.net.target(h);
            if x != v && self.infected[x] {
                self.active.insert(self.net.twin(h));
            }
        }
    }

    /// Advances to the next event, or to `horizon` if none occurs before it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, horizon: f64) -> Step {
        let n_inf = self.infected_set.len();
        if n_inf == 0 {
            return Step::Extinct;
        }
        let rec_rate = n_inf as f64;
        let inf_rate = self.lambda * self.active.len() as f64;
        let total = rec_rate + inf_rate;
        let t = self.time + exp_sample(rng, total);
        if t > horizon {
            self.time = horizon;
            return Step::Horizon;
        }
        self.time = t;
        if rng.random::<f64>() * total < rec_rate {
            let v = self.infected_set.sample(rng);
            self.recover(v);
            Step::Jump(Jump {
                time: t,
                vertex: v,
                infected: false,
            })
        } else {
            let h = self.active.sample(rng);
            let w = self.net.target(h);
            self.infect(w);
            Step::Jump(Jump {
                time: t,
                vertex: w,
                infected: true,
            })
        }
    }
}

/// Records a piecewise-constant count on a sorted time grid.
#[derive(Debug, Clone)]
pub struct GridRecorder {
    grid: Vec<f64>,
    next: usize,
    values: Vec<usize>,
}

impl GridRecorder {
    pub fn new(grid: &[f64]) -> Result<Self> {
        if grid.windows(2).any(|w| w[0] > w[1]) || grid.iter().any(|t| !(*t >= 0.0)) {
            return Err(invalid("time grid must be sorted and non-negative"));
        }
        Ok(GridRecorder {
            grid: grid.to_vec(),
            next: 0,
            values: Vec::with_capacity(grid.len()),
        })
    }

    /// The state held `value` on `[previous event, t)`.
    #[inline]
    pub fn advance(&mut self, t: f64, value: usize) {
        while self.next < self.grid.len() && self.grid[self.next] < t {
            self.values.push(value);
            self.next += 1;
        }
    }

    /// Fills every remaining grid point `<= t` with `value`.
    pub fn finish(&mut self, t: f64, value: usize) {
        while self.next < self.grid.len() && self.grid[self.next] <= t {
            self.values.push(value);
            self.next += 1;
        }
    }

    pub fn into_values(self) -> Vec<usize> {
        self.values
    }
}

/// Realized path of the infected set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Vec<usize>,
    pub horizon: f64,
    /// Every state change in time order (empty unless requested).
    pub jumps: Vec<Jump>,
    /// Time the empty set was hit, if before the horizon.
    pub extinction_time: Option<f64>,
    pub grid: Vec<f64>,
    /// `|xi_t|` at each grid time.
    pub infected_counts: Vec<usize>,
    pub final_infected: usize,
}

impl Trajectory {
    pub fn extinct(&self) -> bool {
        self.extinction_time.is_some()
    }

    /// Infected set at time `t` reconstructed from the jumps.
    pub fn state_at(&self, n: usize, t: f64) -> Vec<bool> {
        let mut s = vec![false; n];
        for &v in &self.initial {
            s[v] = true;
        }
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            s[j.vertex] = j.infected;
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub grid: Vec<f64>,
    pub record_jumps: bool,
}

/// Simulates the contact process on `net` from `initial` up to `horizon`.
pub fn simulate(
    net: &Network,
    initial: &[usize],
    params: ProcessParams,
    horizon: f64,
    seed: u64,
    options: &SimOptions,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mut initial_sorted = initial.to_vec();
    initial_sorted.sort_unstable();
    initial_sorted.dedup();
    let mut engine = FastContact::new(net, params, &initial_sorted)?;
    let mut rng = rng_from_seed(seed);
    let mut rec = GridRecorder::new(&options.grid)?;
    let mut jumps = Vec::new();
    let mut extinction_time = None;
    loop {
        let before = engine.infected_count();
        match engine.step(&mut rng, horizon) {
            Step::Jump(j) => {
                rec.advance(j.time, before);
                if options.record_jumps {
                    jumps.push(j);
                }
                if engine.infected_count() == 0 {
                    extinction_time = Some(j.time);
                    rec.finish(f64::INFINITY, 0);
                    break;
                }
            }
            Step::Horizon | Step::Extinct => {
                rec.finish(horizon, engine.infected_count());
                break;
            }
        }
    }
    let grid_len = rec.values.len();
    Ok(Trajectory {
        initial: initial_sorted,
        horizon,
        jumps,
        extinction_time,
        grid: options.grid[..grid_len].to_vec(),
        infected_counts: rec.into_values(),
        final_infected: engine.infected_count(),
    })
}

/// Healthy -> infected transition times of a marked vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinfectionRecord {
    pub marked: usize,
    /// `I_1 < I_2 < ...`; the infection at time 0 is not counted.
    pub times: Vec<f64>,
    /// The process died out before `k_target` reinfections.
    pub extinct: bool,
    pub extinction_time: Option<f64>,
    /// Time up to which the process was observed alive.
    pub observed_until: f64,
    /// Number of recoveries of the marked vertex seen.
    pub recoveries: usize,
}

impl ReinfectionRecord {
    pub fn kth(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.times.get(i).copied())
    }
}

/// Extra stopping rules for reinfection runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReinfectionOptions {
    /// Keep running (after `k_target` is reached) until this time, to
    /// decide survival past it.
    pub condition_time: Option<f64>,
    /// Treat survival past `condition_time` as settled once this many
    /// vertices are infected at the same time.
    pub certify_size: Option<usize>,
}

/// Runs from `{marked}` and records the first `k_target` reinfection times.
pub fn record_reinfections(
    net: &Network,
    marked: usize,
    params: ProcessParams,
    horizon: f64,
    k_target: usize,
    seed: u64,
) -> Result<ReinfectionRecord> {
    record_reinfections_with(net, marked, params, horizon, k_target, seed, ReinfectionOptions::default())
}

pub fn record_reinfections_with(
    net: &Network,
    marked: usize,
    params: ProcessParams,
    horizon: f64,
    k_target: usize,
    seed: u64,
    options: ReinfectionOptions,
) -> Result<ReinfectionRecord> {
    if k_target == 0 {
        return Err(invalid("k_target must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    run_reinfections(&mut rng, net, marked, params, horizon, k_target, options)
}

pub(crate) fn run_reinfections(
    rng: &mut SimRng,
    net: &Network,
    marked: usize,
    params: ProcessParams,
    horizon: f64,
    k_target: usize,
    options: ReinfectionOptions,
) -> Result<ReinfectionRecord> {
    let mut engine = FastContact::new(net, params, &[marked])?;
    let cond = options.condition_time.unwrap_or(0.0);
    let mut times = Vec::with_capacity(k_target);
    let mut recoveries = 0;
    let mut extinction_time = None;
    loop {
        if times.len() >= k_target {
            let past_cond = engine.time() >= cond;
            let certified = options
                .certify_size
                .is_some_and(|m| engine.infected_count() >= m);
            if past_cond || certified {
                break;
            }
        }
        match engine.step(rng, horizon) {
            Step::Jump(j) => {
                if j.vertex == marked {
                    if j.infected {
                        if times.len() < k_target {
                            times.push(j.time);
                        }
                    } else {
                        recoveries += 1;
                    }
                }
                if engine.infected_count() == 0 {
                    extinction_time = Some(j.time);
                    break;
                }
            }
            Step::Horizon | Step::Extinct => break,
        }
    }
    Ok(ReinfectionRecord {
        marked,
        extinct: extinction_time.is_some(),
        extinction_time,
        observed_until: extinction_time.unwrap_or(engine.time()),
        times,
        recoveries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn mean_extinction(net: &Network, lambda: f64, initial: &[usize], reps: u64) -> (f64, f64) {
        let params = ProcessParams::new(lambda).unwrap();
        let xs: Vec<f64> = (0..reps)
            .map(|i| {
                simulate(net, initial, params, 1e9, crate::rng::replica_seed(3, i), &SimOptions::default())
                    .unwrap()
                    .extinction_time
                    .unwrap()
            })
            .collect();
        (stats::mean(&xs), stats::std_error(&xs))
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = Network::path(2);
        let p = ProcessParams::new(1.0).unwrap();
        assert!(simulate(&net, &[], p, 1.0, 0, &SimOptions::default()).is_err());
        assert!(simulate(&net, &[0], p, -1.0, 0, &SimOptions::default()).is_err());
        assert!(ProcessParams::new(-0.1).is_err());
        assert!(record_reinfections(&net, 0, p, 1.0, 0, 0).is_err());
    }

    #[test]
    fn lone_vertex_lives_exp1() {
        let (m, se) = mean_extinction(&Network::isolated(1), 3.0, &[0], 20_000);
        assert!((m - 1.0).abs() < 4.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn edge_extinction_time_matches_hand_solution() {
        // E[tau] from one infected endpoint of K2 is 1 + lambda/2.
        for lambda in [0.5, 1.0, 2.0] {
            let (m, se) = mean_extinction(&Network::path(2), lambda, &[0], 40_000);
            let exact = 1.0 + lambda / 2.0;
            assert!((m - exact).abs() < 4.0 * se, "lambda {lambda}: {m} vs {exact}");
        }
    }

    #[test]
    fn parallel_edges_multiply_the_hazard() {
        // u infected, v healthy, k parallel edges: first event is an
        // infection with probability k*lambda / (k*lambda + 1).
        let k = 3;
        let lambda = 0.5;
        let net = Network::from_edges(2, &vec![(0, 1); k]).unwrap();
        let p = ProcessParams::new(lambda).unwrap();
        let reps = 40_000;
        let mut infections = 0;
        for i in 0..reps {
            let mut rng = rng_from_seed(i);
            let mut e = FastContact::new(&net, p, &[0]).unwrap();
            if let Step::Jump(j) = e.step(&mut rng, 1e9) {
                if j.infected {
                    infections += 1;
                }
            }
        }
        let expect = k as f64 * lambda / (k as f64 * lambda + 1.0);
        let phat = infections as f64 / reps as f64;
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!((phat - expect).abs() < 4.0 * se, "{phat} vs {expect}");
    }

    #[test]
    fn loops_never_infect() {
        let net = Network::from_edges(1, &[(0, 0), (0, 0)]).unwrap();
        let p = ProcessParams::new(5.0).unwrap();
        let e = FastContact::new(&net, p, &[0]).unwrap();
        assert_eq!(e.active_count(), 0);
    }

    #[test]
    fn deterministic_trajectories() {
        let g = crate::graph::Multigraph::sample(200, 3, 1).unwrap();
        let p = ProcessParams::new(1.2).unwrap();
        let opts = SimOptions {
            grid: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            record_jumps: true,
        };
        let a = simulate(g.network(), &[0, 5], p, 5.0, 77, &opts).unwrap();
        let b = simulate(g.network(), &[0, 5], p, 5.0, 77, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.infected_counts[0], 2);
    }

    #[test]
    fn jumps_replay_to_counts() {
        let g = crate::graph::Multigraph::sample(100, 3, 2).unwrap();
        let p = ProcessParams::new(1.5).unwrap();
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let opts = SimOptions {
            grid: grid.clone(),
            record_jumps: true,
        };
        let tr = simulate(g.network(), &[0], p, 5.0, 9, &opts).unwrap();
        let mut state = vec![false; 100];
        state[0] = true;
        for j in &tr.jumps {
            assert_ne!(state[j.vertex], j.infected, "jump must change state");
            state[j.vertex] = j.infected;
        }
        for (t, &c) in grid.iter().zip(&tr.infected_counts) {
            let s = tr.state_at(100, *t);
            assert_eq!(s.iter().filter(|&&b| b).count(), c);
        }
    }

    #[test]
    fn no_reinfection_without_infection() {
        let net = Network::complete(4);
        let p = ProcessParams::new(0.0).unwrap();
        let r = record_reinfections(&net, 0, p, 100.0, 3, 1).unwrap();
        assert!(r.times.is_empty());
        assert!(r.extinct);
        assert_eq!(r.recoveries, 1);
    }

    #[test]
    fn reinfections_are_separated_by_recoveries() {
        let g = crate::graph::Multigraph::sample(300, 3, 4).unwrap();
        let p = ProcessParams::new(2.0).unwrap();
        let r = record_reinfections(g.network(), 0, p, 50.0, 10, 5).unwrap();
        assert!(r.times.windows(2).all(|w| w[0] < w[1]));
        assert!(r.recoveries >= r.times.len());
    }
}
