//! Graphical construction: every Poisson mark on `[0, T]` sampled up front.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exp_sample, Jump, ProcessParams, ReinfectionRecord, Trajectory};
use crate::error::{invalid, Result};
use crate::graph::Network;
use crate::rng::{replica_seed, rng_from_seed, substream};
use crate::stats;

/// A mark of the graphical construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Recovery mark at a vertex.
    Recovery(usize),
    /// Infection mark on an edge (index into the edge list): both endpoints
    /// end up infected if either was.
    Edge(usize),
}

impl EventKind {
    /// Tie-break key for equal times: recoveries before edges, then by id.
    fn rank(self) -> (u8, usize) {
        match self {
            EventKind::Recovery(v) => (0, v),
            EventKind::Edge(e) => (1, e),
        }
    }
}

/// Pre-sampled Harris system on a finite multigraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub horizon: f64,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// Sorted Poisson(lambda) times per edge (parallel copies are separate edges).
    pub edge_events: Vec<Vec<f64>>,
    /// Sorted Poisson(1) times per vertex.
    pub recovery_events: Vec<Vec<f64>>,
    merged: Vec<(f64, EventKind)>,
}

fn poisson_times(rng: &mut crate::rng::SimRng, rate: f64, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = exp_sample(rng, rate);
    while t <= horizon {
        out.push(t);
        t += exp_sample(rng, rate);
    }
    out
}

impl EventLog {
    pub fn sample(net: &Network, params: ProcessParams, horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(invalid(format!("horizon must be non-negative, got {horizon}")));
        }
        let mut rng = rng_from_seed(seed);
        let recovery_events = (0..net.vertex_count())
            .map(|_| poisson_times(&mut rng, 1.0, horizon))
            .collect();
        let edge_events = (0..net.edge_count())
            .map(|_| poisson_times(&mut rng, params.lambda, horizon))
            .collect();
        Self::from_events(net.vertex_count(), net.edges().collect(), horizon, edge_events, recovery_events)
    }

    /// Builds a log from explicit marks, validating ranges and ordering.
    pub fn from_events(
        n: usize,
        edges: Vec<(usize, usize)>,
        horizon: f64,
        edge_events: Vec<Vec<f64>>,
        recovery_events: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if edge_events.len() != edges.len() || recovery_events.len() != n {
            return Err(invalid("event lists do not match the graph"));
        }
        if edges.iter().any(|&(u, v)| u >= n || v >= n) {
            return Err(invalid("edge endpoint out of range"));
        }
        let ok = |ts: &Vec<f64>| {
            ts.iter().all(|&t| (0.0..=horizon).contains(&t)) && ts.windows(2).all(|w| w[0] < w[1])
        };
        if !edge_events.iter().all(ok) || !recovery_events.iter().all(ok) {
            return Err(invalid("event times must be strictly increasing within [0, T]"));
        }
        let mut merged: Vec<(f64, EventKind)> = Vec::new();
        for (v, ts) in recovery_events.iter().enumerate() {
            merged.extend(ts.iter().map(|&t| (t, EventKind::Recovery(v))));
        }
        for (e, ts) in edge_events.iter().enumerate() {
            merged.extend(ts.iter().map(|&t| (t, EventKind::Edge(e))));
        }
        merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.rank().cmp(&b.1.rank())));
        Ok(EventLog {
            horizon,
            n,
            edges,
            edge_events,
            recovery_events,
            merged,
        })
    }

    /// All marks in processing order.
    pub fn events(&self) -> &[(f64, EventKind)] {
        &self.merged
    }

    /// Replays from `initial` through every mark at time `<= until`,
    /// ignoring edges whose `edge_mask` entry is false. Returns the final
    /// state and the state changes.
    pub fn replay(&self, initial: &[usize], until: f64, edge_mask: Option<&[bool]>) -> (Vec<bool>, Vec<Jump>) {
        let mut state = vec![false; self.n];
        for &v in initial {
            state[v] = true;
        }
        let mut jumps = Vec::new();
        for &(t, kind) in self.merged.iter().take_while(|(t, _)| *t <= until) {
            match kind {
                EventKind::Recovery(v) => {
                    if state[v] {
                        state[v] = false;
                        jumps.push(Jump {
                            time: t,
                            vertex: v,
                            infected: false,
                        });
                    }
                }
                EventKind::Edge(e) => {
                    if edge_mask.is_some_and(|m| !m[e]) {
                        continue;
                    }
                    let (u, v) = self.edges[e];
                    if state[u] != state[v] {
                        let w = if state[u] { v } else { u };
                        state[w] = true;
                        jumps.push(Jump {
                            time: t,
                            vertex: w,
                            infected: true,
                        });
                    }
                }
            }
        }
        (state, jumps)
    }

    pub fn state_at(&self, initial: &[usize], t: f64) -> Vec<bool> {
        self.replay(initial, t, None).0
    }

    pub fn trajectory(&self, initial: &[usize], grid: &[f64]) -> Result<Trajectory> {
        if initial.is_empty() {
            return Err(invalid("initial infected set is empty"));
        }
        let mut init = initial.to_vec();
        init.sort_unstable();
        init.dedup();
        let (state, jumps) = self.replay(&init, self.horizon, None);
        let mut counts = Vec::new();
        let mut count = init.len();
        let mut it = jumps.iter().peekable();
        let mut grid_used = Vec::new();
        for &g in grid.iter().filter(|&&g| g <= self.horizon) {
            while let Some(j) = it.peek() {
                if j.time > g {
                    break;
                }
                count = if j.infected { count + 1 } else { count - 1 };
                it.next();
            }
            counts.push(count);
            grid_used.push(g);
        }
        let mut running = init.len();
        let mut extinction_time = None;
        for j in &jumps {
            running = if j.infected { running + 1 } else { running - 1 };
            if running == 0 {
                extinction_time = Some(j.time);
                break;
            }
        }
        Ok(Trajectory {
            initial: init,
            horizon: self.horizon,
            jumps,
            extinction_time,
            grid: grid_used,
            infected_counts: counts,
            final_infected: state.iter().filter(|&&b| b).count(),
        })
    }

    /// Reinfection times of `marked` when the replay starts from `{marked}`.
    pub fn reinfections(&self, marked: usize, k_target: usize) -> Result<ReinfectionRecord> {
        if k_target == 0 {
            return Err(invalid("k_target must be at least 1"));
        }
        let tr = self.trajectory(&[marked], &[])?;
        let mut times = Vec::new();
        let mut recoveries = 0;
        for j in tr.jumps.iter().filter(|j| j.vertex == marked) {
            if j.infected {
                if times.len() < k_target {
                    times.push(j.time);
                }
            } else {
                recoveries += 1;
            }
        }
        Ok(ReinfectionRecord {
            marked,
            extinct: tr.extinction_time.is_some(),
            extinction_time: tr.extinction_time,
            observed_until: tr.extinction_time.unwrap_or(self.horizon),
            times,
            recoveries,
        })
    }
}

/// A state change instruction on a graph, used to replay externally
/// generated event sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GraphEvent {
    Recover { time: f64, vertex: usize },
    /// Infection arrow: `to` becomes infected if `from` is infected.
    Arrow { time: f64, from: usize, to: usize },
}

impl GraphEvent {
    pub fn time(&self) -> f64 {
        match *self {
            GraphEvent::Recover { time, .. } | GraphEvent::Arrow { time, .. } => time,
        }
    }
}

/// Replays arrows and recoveries, returning the infected set after each event.
pub fn replay_graph_events(n: usize, initial: &[usize], events: &[GraphEvent]) -> Vec<Vec<usize>> {
    let mut state = vec![false; n];
    for &v in initial {
        state[v] = true;
    }
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        match *ev {
            GraphEvent::Recover { vertex, .. } => state[vertex] = false,
            GraphEvent::Arrow { from, to, .. } => {
                if state[from] {
                    state[to] = true;
                }
            }
        }
        out.push((0..n).filter(|&v| state[v]).collect());
    }
    out
}

/// Result of a duality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityResult {
    pub p_ab: f64,
    pub p_ba: f64,
    pub z: f64,
    pub hits_ab: usize,
    pub hits_ba: usize,
    pub replicas: usize,
}

fn set_tag(start: &[usize], target: &[usize]) -> u64 {
    let mut h = 0x51_7C_C1_B7_27_22_0A_95u64;
    for &v in start {
        h = substream(h, v as u64 + 1);
    }
    h = substream(h, u64::MAX);
    for &v in target {
        h = substream(h, v as u64 + 1);
    }
    h
}

fn hit_count(net: &Network, start: &[usize], target: &[usize], params: ProcessParams, t: f64, replicas: usize, seed: u64) -> Result<usize> {
    let stream = substream(seed, set_tag(start, target));
    let hits: Result<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let log = EventLog::sample(net, params, t, replica_seed(stream, r as u64))?;
            let s = log.state_at(start, t);
            Ok(target.iter().any(|&v| s[v]))
        })
        .collect();
    Ok(hits?.into_iter().filter(|&b| b).count())
}

/// Estimates `P(xi_t^A meets B)` and `P(xi_t^B meets A)` on independent
/// graphical constructions and returns their two-proportion z-score.
///
/// The random stream of each direction is keyed by its (start, target)
/// pair, so `A == B` gives identical estimates.
pub fn duality_check(
    net: &Network,
    a: &[usize],
    b: &[usize],
    params: ProcessParams,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<DualityResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("duality sets must be non-empty"));
    }
    if replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let n = net.vertex_count();
    let norm = |s: &[usize]| -> Result<Vec<usize>> {
        let mut v = s.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.iter().any(|&x| x >= n) {
            return Err(invalid("vertex out of range"));
        }
        Ok(v)
    };
    let (a, b) = (norm(a)?, norm(b)?);
    let hits_ab = hit_count(net, &a, &b, params, t, replicas, seed)?;
    let hits_ba = hit_count(net, &b, &a, params, t, replicas, seed)?;
    Ok(DualityResult {
        p_ab: hits_ab as f64 / replicas as f64,
        p_ba: hits_ba as f64 / replicas as f64,
        z: stats::two_proportion_z(hits_ab, replicas, hits_ba, replicas),
        hits_ab,
        hits_ba,
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Multigraph;
    use proptest::prelude::*;

    #[test]
    fn fixed_log_reinfection() {
        // Marked vertex 0 recovers at 1.0; edge (0,1) fires at 0.5 (infects 1)
        // and again at 1.5 (reinfects 0).
        let log = EventLog::from_events(
            2,
            vec![(0, 1)],
            3.0,
            vec![vec![0.5, 1.5]],
            vec![vec![1.0], vec![2.5]],
        )
        .unwrap();
        let r = log.reinfections(0, 5).unwrap();
        assert_eq!(r.times, vec![1.5]);
        assert_eq!(r.recoveries, 1);
    }

    #[test]
    fn rejects_unsorted_marks() {
        assert!(EventLog::from_events(1, vec![], 1.0, vec![], vec![vec![0.5, 0.2]]).is_err());
        assert!(EventLog::from_events(1, vec![], 1.0, vec![], vec![vec![1.5]]).is_err());
    }

    #[test]
    fn duality_trivial_cases() {
        let net = Network::path(3);
        let p = ProcessParams::new(1.0).unwrap();
        let same = duality_check(&net, &[0, 2], &[2, 0], p, 1.0, 2000, 1).unwrap();
        assert_eq!(same.p_ab, same.p_ba);
        let at_zero = duality_check(&net, &[0], &[2], p, 0.0, 100, 1).unwrap();
        assert_eq!((at_zero.p_ab, at_zero.p_ba), (0.0, 0.0));
        assert!(duality_check(&net, &[], &[1], p, 1.0, 10, 1).is_err());
    }

    #[test]
    fn loops_are_inert_in_replay() {
        let log = EventLog::from_events(2, vec![(1, 1)], 1.0, vec![vec![0.3]], vec![vec![], vec![]]).unwrap();
        assert_eq!(log.state_at(&[0], 1.0), vec![true, false]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn monotone_and_additive(seed in any::<u64>(), a in prop::collection::btree_set(0usize..30, 1..6),
                                 b in prop::collection::btree_set(0usize..30, 1..6), lambda in 0.2f64..2.5) {
            let g = Multigraph::sample(30, 3, seed).unwrap();
            let log = EventLog::sample(g.network(), ProcessParams::new(lambda).unwrap(), 3.0, seed ^ 1).unwrap();
            let a: Vec<usize> = a.into_iter().collect();
            let b: Vec<usize> = b.into_iter().collect();
            let mut ab = a.clone();
            ab.extend(&b);
            for t in [0.5, 1.0, 2.0, 3.0] {
                let sa = log.state_at(&a, t);
                let sb = log.state_at(&b, t);
                let sab = log.state_at(&ab, t);
                for v in 0..30 {
                    prop_assert_eq!(sab[v], sa[v] || sb[v]);
                    if sa[v] { prop_assert!(sab[v]); }
                }
            }
        }
    }
}
