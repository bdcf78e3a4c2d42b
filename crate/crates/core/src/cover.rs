//! Contact process on the d-regular tree coupled to the exploration of a
//! configuration-model multigraph through a labelling of tree vertices by
//! graph vertices.
//!
//! The tree process runs unmodified. Tree vertices carry a label in `[N]`
//! and a mark (truly infected, falsely infected, healthy). A tree edge from
//! a vertex labelled `u` corresponds to one half-edge of `u`; following an
//! unmatched half-edge pairs it with a uniform free half-edge, which reveals
//! the configuration one pair at a time. The labels of truly infected tree
//! vertices form a contact process on the revealed multigraph.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::graph::Multigraph;
use crate::harris::{exp_sample, GraphEvent, ProcessParams};
use crate::indexed_set::IndexedSet;
use crate::num::Real;
use crate::rng::{replica_seed, rng_from_seed, SimRng};
use crate::tree::{LazyTree, TreeAddress, TreeShape, DEFAULT_NODE_BUDGET};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    Healthy,
    True,
    False,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClashKind {
    /// A freshly paired half-edge led to a label already in use.
    RepeatLabel,
    /// First false infection.
    FalseSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashEvent {
    pub time: f64,
    pub node: TreeAddress,
    pub label: usize,
    pub kind: ClashKind,
    /// Distinct labels in use when the clash happened (including the clash).
    pub labels_in_use: usize,
}

/// Snapshot of the labelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    pub ell: BTreeMap<TreeAddress, usize>,
    pub marks: BTreeMap<TreeAddress, Mark>,
    /// Unmatched half-edges per graph vertex.
    pub free_pool: Vec<usize>,
    /// Realized pairs of half-edge ids, in the order they were revealed.
    pub matched: Vec<(usize, usize)>,
}

/// Stopping and recording options for [`CoverExplorer`].
#[derive(Debug, Clone)]
pub struct CoverOptions {
    pub stop_at_first_clash: bool,
    pub record_graph_events: bool,
    pub node_budget: usize,
    /// Check the uniqueness of true labels after every event.
    pub check_invariants: bool,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            stop_at_first_clash: false,
            record_graph_events: false,
            node_budget: DEFAULT_NODE_BUDGET,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

/// Joint state of the tree process and the partial configuration.
#[derive(Debug, Clone)]
pub struct CoverExplorer {
    n: usize,
    d: usize,
    lambda: f64,
    options: CoverOptions,
    rng: SimRng,
    time: f64,
    tree: LazyTree,
    // Per tree node.
    label: Vec<u32>,
    mark: Vec<Mark>,
    slot_he: Vec<u32>,
    infected: IndexedSet,
    // Per half-edge / graph vertex.
    partner: Vec<u32>,
    pool: IndexedSet,
    true_copy: Vec<u32>,
    label_copies: Vec<u32>,
    labels_in_use: usize,
    matched: Vec<(usize, usize)>,
    clashes: Vec<ClashEvent>,
    events: Vec<GraphEvent>,
}

impl CoverExplorer {
    /// Root labelled `0` and truly infected; no half-edge matched.
    pub fn new(n: usize, d: usize, params: ProcessParams, seed: u64, options: CoverOptions) -> Result<Self> {
        if d < 3 {
            return Err(invalid(format!("degree must be at least 3, got {d}")));
        }
        if n == 0 || (n * d) % 2 != 0 {
            return Err(invalid(format!("N*d must be even and positive, got N={n}, d={d}")));
        }
        if n * d >= NONE as usize {
            return Err(invalid("graph too large"));
        }
        let shape = TreeShape::new(d, false)?;
        let mut pool = IndexedSet::with_universe(n * d);
        for h in 0..n * d {
            pool.insert(h);
        }
        let mut ex = CoverExplorer {
            n,
            d,
            lambda: params.lambda,
            rng: rng_from_seed(seed),
            time: 0.0,
            tree: LazyTree::new(shape, options.node_budget),
            options,
            label: vec![0],
            mark: vec![Mark::True],
            slot_he: vec![NONE; d],
            infected: IndexedSet::with_universe(1),
            partner: vec![NONE; n * d],
            pool,
            true_copy: vec![NONE; n],
            label_copies: vec![0; n],
            labels_in_use: 1,
            matched: Vec::new(),
            clashes: Vec::new(),
            events: Vec::new(),
        };
        ex.infected.insert(LazyTree::ROOT);
        ex.true_copy[0] = LazyTree::ROOT as u32;
        ex.label_copies[0] = 1;
        Ok(ex)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tree_infected_count(&self) -> usize {
        self.infected.len()
    }

    pub fn tree(&self) -> &LazyTree {
        &self.tree
    }

    pub fn clashes(&self) -> &[ClashEvent] {
        &self.clashes
    }

    pub fn first_clash(&self, kind: ClashKind) -> Option<&ClashEvent> {
        self.clashes.iter().find(|c| c.kind == kind)
    }

    pub fn labels_in_use(&self) -> usize {
        self.labels_in_use
    }

    pub fn matched_pairs(&self) -> &[(usize, usize)] {
        &self.matched
    }

    pub fn graph_events(&self) -> &[GraphEvent] {
        &self.events
    }

    pub fn label_of(&self, node: usize) -> Option<usize> {
        self.label.get(node).copied().filter(|&l| l != NONE).map(|l| l as usize)
    }

    pub fn mark_of(&self, node: usize) -> Mark {
        self.mark.get(node).copied().unwrap_or(Mark::Healthy)
    }

    /// Graph vertices whose label is carried by a truly infected tree vertex.
    pub fn project(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.true_copy[v] != NONE).collect()
    }

    pub fn project_count(&self) -> usize {
        self.true_copy.iter().filter(|&&x| x != NONE).count()
    }

    pub fn label_state(&self) -> LabelState {
        let mut ell = BTreeMap::new();
        let mut marks = BTreeMap::new();
        for x in 0..self.tree.len() {
            if let Some(l) = self.label_of(x) {
                let a = self.tree.address(x);
                ell.insert(a.clone(), l);
                marks.insert(a, self.mark[x]);
            }
        }
        let free_pool = (0..self.n)
            .map(|v| (v * self.d..(v + 1) * self.d).filter(|&h| self.partner[h] == NONE).count())
            .collect();
        LabelState {
            ell,
            marks,
            free_pool,
            matched: self.matched.clone(),
        }
    }

    fn grow_nodes(&mut self) {
        let len = self.tree.len();
        if self.label.len() < len {
            self.label.resize(len, NONE);
            self.mark.resize(len, Mark::Healthy);
            self.slot_he.resize(len * self.d, NONE);
            self.infected.ensure_universe(len);
        }
    }

    /// Tree slot through which `y` sees its parent.
    fn parent_slot(y: usize) -> usize {
        debug_assert_ne!(y, LazyTree::ROOT);
        0
    }

    fn slots(&self, x: usize) -> &[u32] {
        &self.slot_he[x * self.d..(x + 1) * self.d]
    }

    fn budget_error(&self, e: Error) -> Error {
        match e {
            Error::BudgetExceeded { budget, .. } => Error::BudgetExceeded {
                budget,
                time: self.time,
            },
            other => other,
        }
    }

    /// Creates the neighbor of `x` through `slot`, labelled by the owner of
    /// the partner of `h`, and records `h` on both sides.
    fn attach(&mut self, x: usize, slot: usize, h: usize) -> Result<usize> {
        let y = self.tree.neighbor(x, slot).map_err(|e| self.budget_error(e))?;
        self.grow_nodes();
        let hp = self.partner[h] as usize;
        let w = hp / self.d;
        self.slot_he[x * self.d + slot] = h as u32;
        self.slot_he[y * self.d + Self::parent_slot(y)] = hp as u32;
        self.label[y] = w as u32;
        if self.label_copies[w] == 0 {
            self.labels_in_use += 1;
        }
        self.label_copies[w] += 1;
        Ok(y)
    }

    /// Places every matched half-edge of `label(x)` that is not yet
    /// reflected at `x` into a uniformly chosen unassigned slot.
    fn sync(&mut self, x: usize) -> Result<()> {
        let u = self.label[x] as usize;
        let mut pending: Vec<usize> = (u * self.d..(u + 1) * self.d)
            .filter(|&h| self.partner[h] != NONE && !self.slots(x).contains(&(h as u32)))
            .collect();
        if pending.is_empty() {
            return Ok(());
        }
        let mut open: Vec<usize> = (0..self.tree.degree(x))
            .filter(|&j| self.slot_he[x * self.d + j] == NONE)
            .collect();
        open.shuffle(&mut self.rng);
        pending.sort_unstable();
        for (h, j) in pending.into_iter().zip(open) {
            self.attach(x, j, h)?;
        }
        Ok(())
    }

    /// Pairs the lowest free half-edge of `label(x)` with a uniform free
    /// half-edge and creates the tree vertex behind `slot`.
    fn reveal(&mut self, x: usize, slot: usize) -> Result<usize> {
        let u = self.label[x] as usize;
        let h = (u * self.d..(u + 1) * self.d)
            .find(|&h| self.partner[h] == NONE)
            .ok_or_else(|| Error::PoolExhausted(format!("vertex {u} has no free half-edge")))?;
        self.pool.remove(h);
        if self.pool.is_empty() {
            return Err(Error::PoolExhausted(format!(
                "no free half-edge left to pair with {h} at time {}",
                self.time
            )));
        }
        let hp = self.pool.sample(&mut self.rng);
        self.pool.remove(hp);
        self.partner[h] = hp as u32;
        self.partner[hp] = h as u32;
        self.matched.push((h, hp));
        let w = hp / self.d;
        let repeat = self.label_copies[w] > 0;
        let y = self.attach(x, slot, h)?;
        if repeat && self.first_clash(ClashKind::RepeatLabel).is_none() {
            self.clashes.push(ClashEvent {
                time: self.time,
                node: self.tree.address(y),
                label: w,
                kind: ClashKind::RepeatLabel,
                labels_in_use: self.labels_in_use,
            });
        }
        Ok(y)
    }

    fn set_infected(&mut self, y: usize, m: Mark) -> Result<()> {
        let w = self.label[y] as usize;
        if self.mark[y] == Mark::True && m != Mark::True {
            self.true_copy[w] = NONE;
        }
        let newly = self.mark[y] == Mark::Healthy;
        self.mark[y] = m;
        if m == Mark::True {
            if self.options.check_invariants {
                assert!(
                    self.true_copy[w] == NONE || self.true_copy[w] as usize == y,
                    "label {w} truly infected twice"
                );
            }
            self.true_copy[w] = y as u32;
        }
        if m == Mark::False && self.first_clash(ClashKind::FalseSource).is_none() {
            self.clashes.push(ClashEvent {
                time: self.time,
                node: self.tree.address(y),
                label: w,
                kind: ClashKind::FalseSource,
                labels_in_use: self.labels_in_use,
            });
        }
        if newly {
            self.infected.insert(y);
            self.sync(y)?;
        }
        Ok(())
    }

    fn recover(&mut self, x: usize) {
        let u = self.label[x] as usize;
        if self.mark[x] == Mark::True {
            self.true_copy[u] = NONE;
            if self.options.record_graph_events {
                self.events.push(GraphEvent::Recover {
                    time: self.time,
                    vertex: u,
                });
            }
        }
        self.mark[x] = Mark::Healthy;
        self.infected.remove(x);
    }

    /// Infection attempt from infected `x` onto labelled `y`.
    fn attempt(&mut self, x: usize, y: usize) -> Result<()> {
        let source_true = self.mark[x] == Mark::True;
        let w = self.label[y] as usize;
        if self.mark[y] != Mark::True {
            let target = if source_true {
                let other = self.true_copy[w];
                if other != NONE && other as usize != y {
                    Mark::False
                } else {
                    Mark::True
                }
            } else {
                Mark::False
            };
            if self.mark[y] != target {
                self.set_infected(y, target)?;
            }
        }
        if source_true && self.options.record_graph_events {
            self.events.push(GraphEvent::Arrow {
                time: self.time,
                from: self.label[x] as usize,
                to: w,
            });
        }
        Ok(())
    }

    fn check_uniqueness(&self) {
        let mut seen = vec![false; self.n];
        for x in self.infected.iter() {
            if self.mark[x] == Mark::True {
                let l = self.label[x] as usize;
                assert!(!seen[l], "label {l} truly infected twice");
                seen[l] = true;
                assert_eq!(self.true_copy[l] as usize, x);
            }
        }
        assert_eq!(seen.iter().filter(|&&b| b).count(), self.project_count());
    }

    /// One event of the tree process (possibly void). Returns `false` at the
    /// horizon, at extinction, or at the first repeat-label clash when
    /// stopping there was requested.
    pub fn step(&mut self, horizon: f64) -> Result<bool> {
        if self.infected.is_empty() {
            return Ok(false);
        }
        if self.options.stop_at_first_clash && self.first_clash(ClashKind::RepeatLabel).is_some() {
            return Ok(false);
        }
        let rate = 1.0 + self.lambda * self.d as f64;
        let t = self.time + exp_sample(&mut self.rng, self.infected.len() as f64 * rate);
        if t > horizon {
            self.time = horizon;
            return Ok(false);
        }
        self.time = t;
        let x = self.infected.sample(&mut self.rng);
        let r = self.rng.random::<f64>() * rate;
        if r < 1.0 {
            self.recover(x);
        } else {
            let slot = (((r - 1.0) / self.lambda) as usize).min(self.d - 1);
            self.sync(x)?;
            let y = if self.slot_he[x * self.d + slot] == NONE {
                self.reveal(x, slot)?
            } else {
                self.tree
                    .existing_neighbor(x, slot)
                    .expect("assigned slot has a tree vertex")
            };
            self.attempt(x, y)?;
        }
        if self.options.check_invariants {
            self.check_uniqueness();
        }
        Ok(!self.infected.is_empty())
    }

    pub fn run(&mut self, horizon: f64) -> Result<()> {
        while self.step(horizon)? {}
        Ok(())
    }

    /// Completes the configuration with a uniform matching of the remaining
    /// free half-edges.
    pub fn complete_configuration(&self, seed: u64) -> Result<Multigraph> {
        let mut rng = rng_from_seed(seed);
        let mut free: Vec<usize> = self.pool.iter().collect();
        free.sort_unstable();
        let mut pairs: Vec<(usize, usize)> = self.matched.clone();
        while let Some(h) = free.pop() {
            let i = rng.random_range(0..free.len());
            let hp = free.swap_remove(i);
            pairs.push((h, hp));
        }
        Multigraph::from_matching(self.n, self.d, seed, pairs)
    }
}

/// Result of a single coupled exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub n: usize,
    pub time: f64,
    pub projection: Vec<usize>,
    pub tree_infected: usize,
    pub labels_in_use: usize,
    pub matched_pairs: usize,
    pub clashes: Vec<ClashEvent>,
}

/// Runs the coupled exploration up to `horizon`.
pub fn explore(n: usize, d: usize, params: ProcessParams, horizon: f64, seed: u64) -> Result<Exploration> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let mut ex = CoverExplorer::new(n, d, params, seed, CoverOptions::default())?;
    ex.run(horizon)?;
    Ok(Exploration {
        n,
        time: ex.time(),
        projection: ex.project(),
        tree_infected: ex.tree_infected_count(),
        labels_in_use: ex.labels_in_use(),
        matched_pairs: ex.matched_pairs().len(),
        clashes: ex.clashes().to_vec(),
    })
}

/// Labels of the truly infected tree vertices.
pub fn project(state: &LabelState) -> Vec<usize> {
    let mut v: Vec<usize> = state
        .marks
        .iter()
        .filter(|(_, &m)| m == Mark::True)
        .map(|(a, _)| state.ell[a])
        .collect();
    v.sort_unstable();
    v
}

/// Clash probability at the `i`-th exploration step:
/// `(d + (d-1)(i-1) - 1) / (dN - 2i + 4 - 1)`.
pub fn clash_hazard<T: Real>(i: usize, d: usize, n: usize) -> Result<T> {
    let r = clash_hazard_exact(i, d, n)?;
    Ok(T::of_usize(*r.numer() as usize) / T::of_usize(*r.denom() as usize))
}

/// [`clash_hazard`] as an exact fraction.
pub fn clash_hazard_exact(i: usize, d: usize, n: usize) -> Result<Ratio<i64>> {
    if i < 2 || i > n {
        return Err(invalid(format!("clash index must satisfy 2 <= i <= N, got i={i}, N={n}")));
    }
    let (i, d, n) = (i as i64, d as i64, n as i64);
    let num = d + (d - 1) * (i - 1) - 1;
    let den = d * n - 2 * i + 4 - 1;
    if den <= 0 {
        return Err(invalid("no free half-edges left"));
    }
    Ok(Ratio::new(num, den))
}

/// One row of the clash-time CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashSample {
    pub replica: usize,
    pub n: usize,
    pub first_clash_time: Option<f64>,
    pub labels_at_clash: Option<usize>,
    /// The tree process was alive at the end of the run (clash or horizon).
    pub survived: bool,
}

/// First repeat-label time for each `N` in `n_grid`, `replicas` runs each.
pub fn first_clash_time(
    n_grid: &[usize],
    d: usize,
    params: ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ClashSample>> {
    let jobs: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..replicas).map(move |r| (n, r)))
        .collect();
    jobs.par_iter()
        .map(|&(n, r)| {
            let s = replica_seed(replica_seed(seed, n as u64), r as u64);
            let opts = CoverOptions {
                stop_at_first_clash: true,
                check_invariants: false,
                ..CoverOptions::default()
            };
            let mut ex = CoverExplorer::new(n, d, params, s, opts)?;
            ex.run(horizon)?;
            let clash = ex.first_clash(ClashKind::RepeatLabel);
            Ok(ClashSample {
                replica: r,
                n,
                first_clash_time: clash.map(|c| c.time),
                labels_at_clash: clash.map(|c| c.labels_in_use),
                survived: ex.tree_infected_count() > 0,
            })
        })
        .collect()
}

/// CSV `replica,N,first_clash_time,labels_at_clash,survived`; missing
/// values are empty fields.
pub fn write_clash_csv<W: std::io::Write>(out: W, rows: &[ClashSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "N", "first_clash_time", "labels_at_clash", "survived"])?;
    for r in rows {
        w.write_record([
            r.replica.to_string(),
            r.n.to_string(),
            r.first_clash_time.map(|t| t.to_string()).unwrap_or_default(),
            r.labels_at_clash.map(|t| t.to_string()).unwrap_or_default(),
            r.survived.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harris::replay_graph_events;

    #[test]
    fn initial_state() {
        let p = ProcessParams::new(1.0).unwrap();
        let ex = CoverExplorer::new(10, 3, p, 1, CoverOptions::default()).unwrap();
        let s = ex.label_state();
        assert_eq!(s.ell.len(), 1);
        assert_eq!(s.ell[&TreeAddress::root()], 0);
        assert_eq!(s.free_pool[0], 3);
        assert_eq!(ex.project(), vec![0]);
        assert!(CoverExplorer::new(5, 3, p, 1, CoverOptions::default()).is_err());
    }

    #[test]
    fn lambda_zero_reveals_nothing() {
        let p = ProcessParams::new(0.0).unwrap();
        let e = explore(20, 3, p, 10.0, 4).unwrap();
        assert_eq!(e.matched_pairs, 0);
        assert!(e.clashes.is_empty());
        assert!(e.projection.is_empty());
    }

    #[test]
    fn pairs_track_labels_before_first_clash() {
        let p = ProcessParams::new(1.5).unwrap();
        for seed in 0..30 {
            let opts = CoverOptions {
                check_invariants: true,
                ..CoverOptions::default()
            };
            let mut ex = CoverExplorer::new(2000, 3, p, seed, opts).unwrap();
            while ex.first_clash(ClashKind::RepeatLabel).is_none() {
                assert_eq!(ex.matched_pairs().len(), ex.labels_in_use() - 1);
                if !ex.step(6.0).unwrap() {
                    break;
                }
            }
        }
    }

    #[test]
    fn projection_replays_as_contact_process() {
        let p = ProcessParams::new(1.2).unwrap();
        for seed in 0..20 {
            let opts = CoverOptions {
                record_graph_events: true,
                check_invariants: true,
                ..CoverOptions::default()
            };
            let mut ex = CoverExplorer::new(40, 3, p, seed, opts).unwrap();
            let mut states = Vec::new();
            let mut seen = 0;
            while ex.step(4.0).unwrap() {
                if ex.graph_events().len() > seen {
                    seen = ex.graph_events().len();
                    states.push((seen, ex.project()));
                }
            }
            if ex.graph_events().len() > seen {
                states.push((ex.graph_events().len(), ex.project()));
            }
            let replay = replay_graph_events(40, &[0], ex.graph_events());
            for (k, s) in states {
                assert_eq!(replay[k - 1], s, "seed {seed}");
            }
        }
    }

    #[test]
    fn completed_graph_contains_revealed_pairs() {
        let p = ProcessParams::new(1.0).unwrap();
        let mut ex = CoverExplorer::new(30, 3, p, 2, CoverOptions::default()).unwrap();
        ex.run(3.0).unwrap();
        let g = ex.complete_configuration(9).unwrap();
        for &(a, b) in ex.matched_pairs() {
            assert_eq!(g.partner(a), b);
        }
    }

    #[test]
    fn hazard_values() {
        assert_eq!(clash_hazard_exact(2, 3, 10).unwrap(), Ratio::new(4, 29));
        assert!((clash_hazard::<f64>(2, 3, 10).unwrap() - 4.0 / 29.0).abs() < 1e-15);
        assert!(clash_hazard::<f64>(1, 3, 10).is_err());
        assert!(clash_hazard::<f64>(11, 3, 10).is_err());
        let a: f64 = clash_hazard(5, 3, 1000).unwrap();
        let b: f64 = clash_hazard(5, 3, 100_000).unwrap();
        assert!(b < a);
    }

    #[test]
    fn product_bound() {
        for n in [100usize, 1000, 10_000] {
            let kmax = (n as f64).sqrt() as usize;
            let mut prod = 1.0;
            for k in 2..=kmax {
                prod *= 1.0 - clash_hazard::<f64>(k, 3, n).unwrap();
                let bound = 1.0 - (k * k) as f64 / n as f64;
                assert!(prod >= bound - 1e-12, "N={n} k={k}: {prod} < {bound}");
            }
        }
    }

    #[test]
    fn clash_csv_has_header() {
        let p = ProcessParams::new(1.5).unwrap();
        let rows = first_clash_time(&[200], 3, p, 50.0, 4, 3).unwrap();
        let mut buf = Vec::new();
        write_clash_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("replica,N,first_clash_time,labels_at_clash,survived\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
