//! Contact process on the d-regular tree and on the severed tree (root of
//! degree 1, every other vertex of degree d), expanded lazily.
//!
//! Nodes are created only when first infected, so for a single process the
//! set of created nodes is exactly its infection history. Several processes
//! may share one [`LazyTree`]; each keeps its own infection state.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harris::{exp_sample, ProcessParams, Substrate};
use crate::indexed_set::IndexedSet;
use crate::num::Real;
use crate::rng::{rng_from_seed, SimRng};

const NONE: u32 = u32::MAX;

/// Default cap on the number of materialized tree nodes.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Path of child indices from the root (empty for the root).
///
/// The root has `d` children (1 in the severed tree), every other vertex
/// has `d - 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreeAddress(pub Vec<u16>);

impl TreeAddress {
    pub fn root() -> Self {
        TreeAddress(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<TreeAddress> {
        if self.0.is_empty() {
            None
        } else {
            Some(TreeAddress(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, i: usize) -> TreeAddress {
        let mut p = self.0.clone();
        p.push(i as u16);
        TreeAddress(p)
    }

    pub fn is_prefix_of(&self, other: &TreeAddress) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

/// Shape of the tree: degree and whether the root is severed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub d: usize,
    pub severed: bool,
}

impl TreeShape {
    pub fn new(d: usize, severed: bool) -> Result<Self> {
        if d < 3 {
            return Err(invalid(format!("tree degree must be at least 3, got {d}")));
        }
        Ok(TreeShape { d, severed })
    }

    pub fn child_count(&self, depth: usize) -> usize {
        match (depth, self.severed) {
            (0, true) => 1,
            (0, false) => self.d,
            _ => self.d - 1,
        }
    }

    pub fn degree(&self, depth: usize) -> usize {
        if depth == 0 {
            self.child_count(0)
        } else {
            self.d
        }
    }

    /// Neighbors of an address.
    pub fn neighbors(&self, a: &TreeAddress) -> Vec<TreeAddress> {
        let mut out: Vec<TreeAddress> = a.parent().into_iter().collect();
        out.extend((0..self.child_count(a.depth())).map(|i| a.child(i)));
        out
    }

    /// Every address within distance `r` of the root, in breadth-first order.
    pub fn ball(&self, r: usize) -> Vec<TreeAddress> {
        let mut out = vec![TreeAddress::root()];
        let mut frontier = vec![TreeAddress::root()];
        for _ in 0..r {
            let mut next = Vec::new();
            for a in &frontier {
                for i in 0..self.child_count(a.depth()) {
                    next.push(a.child(i));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }
}

/// Arena of materialized tree nodes.
#[derive(Debug, Clone)]
pub struct LazyTree {
    shape: TreeShape,
    budget: usize,
    parent: Vec<u32>,
    child_index: Vec<u16>,
    depth: Vec<u32>,
    child_base: Vec<u32>,
    children: Vec<u32>,
}

impl LazyTree {
    pub fn new(shape: TreeShape, budget: usize) -> Self {
        LazyTree {
            shape,
            budget,
            parent: vec![NONE],
            child_index: vec![0],
            depth: vec![0],
            child_base: vec![NONE],
            children: Vec::new(),
        }
    }

    pub const ROOT: usize = 0;

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self, x: usize) -> usize {
        self.depth[x] as usize
    }

    pub fn parent(&self, x: usize) -> Option<usize> {
        let p = self.parent[x];
        (p != NONE).then_some(p as usize)
    }

    pub fn degree(&self, x: usize) -> usize {
        self.shape.degree(self.depth(x))
    }

    pub fn address(&self, mut x: usize) -> TreeAddress {
        let mut path = Vec::with_capacity(self.depth(x));
        while let Some(p) = self.parent(x) {
            path.push(self.child_index[x]);
            x = p;
        }
        path.reverse();
        TreeAddress(path)
    }

    /// Existing child `i` of `x`, if materialized.
    pub fn existing_child(&self, x: usize, i: usize) -> Option<usize> {
        let base = self.child_base[x];
        if base == NONE {
            return None;
        }
        let c = self.children[base as usize + i];
        (c != NONE).then_some(c as usize)
    }

    /// Child `i` of `x`, created on first access.
    pub fn child(&mut self, x: usize, i: usize) -> Result<usize> {
        if self.child_base[x] == NONE {
            self.child_base[x] = self.children.len() as u32;
            let cc = self.shape.child_count(self.depth(x));
            self.children.extend(std::iter::repeat_n(NONE, cc));
        }
        let slot = self.child_base[x] as usize + i;
        if self.children[slot] != NONE {
            return Ok(self.children[slot] as usize);
        }
        if self.len() >= self.budget {
            return Err(Error::BudgetExceeded {
                budget: self.budget,
                time: f64::NAN,
            });
        }
        let id = self.len();
        self.parent.push(x as u32);
        self.child_index.push(i as u16);
        self.depth.push(self.depth[x] + 1);
        self.child_base.push(NONE);
        self.children[slot] = id as u32;
        Ok(id)
    }

    /// Neighbor through slot `j`: for the root, child `j`; otherwise slot 0
    /// is the parent and slot `j >= 1` is child `j - 1`.
    pub fn neighbor(&mut self, x: usize, j: usize) -> Result<usize> {
        if x == Self::ROOT {
            self.child(x, j)
        } else if j == 0 {
            Ok(self.parent[x] as usize)
        } else {
            self.child(x, j - 1)
        }
    }

    /// Like [`LazyTree::neighbor`] without creating nodes.
    pub fn existing_neighbor(&self, x: usize, j: usize) -> Option<usize> {
        if x == Self::ROOT {
            self.existing_child(x, j)
        } else if j == 0 {
            self.parent(x)
        } else {
            self.existing_child(x, j - 1)
        }
    }
}

impl Substrate for LazyTree {
    fn max_degree(&self) -> usize {
        self.shape.d
    }

    fn degree(&self, v: usize) -> usize {
        LazyTree::degree(self, v)
    }

    fn neighbor(&mut self, v: usize, slot: usize) -> Result<usize> {
        LazyTree::neighbor(self, v, slot)
    }

    fn vertex_bound(&self) -> usize {
        self.len()
    }
}

/// Infection state of one process on a (shared) lazy tree, with history,
/// boundary and pioneer bookkeeping.
#[derive(Debug, Clone)]
pub struct TreeContact {
    lambda: f64,
    infected: IndexedSet,
    first_infected: Vec<f64>,
    /// Number of neighbors inside the history.
    hist_nbrs: Vec<u8>,
    history: usize,
    pioneers: usize,
    time: f64,
}

impl TreeContact {
    /// Starts from the root of `tree` at time 0.
    pub fn new(tree: &LazyTree, params: ProcessParams) -> Self {
        let mut s = TreeContact {
            lambda: params.lambda,
            infected: IndexedSet::with_universe(tree.len()),
            first_infected: vec![f64::NAN; tree.len()],
            hist_nbrs: vec![0; tree.len()],
            history: 0,
            pioneers: 0,
            time: 0.0,
        };
        s.infect(tree, LazyTree::ROOT);
        s
    }

    fn ensure(&mut self, n: usize) {
        if self.first_infected.len() < n {
            self.first_infected.resize(n, f64::NAN);
            self.hist_nbrs.resize(n, 0);
            self.infected.ensure_universe(n);
        }
    }

    #[inline]
    fn on_boundary(&self, tree: &LazyTree, x: usize) -> bool {
        (self.hist_nbrs[x] as usize) < tree.degree(x)
    }

    pub fn in_history(&self, x: usize) -> bool {
        x < self.first_infected.len() && !self.first_infected[x].is_nan()
    }

    fn infect(&mut self, tree: &LazyTree, w: usize) {
        self.ensure(tree.len());
        if !self.in_history(w) {
            self.first_infected[w] = self.time;
            self.history += 1;
            for j in 0..tree.degree(w) {
                if let Some(x) = tree.existing_neighbor(w, j) {
                    if self.in_history(x) {
                        self.hist_nbrs[w] += 1;
                        let was = self.on_boundary(tree, x);
                        self.hist_nbrs[x] += 1;
                        if was && !self.on_boundary(tree, x) && self.infected.contains(x) {
                            self.pioneers -= 1;
                        }
                    }
                }
            }
        }
        self.infected.insert(w);
        if self.on_boundary(tree, w) {
            self.pioneers += 1;
        }
    }

    fn recover(&mut self, tree: &LazyTree, v: usize) {
        self.infected.remove(v);
        if self.on_boundary(tree, v) {
            self.pioneers -= 1;
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn infected_count(&self) -> usize {
        self.infected.len()
    }

    pub fn history_size(&self) -> usize {
        self.history
    }

    pub fn pioneer_count(&self) -> usize {
        self.pioneers
    }

    pub fn is_infected(&self, x: usize) -> bool {
        self.infected.contains(x)
    }

    /// Time `x` was first infected, if ever.
    pub fn first_infection(&self, x: usize) -> Option<f64> {
        self.first_infected.get(x).copied().filter(|t| !t.is_nan())
    }

    /// Advances by one (possibly void) event, stopping at `horizon`.
    ///
    /// Every infected vertex proposes events at the uniform rate
    /// `1 + lambda * d`; proposals through slots the vertex does not have
    /// (severed root) or onto infected neighbors change nothing.
    /// Returns `false` once extinct or at the horizon.
    pub fn step(&mut self, tree: &mut LazyTree, rng: &mut SimRng, horizon: f64) -> Result<bool> {
        if self.infected.is_empty() {
            return Ok(false);
        }
        let d = tree.shape().d;
        let rate = 1.0 + self.lambda * d as f64;
        let t = self.time + exp_sample(rng, self.infected.len() as f64 * rate);
        if t > horizon {
            self.time = horizon;
            return Ok(false);
        }
        self.time = t;
        let v = self.infected.sample(rng);
        let u = rng.random::<f64>() * rate;
        if u < 1.0 {
            self.recover(tree, v);
            return Ok(!self.infected.is_empty());
        }
        let slot = (((u - 1.0) / self.lambda) as usize).min(d - 1);
        if slot >= tree.degree(v) {
            return Ok(true);
        }
        let w = tree.neighbor(v, slot).map_err(|e| match e {
            Error::BudgetExceeded { budget, .. } => Error::BudgetExceeded { budget, time: t },
            other => other,
        })?;
        if !self.infected.contains(w) {
            self.infect(tree, w);
        }
        Ok(true)
    }

    /// Runs until `horizon` or extinction, sampling `(xi, history, pioneers)`
    /// on `grid` (grid points after extinction record the frozen history).
    pub fn run_on_grid(
        &mut self,
        tree: &mut LazyTree,
        rng: &mut SimRng,
        horizon: f64,
        grid: &[f64],
    ) -> Result<Vec<TreeSample>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut gi = 0;
        loop {
            let snap = self.sample();
            let more = self.step(tree, rng, horizon)?;
            while gi < grid.len() && grid[gi] < self.time {
                out.push(snap);
                gi += 1;
            }
            if !more {
                let fin = self.sample();
                while gi < grid.len() && grid[gi] <= horizon {
                    out.push(fin);
                    gi += 1;
                }
                return Ok(out);
            }
        }
    }

    fn sample(&self) -> TreeSample {
        TreeSample {
            infected: self.infected.len(),
            history: self.history,
            pioneers: self.pioneers,
        }
    }

    /// Address-level snapshot of the current state.
    pub fn snapshot(&self, tree: &LazyTree) -> TreeInfectionState {
        let current = self.infected.iter().map(|x| tree.address(x)).collect();
        let history = (0..self.first_infected.len())
            .filter(|&x| self.in_history(x))
            .map(|x| tree.address(x))
            .collect();
        TreeInfectionState {
            shape: tree.shape(),
            current,
            history,
            time: self.time,
        }
    }
}

/// Counts at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSample {
    pub infected: usize,
    pub history: usize,
    pub pioneers: usize,
}

/// Current infection and its history, as sets of addresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeInfectionState {
    pub shape: TreeShape,
    pub current: BTreeSet<TreeAddress>,
    pub history: BTreeSet<TreeAddress>,
    pub time: f64,
}

/// Infected vertices on the boundary of the history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PioneerSet {
    pub members: BTreeSet<TreeAddress>,
}

/// Inner boundary: members of `set` with a neighbor outside `set`.
pub fn boundary(shape: TreeShape, set: &BTreeSet<TreeAddress>) -> BTreeSet<TreeAddress> {
    set.iter()
        .filter(|a| shape.neighbors(a).iter().any(|b| !set.contains(b)))
        .cloned()
        .collect()
}

/// `boundary(history) ∩ current`.
pub fn pioneers(state: &TreeInfectionState) -> PioneerSet {
    let members = boundary(state.shape, &state.history)
        .intersection(&state.current)
        .cloned()
        .collect();
    PioneerSet { members }
}

/// Number of edges `(s, w)` with `s` in `subset`, `w` outside it, such that
/// the branch hanging off `s` through `w` contains no vertex of `subset`.
pub fn free_branches(shape: TreeShape, subset: &BTreeSet<TreeAddress>) -> usize {
    let mut count = 0;
    for s in subset {
        for i in 0..shape.child_count(s.depth()) {
            let w = s.child(i);
            if !subset.iter().any(|x| w.is_prefix_of(x)) {
                count += 1;
            }
        }
        if let Some(p) = s.parent() {
            if !subset.contains(&p) && subset.iter().all(|x| s.is_prefix_of(x)) {
                count += 1;
            }
        }
    }
    count
}

/// All connected subsets of the ball of radius `r` around the root.
pub fn connected_subsets_of_ball(shape: TreeShape, r: usize) -> Vec<BTreeSet<TreeAddress>> {
    // Connected subsets whose top vertex is `a`, restricted to depth <= r.
    fn rooted(shape: TreeShape, a: &TreeAddress, r: usize) -> Vec<Vec<TreeAddress>> {
        let mut acc: Vec<Vec<TreeAddress>> = vec![vec![a.clone()]];
        if a.depth() < r {
            for i in 0..shape.child_count(a.depth()) {
                let sub = rooted(shape, &a.child(i), r);
                let mut next = Vec::with_capacity(acc.len() * (sub.len() + 1));
                for base in &acc {
                    next.push(base.clone());
                    for s in &sub {
                        let mut v = base.clone();
                        v.extend(s.iter().cloned());
                        next.push(v);
                    }
                }
                acc = next;
            }
        }
        acc
    }
    shape
        .ball(r)
        .iter()
        .flat_map(|a| rooted(shape, a, r))
        .map(|v| v.into_iter().collect())
        .collect()
}

/// Per-replica output of [`simulate_tree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRun {
    pub grid: Vec<f64>,
    pub samples: Vec<TreeSample>,
    /// Alive at the horizon.
    pub survived: bool,
    pub extinction_time: Option<f64>,
}

/// Contact process from the root of the (severed) d-regular tree.
pub fn simulate_tree(
    d: usize,
    params: ProcessParams,
    horizon: f64,
    severed: bool,
    seed: u64,
    grid: &[f64],
    budget: usize,
) -> Result<TreeRun> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("grid must be sorted"));
    }
    let mut tree = LazyTree::new(TreeShape::new(d, severed)?, budget);
    let mut proc = TreeContact::new(&tree, params);
    let mut rng = rng_from_seed(seed);
    let samples = proc.run_on_grid(&mut tree, &mut rng, horizon, grid)?;
    let survived = proc.infected_count() > 0;
    Ok(TreeRun {
        grid: grid.iter().copied().filter(|&t| t <= horizon).collect(),
        samples,
        survived,
        extinction_time: (!survived).then_some(proc.time()),
    })
}

/// Exact `P(Y_t = k)` for a rate-1 Yule process at time `t_eff` from one
/// individual: geometric with success probability `e^{-t_eff}`.
pub fn yule_pmf<T: Real>(t_eff: T, k: u64) -> T {
    if k == 0 {
        return T::zero();
    }
    let p = (-t_eff).exp();
    p * (T::one() - p).powi((k - 1) as i32)
}

pub fn yule_cdf<T: Real>(t_eff: T, k: u64) -> T {
    let p = (-t_eff).exp();
    T::one() - (T::one() - p).powi(k as i32)
}

/// Pure-birth process at `rate` per individual, observed at time `t`.
/// Returns the sampled population sizes.
pub fn yule_reference(rate: f64, t: f64, seed: u64, replicas: usize) -> Result<Vec<u64>> {
    if !(rate > 0.0) || !(t > 0.0) {
        return Err(invalid("yule_reference needs rate > 0 and t > 0"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..replicas)
        .map(|_| {
            let mut y = 1u64;
            let mut clock = exp_sample(&mut rng, rate);
            while clock <= t {
                y += 1;
                clock += exp_sample(&mut rng, rate * y as f64);
            }
            y
        })
        .collect())
}

/// Empirical pmf (index = population size) of Yule samples.
pub fn empirical_pmf(samples: &[u64]) -> Vec<f64> {
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0usize; max + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / samples.len().max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(addrs: &[&[u16]]) -> BTreeSet<TreeAddress> {
        addrs.iter().map(|a| TreeAddress(a.to_vec())).collect()
    }

    #[test]
    fn severed_root_has_one_neighbor() {
        let shape = TreeShape::new(3, true).unwrap();
        assert_eq!(shape.neighbors(&TreeAddress::root()).len(), 1);
        let c = TreeAddress::root().child(0);
        assert_eq!(shape.child_count(c.depth()), 2);
        assert_eq!(shape.neighbors(&c).len(), 3);
        let mut tree = LazyTree::new(shape, 100);
        let x = tree.neighbor(LazyTree::ROOT, 0).unwrap();
        assert_eq!(tree.degree(LazyTree::ROOT), 1);
        assert_eq!(tree.degree(x), 3);
        assert_eq!(tree.neighbor(x, 0).unwrap(), LazyTree::ROOT);
    }

    #[test]
    fn budget_is_enforced() {
        let mut tree = LazyTree::new(TreeShape::new(3, false).unwrap(), 3);
        tree.child(0, 0).unwrap();
        tree.child(0, 1).unwrap();
        assert!(matches!(tree.child(0, 2), Err(Error::BudgetExceeded { .. })));
        let p = ProcessParams::new(3.0).unwrap();
        let r = simulate_tree(3, p, 50.0, false, 1, &[], 50);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn addresses_round_trip() {
        let mut tree = LazyTree::new(TreeShape::new(4, false).unwrap(), 100);
        let a = tree.child(0, 3).unwrap();
        let b = tree.child(a, 2).unwrap();
        assert_eq!(tree.address(b), TreeAddress(vec![3, 2]));
        assert_eq!(tree.neighbor(b, 0).unwrap(), a);
    }

    #[test]
    fn pioneer_examples() {
        let shape = TreeShape::new(3, false).unwrap();
        let root = set(&[&[]]);
        let s0 = TreeInfectionState {
            shape,
            current: root.clone(),
            history: root.clone(),
            time: 0.0,
        };
        assert_eq!(pioneers(&s0).members, root);
        let ball: BTreeSet<_> = shape.ball(1).into_iter().collect();
        let s1 = TreeInfectionState {
            shape,
            current: root.clone(),
            history: ball.clone(),
            time: 1.0,
        };
        assert!(pioneers(&s1).members.is_empty());
        let leaves = set(&[&[0], &[1], &[2]]);
        let s2 = TreeInfectionState {
            shape,
            current: leaves.clone(),
            history: ball,
            time: 1.0,
        };
        assert_eq!(pioneers(&s2).members, leaves);
    }

    #[test]
    fn free_branch_examples() {
        let shape = TreeShape::new(3, false).unwrap();
        assert_eq!(free_branches(shape, &set(&[&[]])), 3);
        assert_eq!(free_branches(shape, &set(&[&[], &[0]])), 4);
        // Two vertices at distance two: the middle vertex's branch is not free.
        assert_eq!(free_branches(shape, &set(&[&[0], &[1]])), 4);
        assert_eq!(free_branches(shape, &set(&[&[0, 1]])), 3);
    }

    #[test]
    fn connected_subset_count_matches_product_formula() {
        // Radius 3 in T_3: 26^3 rooted at o, 25 per depth-1 vertex, 4 per
        // depth-2 vertex, 1 per leaf.
        let shape = TreeShape::new(3, false).unwrap();
        let subsets = connected_subsets_of_ball(shape, 3);
        assert_eq!(subsets.len(), 17_576 + 3 * 25 + 6 * 4 + 12);
        assert_eq!(connected_subsets_of_ball(shape, 1).len(), 8 + 3);
    }

    #[test]
    fn lambda_zero_tree_run() {
        let p = ProcessParams::new(0.0).unwrap();
        let grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let run = simulate_tree(3, p, 10.0, false, 5, &grid, 1000).unwrap();
        let ext = run.extinction_time.unwrap();
        for (t, s) in grid.iter().zip(&run.samples) {
            assert_eq!(s.history, 1);
            assert_eq!(s.infected, usize::from(*t < ext));
        }
    }

    #[test]
    fn incremental_pioneers_match_definition() {
        let p = ProcessParams::new(1.3).unwrap();
        for seed in 0..20 {
            let shape = TreeShape::new(3, seed % 2 == 0).unwrap();
            let mut tree = LazyTree::new(shape, 100_000);
            let mut proc = TreeContact::new(&tree, p);
            let mut rng = rng_from_seed(seed);
            for _ in 0..400 {
                if !proc.step(&mut tree, &mut rng, 1e9).unwrap() {
                    break;
                }
                let snap = proc.snapshot(&tree);
                assert_eq!(pioneers(&snap).members.len(), proc.pioneer_count());
                assert_eq!(snap.history.len(), proc.history_size());
                assert!(snap.current.is_subset(&snap.history));
            }
        }
    }

    #[test]
    fn yule_pmf_values() {
        let t = std::f64::consts::LN_2;
        assert!((yule_pmf(t, 1) - 0.5).abs() < 1e-12);
        assert!((yule_pmf(t, 2) - 0.25).abs() < 1e-12);
        assert!((yule_pmf(1e-9f64, 1) - 1.0).abs() < 1e-8);
        assert!((yule_cdf(t, 2) - 0.75).abs() < 1e-12);
        assert!((yule_pmf(t as f32, 3) - 0.125).abs() < 1e-6);
    }
}
