//! Finite multigraphs and the d-regular configuration model.
//!
//! Vertices are `0..n`. The configuration model identifies the `d`
//! consecutive half-edges `v*d .. v*d + d` with vertex `v` and draws a
//! uniform perfect matching of all `d*n` half-edges. Loops and parallel
//! edges are kept.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

const NONE: u32 = u32::MAX;

/// A half-edge of the configuration model: the `slot`-th of `owner`'s `d`
/// half-edges. Its global id is `owner * d + slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfEdge {
    pub owner: usize,
    pub slot: usize,
}

impl HalfEdge {
    pub fn from_id(id: usize, d: usize) -> Self {
        HalfEdge {
            owner: id / d,
            slot: id % d,
        }
    }

    pub fn id(self, d: usize) -> usize {
        self.owner * d + self.slot
    }
}

/// Undirected multigraph with loops, stored as an edge list plus a
/// half-edge adjacency (CSR). A loop at `v` contributes two half-edges at
/// `v`, so degrees count loops twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    /// Neighbor at the far end of each half-edge.
    targets: Vec<u32>,
    /// Edge index of each half-edge.
    half_edge_edge: Vec<u32>,
    /// The other half-edge of the same edge.
    twin: Vec<u32>,
}

impl Network {
    /// Builds a network from an edge list; repeated pairs are parallel edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut deg = vec![0u32; n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u},{v}) out of range for n={n}")));
            }
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let total = offsets[n] as usize;
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; total];
        let mut half_edge_edge = vec![0u32; total];
        let mut twin = vec![0u32; total];
        for (e, &(u, v)) in edges.iter().enumerate() {
            let hu = fill[u] as usize;
            fill[u] += 1;
            targets[hu] = v as u32;
            half_edge_edge[hu] = e as u32;
            let hv = fill[v] as usize;
            fill[v] += 1;
            targets[hv] = u as u32;
            half_edge_edge[hv] = e as u32;
            twin[hu] = hv as u32;
            twin[hv] = hu as u32;
        }
        Ok(Network {
            n,
            edges: edges.iter().map(|&(u, v)| (u as u32, v as u32)).collect(),
            offsets,
            targets,
            half_edge_edge,
            twin,
        })
    }

    /// Network of a configuration-model matching, with half-edge ids equal
    /// to the configuration ids (`v*d + slot`).
    fn from_matching(n: usize, d: usize, matching: &[(u32, u32)]) -> Self {
        let total = n * d;
        let mut targets = vec![NONE; total];
        let mut half_edge_edge = vec![NONE; total];
        let mut twin = vec![NONE; total];
        let mut edges = Vec::with_capacity(matching.len());
        for (e, &(a, b)) in matching.iter().enumerate() {
            let (ua, ub) = (a / d as u32, b / d as u32);
            targets[a as usize] = ub;
            targets[b as usize] = ua;
            half_edge_edge[a as usize] = e as u32;
            half_edge_edge[b as usize] = e as u32;
            twin[a as usize] = b;
            twin[b as usize] = a;
            edges.push((ua.min(ub), ua.max(ub)));
        }
        Network {
            n,
            edges,
            offsets: (0..=n).map(|v| (v * d) as u32).collect(),
            targets,
            half_edge_edge,
            twin,
        }
    }

    pub fn isolated(n: usize) -> Self {
        Network::from_edges(n, &[]).expect("valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v));
            }
        }
        Network::from_edges(n, &e).expect("valid")
    }

    pub fn path(n: usize) -> Self {
        let e: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Network::from_edges(n, &e).expect("valid")
    }

    /// Star with a centre (vertex 0) and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let e: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Network::from_edges(leaves + 1, &e).expect("valid")
    }

    pub fn cycle(n: usize) -> Self {
        let e: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        Network::from_edges(n, &e).expect("valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(u, v)| (u as usize, v as usize))
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        let (u, v) = self.edges[e];
        (u as usize, v as usize)
    }

    /// Degree with loops counted twice.
    pub fn degree(&self, v: usize) -> usize {
        (self.offsets[v + 1] - self.offsets[v]) as usize
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn half_edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Half-edge ids of `v`.
    pub fn half_edges(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v] as usize..self.offsets[v + 1] as usize
    }

    pub fn owner_offsets(&self) -> &[u32] {
        &self.offsets
    }

    /// Vertex at the far end of half-edge `h`.
    #[inline]
    pub fn target(&self, h: usize) -> usize {
        self.targets[h] as usize
    }

    /// The other half-edge of the edge containing `h`.
    #[inline]
    pub fn twin(&self, h: usize) -> usize {
        self.twin[h] as usize
    }

    #[inline]
    pub fn edge_of_half_edge(&self, h: usize) -> usize {
        self.half_edge_edge[h] as usize
    }

    /// Neighbors of `v` with multiplicity; a loop appears twice.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.targets[self.half_edges(v)].iter().map(|&t| t as usize)
    }

    /// Distinct unordered pairs with multiplicities; loops as `(v, v)`.
    pub fn edge_multiset(&self) -> BTreeMap<(usize, usize), usize> {
        let mut m = BTreeMap::new();
        for (u, v) in self.edges() {
            *m.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
        m
    }

    /// True iff there are no loops and no parallel edges.
    pub fn is_simple(&self) -> bool {
        let mut seen = vec![NONE; self.n];
        for v in 0..self.n {
            for w in self.neighbors(v) {
                if w == v || seen[w] == v as u32 {
                    return false;
                }
                seen[w] = v as u32;
            }
        }
        true
    }

    /// Breadth-first ball of radius `r` around `center`.
    pub fn extract_ball(&self, center: usize, r: usize) -> Result<RootedBall> {
        if center >= self.n {
            return Err(invalid(format!("vertex {center} out of range")));
        }
        let mut dist = BTreeMap::new();
        dist.insert(center, 0usize);
        let mut queue = VecDeque::from([center]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[&v];
            if dv == r {
                continue;
            }
            for w in self.neighbors(v) {
                if !dist.contains_key(&w) {
                    dist.insert(w, dv + 1);
                    queue.push_back(w);
                }
            }
        }
        let mut edges = BTreeMap::new();
        for (&v, _) in dist.iter() {
            for h in self.half_edges(v) {
                let w = self.target(h);
                if dist.contains_key(&w) && v <= w {
                    *edges.entry((v, w)).or_insert(0usize) += 1;
                }
            }
        }
        // A loop at v was counted once per half-edge; an edge u<w once.
        for ((u, w), m) in edges.iter_mut() {
            if u == w {
                *m /= 2;
            }
        }
        Ok(RootedBall {
            center,
            radius: r,
            vertices: dist,
            edges,
        })
    }
}

/// Ball `B(center, radius)` of a multigraph, keeping edge multiplicities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedBall {
    pub center: usize,
    pub radius: usize,
    /// Vertex -> graph distance from the center.
    pub vertices: BTreeMap<usize, usize>,
    /// `(u, w)` with `u <= w` -> multiplicity, for every edge inside the ball.
    pub edges: BTreeMap<(usize, usize), usize>,
}

impl RootedBall {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().sum()
    }

    /// Whether this ball of a `d`-regular graph is isomorphic to the ball of
    /// the same radius in the d-regular tree. A connected ball is a tree iff
    /// it has exactly `|V| - 1` edges (loops and multiplicities counted);
    /// regularity then fixes the shape.
    pub fn is_regular_tree_ball(&self, d: usize) -> bool {
        if self.edge_count() + 1 != self.vertex_count() {
            return false;
        }
        let mut expected = 1usize;
        let mut layer = d;
        for _ in 0..self.radius {
            expected += layer;
            layer *= d - 1;
        }
        self.vertex_count() == expected
    }
}

/// Uniform d-regular configuration-model multigraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multigraph {
    n: usize,
    d: usize,
    seed: u64,
    matching: Vec<(u32, u32)>,
    network: Network,
}

impl Multigraph {
    /// Samples a uniform perfect matching of the `d*n` half-edges.
    ///
    /// Half-edges are scanned in index order; each one still unmatched is
    /// paired with a uniformly chosen unmatched partner.
    pub fn sample(n: usize, d: usize, seed: u64) -> Result<Self> {
        if d < 3 {
            return Err(invalid(format!("degree must be at least 3, got {d}")));
        }
        if n == 0 {
            return Err(invalid("vertex count must be positive"));
        }
        if (n * d) % 2 != 0 {
            return Err(invalid(format!("d*N = {} is odd", n * d)));
        }
        let total = n * d;
        if total >= NONE as usize {
            return Err(invalid("too many half-edges"));
        }
        let mut rng = rng_from_seed(seed);
        let mut pool: Vec<u32> = (0..total as u32).collect();
        let mut pos: Vec<u32> = (0..total as u32).collect();
        let mut partner = vec![NONE; total];
        let mut matching = Vec::with_capacity(total / 2);

        let remove = |pool: &mut Vec<u32>, pos: &mut Vec<u32>, h: u32| {
            let i = pos[h as usize] as usize;
            let last = pool.pop().expect("non-empty pool");
            if last != h {
                pool[i] = last;
                pos[last as usize] = i as u32;
            }
        };

        for h in 0..total as u32 {
            if partner[h as usize] != NONE {
                continue;
            }
            remove(&mut pool, &mut pos, h);
            let p = pool[rng.random_range(0..pool.len())];
            remove(&mut pool, &mut pos, p);
            partner[h as usize] = p;
            partner[p as usize] = h;
            matching.push((h, p));
        }
        let network = Network::from_matching(n, d, &matching);
        Ok(Multigraph {
            n,
            d,
            seed,
            matching,
            network,
        })
    }

    /// Multigraph from an explicit perfect matching of `0..n*d`.
    pub fn from_matching(n: usize, d: usize, seed: u64, matching: Vec<(usize, usize)>) -> Result<Self> {
        let total = n * d;
        if matching.len() * 2 != total {
            return Err(invalid("matching does not cover every half-edge"));
        }
        let mut used = vec![false; total];
        for &(a, b) in &matching {
            for h in [a, b] {
                if h >= total || used[h] {
                    return Err(invalid(format!("half-edge {h} repeated or out of range")));
                }
                used[h] = true;
            }
        }
        let matching: Vec<(u32, u32)> = matching.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
        let network = Network::from_matching(n, d, &matching);
        Ok(Multigraph {
            n,
            d,
            seed,
            matching,
            network,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matching(&self) -> impl Iterator<Item = (HalfEdge, HalfEdge)> + '_ {
        self.matching
            .iter()
            .map(|&(a, b)| (HalfEdge::from_id(a as usize, self.d), HalfEdge::from_id(b as usize, self.d)))
    }

    /// Partner of half-edge `h` (global id).
    pub fn partner(&self, h: usize) -> usize {
        self.network.twin(h)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn is_simple(&self) -> bool {
        self.network.is_simple()
    }

    pub fn extract_ball(&self, v: usize, r: usize) -> Result<RootedBall> {
        self.network.extract_ball(v, r)
    }

    /// Text edge list: header `N d seed`, then `u v multiplicity` per
    /// distinct pair with `u <= v` (loops as `v v m`).
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n, self.d, self.seed);
        for ((u, v), m) in self.network.edge_multiset() {
            writeln!(s, "{u} {v} {m}").expect("write to string");
        }
        s
    }

    /// Parses the edge-list format. Half-edges are reassigned to edges in
    /// file order, so the edge multiset (not the half-edge labelling)
    /// round-trips.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let parse = |tok: &str, line: usize| -> Result<u64> {
            tok.parse::<u64>().map_err(|e| Error::Parse {
                line,
                msg: format!("{tok:?}: {e}"),
            })
        };
        if h.len() != 3 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `N d seed`".into(),
            });
        }
        let n = parse(h[0], 1)? as usize;
        let d = parse(h[1], 1)? as usize;
        let seed = parse(h[2], 1)?;
        let mut next_slot = vec![0usize; n];
        let mut matching = Vec::new();
        let mut take = |v: usize, line: usize| -> Result<usize> {
            if v >= n || next_slot[v] >= d {
                return Err(Error::Parse {
                    line,
                    msg: format!("vertex {v} out of range or over-full"),
                });
            }
            let id = v * d + next_slot[v];
            next_slot[v] += 1;
            Ok(id)
        };
        for (i, l) in lines {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected `u v multiplicity`".into(),
                });
            }
            let u = parse(toks[0], i + 1)? as usize;
            let v = parse(toks[1], i + 1)? as usize;
            let m = parse(toks[2], i + 1)?;
            for _ in 0..m {
                let a = take(u, i + 1)?;
                let b = take(v, i + 1)?;
                matching.push((a, b));
            }
        }
        Multigraph::from_matching(n, d, seed, matching)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Multigraph::sample(3, 3, 0).is_err());
        assert!(Multigraph::sample(4, 2, 0).is_err());
        assert!(Multigraph::sample(4, 3, 0).is_ok());
    }

    #[test]
    fn degrees_are_regular() {
        let g = Multigraph::sample(101, 4, 9).unwrap();
        let net = g.network();
        for v in 0..g.n() {
            assert_eq!(net.degree(v), 4);
        }
        let mut deg = vec![0usize; g.n()];
        for (u, v) in net.edges() {
            deg[u] += 1;
            deg[v] += 1;
        }
        assert!(deg.iter().all(|&x| x == 4));
        assert_eq!(2 * net.edge_count(), 4 * 101);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = Multigraph::sample(50, 3, 42).unwrap();
        let b = Multigraph::sample(50, 3, 42).unwrap();
        let c = Multigraph::sample(50, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.to_edge_list(), c.to_edge_list());
    }

    #[test]
    fn two_vertex_graphs_are_never_simple() {
        for seed in 0..200 {
            assert!(!Multigraph::sample(2, 3, seed).unwrap().is_simple());
        }
    }

    #[test]
    fn loop_is_not_simple_and_k4_is() {
        let looped = Network::from_edges(2, &[(0, 0), (0, 1)]).unwrap();
        assert!(!looped.is_simple());
        assert_eq!(looped.degree(0), 3);
        assert!(Network::complete(4).is_simple());
        let k4 = Multigraph::from_matching(
            4,
            3,
            0,
            vec![(0, 3), (1, 6), (2, 9), (4, 7), (5, 10), (8, 11)],
        )
        .unwrap();
        assert!(k4.is_simple());
    }

    #[test]
    fn balls() {
        let k4 = Network::complete(4);
        let b0 = k4.extract_ball(2, 0).unwrap();
        assert_eq!(b0.vertex_count(), 1);
        assert_eq!(b0.edge_count(), 0);
        let b1 = k4.extract_ball(0, 1).unwrap();
        assert_eq!(b1.vertex_count(), 4);
        assert!(!b1.is_regular_tree_ball(3));
        let star = Network::star(3);
        let s = star.extract_ball(0, 1).unwrap();
        assert!(s.is_regular_tree_ball(3));
        let looped = Network::from_edges(1, &[(0, 0)]).unwrap();
        assert_eq!(looped.extract_ball(0, 1).unwrap().edges[&(0, 0)], 1);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Multigraph::sample(30, 3, 5).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("30 3 5\n"));
        let h = Multigraph::from_edge_list(&text).unwrap();
        assert_eq!(g.network().edge_multiset(), h.network().edge_multiset());
        assert_eq!(h.to_edge_list(), text);
        assert!(Multigraph::from_edge_list("3 3\n").is_err());
    }

    #[test]
    fn partner_is_an_involution() {
        let g = Multigraph::sample(20, 3, 1).unwrap();
        for h in 0..60 {
            assert_eq!(g.partner(g.partner(h)), h);
            assert_eq!(g.network().target(h), g.partner(h) / 3);
        }
    }
}
