//! Several contact processes ("types") on one shared graphical construction.
//!
//! Type `i` (for `i = 1..=k`) is started from the marked vertex at time `i`.
//! Every vertex carries the set of types present on it; a recovery mark
//! clears the set and an edge mark merges the sets of its two endpoints.
//! Each type therefore evolves exactly as its own contact process, and
//! types that meet stay merged for as long as they share vertices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{exp_sample, ProcessParams};
use crate::error::{invalid, Result};
use crate::graph::Network;
use crate::indexed_set::IndexedSet;
use crate::rng::rng_from_seed;

/// A graph on which neighbors can be queried by slot, possibly creating
/// vertices on demand.
pub trait Substrate {
    fn max_degree(&self) -> usize;
    fn degree(&self, v: usize) -> usize;
    /// Neighbor through slot `slot < degree(v)`.
    fn neighbor(&mut self, v: usize, slot: usize) -> Result<usize>;
    /// Upper bound (exclusive) on vertex ids handed out so far.
    fn vertex_bound(&self) -> usize;
}

impl Substrate for Network {
    fn max_degree(&self) -> usize {
        Network::max_degree(self)
    }

    fn degree(&self, v: usize) -> usize {
        Network::degree(self, v)
    }

    fn neighbor(&mut self, v: usize, slot: usize) -> Result<usize> {
        Ok(self.target(self.half_edges(v).start + slot))
    }

    fn vertex_bound(&self) -> usize {
        self.vertex_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTypeOutcome {
    pub k: usize,
    /// Number of types alive at the horizon.
    pub survivors: usize,
    pub alive: Vec<bool>,
    /// Size of the union of all types at the horizon.
    pub union_size: usize,
}

struct TypeSets {
    words: usize,
    bits: Vec<u64>,
}

impl TypeSets {
    fn ensure(&mut self, n: usize) {
        if self.bits.len() < n * self.words {
            self.bits.resize(n * self.words, 0);
        }
    }

    fn row(&self, v: usize) -> &[u64] {
        &self.bits[v * self.words..(v + 1) * self.words]
    }

    fn clear(&mut self, v: usize) {
        self.bits[v * self.words..(v + 1) * self.words].fill(0);
    }

    fn copy(&mut self, from: usize, to: usize) {
        for i in 0..self.words {
            self.bits[to * self.words + i] = self.bits[from * self.words + i];
        }
    }

    fn merge(&mut self, a: usize, b: usize) {
        for i in 0..self.words {
            let m = self.bits[a * self.words + i] | self.bits[b * self.words + i];
            self.bits[a * self.words + i] = m;
            self.bits[b * self.words + i] = m;
        }
    }

    fn add(&mut self, v: usize, ty: usize) {
        self.bits[v * self.words + ty / 64] |= 1u64 << (ty % 64);
    }
}

/// Counts the types alive at `horizon` (requires `horizon > k`).
pub fn multi_type_survivors<S: Substrate>(
    substrate: &mut S,
    marked: usize,
    k: usize,
    params: ProcessParams,
    horizon: f64,
    seed: u64,
) -> Result<MultiTypeOutcome> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if !(horizon > k as f64) {
        return Err(invalid(format!("horizon {horizon} must exceed k = {k}")));
    }
    if marked >= substrate.vertex_bound() {
        return Err(invalid("marked vertex out of range"));
    }
    let lambda = params.lambda;
    let dmax = substrate.max_degree();
    let per_vertex_rate = 1.0 + lambda * dmax as f64;
    let mut rng = rng_from_seed(seed);
    let mut sets = TypeSets {
        words: k.div_ceil(64),
        bits: Vec::new(),
    };
    let mut union = IndexedSet::with_universe(substrate.vertex_bound());
    sets.ensure(substrate.vertex_bound());

    let mut t = 0.0;
    let mut next_type = 1usize;
    loop {
        let next_intro = if next_type <= k {
            next_type as f64
        } else {
            f64::INFINITY
        };
        if union.is_empty() {
            if next_type > k {
                break;
            }
            t = next_intro;
            sets.add(marked, next_type - 1);
            union.insert(marked);
            next_type += 1;
            continue;
        }
        let dt = exp_sample(&mut rng, union.len() as f64 * per_vertex_rate);
        if t + dt >= next_intro {
            t = next_intro;
            sets.add(marked, next_type - 1);
            union.insert(marked);
            next_type += 1;
            continue;
        }
        if t + dt > horizon {
            break;
        }
        t += dt;
        let v = union.sample(&mut rng);
        let u = rng.random::<f64>() * per_vertex_rate;
        if u < 1.0 {
            sets.clear(v);
            union.remove(v);
            continue;
        }
        let slot = (((u - 1.0) / lambda) as usize).min(dmax - 1);
        if slot >= substrate.degree(v) {
            continue;
        }
        let w = substrate.neighbor(v, slot)?;
        let bound = substrate.vertex_bound();
        union.ensure_universe(bound);
        sets.ensure(bound);
        if union.contains(w) {
            // The edge is seen from both endpoints; keep rate lambda.
            if rng.random::<bool>() {
                sets.merge(v, w);
            }
        } else {
            sets.copy(v, w);
            union.insert(w);
        }
    }

    let mut acc = vec![0u64; sets.words];
    for v in union.iter() {
        for (a, b) in acc.iter_mut().zip(sets.row(v)) {
            *a |= *b;
        }
    }
    let alive: Vec<bool> = (0..k).map(|i| acc[i / 64] >> (i % 64) & 1 == 1).collect();
    Ok(MultiTypeOutcome {
        k,
        survivors: alive.iter().filter(|&&b| b).count(),
        alive,
        union_size: union.len(),
    })
}
