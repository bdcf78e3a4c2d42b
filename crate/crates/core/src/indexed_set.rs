//! Set of small integers with O(1) insert, remove and uniform sampling.

use rand::Rng;

const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone, Default)]
pub struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl IndexedSet {
    pub fn with_universe(n: usize) -> Self {
        IndexedSet {
            items: Vec::new(),
            pos: vec![ABSENT; n],
        }
    }

    /// Grows the universe so that ids `< n` are admissible.
    pub fn ensure_universe(&mut self, n: usize) {
        if self.pos.len() < n {
            self.pos.resize(n, ABSENT);
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.pos.get(x).is_some_and(|&p| p != ABSENT)
    }

    /// Returns false if `x` was already present.
    #[inline]
    pub fn insert(&mut self, x: usize) -> bool {
        if self.pos[x] != ABSENT {
            return false;
        }
        self.pos[x] = self.items.len() as u32;
        self.items.push(x as u32);
        true
    }

    /// Returns false if `x` was absent.
    #[inline]
    pub fn remove(&mut self, x: usize) -> bool {
        let p = self.pos[x];
        if p == ABSENT {
            return false;
        }
        let last = self.items.pop().expect("non-empty");
        if last as usize != x {
            self.items[p as usize] = last;
            self.pos[last as usize] = p;
        }
        self.pos[x] = ABSENT;
        true
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.items[rng.random_range(0..self.items.len())] as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|&x| x as usize)
    }

    pub fn clear(&mut self) {
        for &x in &self.items {
            self.pos[x as usize] = ABSENT;
        }
        self.items.clear();
    }
}
