//! Exact Markov chain computations for the contact process on tiny graphs.
//!
//! States are infected subsets encoded as bitmasks. Generic over the scalar
//! type so results can be cross-checked in single and double precision.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::graph::Network;
use crate::num::Real;

/// Largest vertex count accepted by default.
pub const DEFAULT_MAX_VERTICES: usize = 12;

#[derive(Debug, Clone)]
pub struct ContactChain<T: Real> {
    n: usize,
    lambda: T,
    /// `nbrs[w]` = (neighbor, multiplicity), loops dropped.
    nbrs: Vec<Vec<(usize, u32)>>,
}

impl<T: Real> ContactChain<T> {
    pub fn new(net: &Network, lambda: T) -> Result<Self> {
        Self::with_limit(net, lambda, DEFAULT_MAX_VERTICES)
    }

    pub fn with_limit(net: &Network, lambda: T, max_vertices: usize) -> Result<Self> {
        let n = net.vertex_count();
        if n > max_vertices || n > 24 {
            return Err(Error::StateSpaceTooLarge {
                n,
                limit: max_vertices.min(24),
            });
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(invalid("lambda must be finite and >= 0"));
        }
        let mut nbrs = vec![Vec::new(); n];
        for (&(u, v), &m) in net.edge_multiset().iter() {
            if u != v {
                nbrs[u].push((v, m as u32));
                nbrs[v].push((u, m as u32));
            }
        }
        Ok(ContactChain { n, lambda, nbrs })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn state_count(&self) -> usize {
        1 << self.n
    }

    pub fn mask_of(&self, set: &[usize]) -> Result<usize> {
        let mut m = 0usize;
        for &v in set {
            if v >= self.n {
                return Err(invalid(format!("vertex {v} out of range")));
            }
            m |= 1 << v;
        }
        Ok(m)
    }

    /// Outgoing transitions `(target, rate)` of `mask`.
    pub fn transitions(&self, mask: usize, out: &mut Vec<(usize, T)>) {
        out.clear();
        for v in 0..self.n {
            let bit = 1 << v;
            if mask & bit != 0 {
                out.push((mask & !bit, T::one()));
            } else {
                let m: u32 = self.nbrs[v]
                    .iter()
                    .filter(|(u, _)| mask & (1 << u) != 0)
                    .map(|&(_, k)| k)
                    .sum();
                if m > 0 && self.lambda > T::zero() {
                    out.push((mask | bit, self.lambda * T::of_usize(m as usize)));
                }
            }
        }
    }

    pub fn exit_rate(&self, mask: usize) -> T {
        let mut tr = Vec::new();
        self.transitions(mask, &mut tr);
        tr.iter().map(|&(_, r)| r).sum()
    }

    /// Expected time to absorption in the empty set.
    pub fn exact_extinction_expectation(&self, initial: &[usize]) -> Result<T> {
        let start = self.mask_of(initial)?;
        if start == 0 {
            return Ok(T::zero());
        }
        // Unknowns h(S) for S != 0, indexed by S - 1.
        let m = self.state_count() - 1;
        let mut a = vec![T::zero(); m * m];
        let mut b = vec![T::one(); m];
        let mut tr = Vec::new();
        for s in 1..=m {
            self.transitions(s, &mut tr);
            let row = (s - 1) * m;
            for &(t, r) in &tr {
                a[row + s - 1] = a[row + s - 1] + r;
                if t != 0 {
                    a[row + t - 1] = a[row + t - 1] - r;
                }
            }
        }
        solve_dense(&mut a, &mut b, m)?;
        Ok(b[start - 1])
    }

    /// First healthy -> infected transition of `marked`, started from
    /// `{marked}`: returns `(P(I_1 < inf), E[I_1 | I_1 < inf])`.
    pub fn reinfection_first_passage(&self, marked: usize) -> Result<(T, T)> {
        if marked >= self.n {
            return Err(invalid("marked vertex out of range"));
        }
        // States with the marked bit set are "not yet recovered", the others
        // are "waiting for reinfection". Entering a marked state from an
        // unmarked one is the target event.
        let mbit = 1usize << marked;
        let m = self.state_count();
        let mut ah = vec![T::zero(); m * m];
        let mut bh = vec![T::zero(); m];
        let mut tr = Vec::new();
        for s in 0..m {
            let row = s * m;
            ah[row + s] = T::one();
            if s == 0 {
                continue;
            }
            self.transitions(s, &mut tr);
            let q: T = tr.iter().map(|&(_, r)| r).sum();
            for &(t, r) in &tr {
                let p = r / q;
                if s & mbit == 0 && t & mbit != 0 {
                    bh[s] = bh[s] + p;
                } else {
                    ah[row + t] = ah[row + t] - p;
                }
            }
        }
        let mut ag = ah.clone();
        let mut h = bh;
        solve_dense(&mut ah, &mut h, m)?;
        // g(S) = E[T; hit] satisfies g = h/q + sum p g.
        let mut g = vec![T::zero(); m];
        for s in 1..m {
            g[s] = h[s] / self.exit_rate(s);
        }
        solve_dense(&mut ag, &mut g, m)?;
        let p = h[mbit];
        if p <= T::zero() {
            return Ok((T::zero(), T::nan()));
        }
        Ok((p, g[mbit] / p))
    }

    /// Distribution over all `2^n` states at time `t` by uniformization.
    pub fn exact_marginal(&self, t: T, initial: &[usize]) -> Result<Vec<T>> {
        if !(t >= T::zero()) || !t.is_finite() {
            return Err(invalid("t must be finite and >= 0"));
        }
        let start = self.mask_of(initial)?;
        let states = self.state_count();
        let mut dist = vec![T::zero(); states];
        dist[start] = T::one();
        if t == T::zero() {
            return Ok(dist);
        }
        let q = (0..states)
            .map(|s| self.exit_rate(s))
            .fold(T::zero(), |a, b| a.max(b));
        if q == T::zero() {
            return Ok(dist);
        }
        let ten = T::of(10.0);
        let pieces = (q * t / ten).ceil().to_usize().unwrap_or(1).max(1);
        let dt = t / T::of_usize(pieces);
        let rate = q * dt;
        let tol = T::of(1e-12).max(T::epsilon());
        let mut tr = Vec::new();
        for _ in 0..pieces {
            let mut term = dist.clone();
            let mut weight = (-rate).exp();
            let mut acc: Vec<T> = term.iter().map(|&x| x * weight).collect();
            let mut covered = weight;
            let mut k = 0usize;
            while T::one() - covered > tol && k < 10_000 {
                k += 1;
                let mut next = vec![T::zero(); states];
                for s in 0..states {
                    if term[s] == T::zero() {
                        continue;
                    }
                    self.transitions(s, &mut tr);
                    let mut stay = T::one();
                    for &(to, r) in &tr {
                        let p = r / q;
                        next[to] = next[to] + term[s] * p;
                        stay = stay - p;
                    }
                    next[s] = next[s] + term[s] * stay;
                }
                term = next;
                weight = weight * rate / T::of_usize(k);
                covered = covered + weight;
                for (a, &x) in acc.iter_mut().zip(&term) {
                    *a = *a + x * weight;
                }
            }
            // Put the truncated tail mass on the last term so mass is conserved.
            let tail = T::one() - covered;
            for (a, &x) in acc.iter_mut().zip(&term) {
                *a = *a + x * tail;
            }
            dist = acc;
        }
        Ok(dist)
    }

    /// `P(xi_t ∩ target != ∅)` under the given marginal.
    pub fn hit_probability(&self, marginal: &[T], target: &[usize]) -> Result<T> {
        let tm = self.mask_of(target)?;
        Ok(marginal
            .iter()
            .enumerate()
            .filter(|(s, _)| s & tm != 0)
            .map(|(_, &p)| p)
            .sum())
    }
}

/// Gaussian elimination with partial pivoting; the solution overwrites `b`.
pub fn solve_dense<T: Real>(a: &mut [T], b: &mut [T], m: usize) -> Result<()> {
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| {
                a[i * m + col]
                    .abs()
                    .partial_cmp(&a[j * m + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if a[piv * m + col] == T::zero() {
            return Err(Error::Estimation("singular linear system".into()));
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * m + col];
        for i in col + 1..m {
            let f = a[i * m + col] / d;
            if f == T::zero() {
                continue;
            }
            a[i * m + col] = T::zero();
            for k in col + 1..m {
                a[i * m + k] = a[i * m + k] - f * a[col * m + k];
            }
            b[i] = b[i] - f * b[col];
        }
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s = s - a[i * m + k] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    Ok(())
}

/// f64 shortcut for [`ContactChain::exact_extinction_expectation`].
pub fn exact_extinction_expectation(net: &Network, lambda: f64, initial: &[usize]) -> Result<f64> {
    ContactChain::<f64>::new(net, lambda)?.exact_extinction_expectation(initial)
}

/// f64 shortcut for [`ContactChain::exact_marginal`].
pub fn exact_marginal(net: &Network, lambda: f64, t: f64, initial: &[usize]) -> Result<Vec<f64>> {
    ContactChain::<f64>::new(net, lambda)?.exact_marginal(t, initial)
}

/// Writes a marginal as CSV `state_mask,probability`.
pub fn write_marginal_csv<W: Write, T: Real>(out: W, marginal: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_mask", "probability"])?;
    for (s, p) in marginal.iter().enumerate() {
        w.write_record([s.to_string(), format!("{:e}", p.to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_marginal_csv`].
pub fn read_marginal_csv<R: std::io::Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let s: usize = rec[0]
            .parse()
            .map_err(|_| invalid(format!("bad state mask on row {}", i + 1)))?;
        let p: f64 = rec[1]
            .parse()
            .map_err(|_| invalid(format!("bad probability on row {}", i + 1)))?;
        if s != out.len() {
            return Err(invalid("state masks must be consecutive from 0"));
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_values() {
        let one = Network::isolated(1);
        assert_abs_diff_eq!(exact_extinction_expectation(&one, 2.0, &[0]).unwrap(), 1.0, epsilon = 1e-12);
        let two = Network::isolated(2);
        assert_abs_diff_eq!(exact_extinction_expectation(&two, 2.0, &[0, 1]).unwrap(), 1.5, epsilon = 1e-12);
        let k2 = Network::path(2);
        for lambda in [0.5, 1.0, 3.0] {
            let e = exact_extinction_expectation(&k2, lambda, &[0]).unwrap();
            assert_abs_diff_eq!(e, 1.0 + lambda / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_precision_agrees() {
        let k3 = Network::complete(3);
        let a = ContactChain::<f32>::new(&k3, 1.0).unwrap().exact_extinction_expectation(&[0]).unwrap();
        let b = exact_extinction_expectation(&k3, 1.0, &[0]).unwrap();
        assert!((a as f64 - b).abs() < 1e-4 * b);
    }

    #[test]
    fn too_many_vertices() {
        assert!(matches!(
            ContactChain::<f64>::new(&Network::isolated(13), 1.0),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn monotone_in_lambda() {
        for net in [Network::path(3), Network::complete(4), Network::star(3)] {
            let mut prev = 0.0;
            for i in 0..12 {
                let e = exact_extinction_expectation(&net, 0.25 * i as f64, &[0]).unwrap();
                assert!(e >= prev - 1e-12);
                prev = e;
            }
        }
    }

    #[test]
    fn marginal_basics() {
        let k4 = Network::complete(4);
        let m0 = exact_marginal(&k4, 1.0, 0.0, &[1, 2]).unwrap();
        assert_eq!(m0[0b0110], 1.0);
        let lone = exact_marginal(&Network::isolated(1), 0.0, 1.0, &[0]).unwrap();
        assert_abs_diff_eq!(lone[1], (-1.0f64).exp(), epsilon = 1e-10);
        for t in [0.1, 1.0, 3.0, 25.0] {
            let m = exact_marginal(&k4, 2.0, t, &[0]).unwrap();
            assert_abs_diff_eq!(m.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(m.iter().all(|&p| p > -1e-12));
        }
    }

    #[test]
    fn k2_marginal_matches_closed_form() {
        // From {u} with lambda = 0 the state stays {u} with prob e^{-t}.
        let m = exact_marginal(&Network::path(2), 0.0, 2.0, &[0]).unwrap();
        assert_abs_diff_eq!(m[1], (-2.0f64).exp(), epsilon = 1e-10);
        // Self-duality: P(xi^{u} hits v) = P(xi^{v} hits u).
        let chain = ContactChain::<f64>::new(&Network::path(3), 1.3).unwrap();
        let a = chain.hit_probability(&chain.exact_marginal(1.7, &[0]).unwrap(), &[2]).unwrap();
        let b = chain.hit_probability(&chain.exact_marginal(1.7, &[2]).unwrap(), &[0]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn k2_first_reinfection() {
        // From {u}: u recovers first w.p. 1/(1+l) (then v alive) or infects v
        // first. Reinfection then needs v to infect u before v recovers.
        let lambda = 1.0;
        let chain = ContactChain::<f64>::new(&Network::path(2), lambda).unwrap();
        let (p, _) = chain.reinfection_first_passage(0).unwrap();
        // Hand solution: from {u,v} the first recovery is u w.p. 1/2, giving
        // {v} which reinfects w.p. l/(1+l), or v, giving {u} again.
        let l = lambda;
        let a = l / (1.0 + l);
        let p_u = a * a / 2.0 / (1.0 - a / 2.0);
        assert_abs_diff_eq!(p, p_u, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let m = exact_marginal(&Network::complete(3), 1.0, 0.7, &[0]).unwrap();
        let mut buf = Vec::new();
        write_marginal_csv(&mut buf, &m).unwrap();
        let back = read_marginal_csv(&buf[..]).unwrap();
        for (a, b) in m.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-15 + 1e-14 * a.abs());
        }
    }
}
