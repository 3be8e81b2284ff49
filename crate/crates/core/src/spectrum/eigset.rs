use serde::{Deserialize, Serialize};

use crate::numerics::C64;

const DEDUP_TOL: f64 = 1e-12;
const CONJ_TOL: f64 = 1e-9;

/// An ordered list of continuous-time eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueSet {
    values: Vec<C64>,
    closed_under_conjugation: bool,
}

impl EigenvalueSet {
    pub fn new(values: Vec<C64>) -> Self {
        let closed_under_conjugation = is_conjugate_closed(&values);
        EigenvalueSet {
            values,
            closed_under_conjugation,
        }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn closed_under_conjugation(&self) -> bool {
        self.closed_under_conjugation
    }

    /// The first `n` values.
    pub fn truncate(&self, n: usize) -> EigenvalueSet {
        EigenvalueSet::new(self.values.iter().take(n).copied().collect())
    }
}

/// Whether the multiset equals its conjugate multiset (up to a small relative tolerance).
pub fn is_conjugate_closed(values: &[C64]) -> bool {
    let mut used = vec![false; values.len()];
    for (i, v) in values.iter().enumerate() {
        if used[i] {
            continue;
        }
        let tol = CONJ_TOL * v.norm().max(1.0);
        if v.im.abs() <= tol {
            used[i] = true;
            continue;
        }
        let partner =
            (0..values.len()).find(|&k| k != i && !used[k] && (values[k] - v.conj()).norm() <= tol);
        match partner {
            Some(k) => {
                used[i] = true;
                used[k] = true;
            }
            None => return false,
        }
    }
    true
}

/// Exponent vectors with total degree `t` in lexicographically descending order,
/// so `(1,0)` precedes `(0,1)`.
fn exponents_of_degree(p: usize, t: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return if t == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    if p == 1 {
        return vec![vec![t]];
    }
    let mut out = Vec::new();
    for first in (0..=t).rev() {
        for mut rest in exponents_of_degree(p - 1, t - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// All combinations `Σ αₖ λₖ` with `αₖ ≥ 0` integer and `Σ αₖ ≤ d`, ordered by total
/// degree and then lexicographically by exponent, duplicates dropped.
pub fn lattice(base: &EigenvalueSet, d: usize) -> EigenvalueSet {
    let b = base.values();
    let mut out: Vec<C64> = Vec::new();
    for t in 0..=d {
        for alpha in exponents_of_degree(b.len(), t) {
            let v: C64 = alpha.iter().zip(b).map(|(&a, &l)| l * a as f64).sum();
            let tol = DEDUP_TOL * v.norm().max(1.0);
            if !out.iter().any(|w| (w - v).norm() <= tol) {
                out.push(v);
            }
        }
    }
    EigenvalueSet::new(out)
}

/// Smallest lattice with at least `count` members, truncated to `count`.
pub fn lattice_prefix(base: &EigenvalueSet, count: usize) -> EigenvalueSet {
    let mut d = 0;
    loop {
        let l = lattice(base, d);
        if l.len() >= count || d >= 64 {
            return l.truncate(count);
        }
        d += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn degree_two_two_generators() {
        let a = c(-1.0, 0.5);
        let b = c(-0.3, 0.0);
        let l = lattice(&EigenvalueSet::new(vec![a, b]), 2);
        let want = [c(0.0, 0.0), a, b, a * 2.0, a + b, b * 2.0];
        assert_eq!(l.len(), 6);
        for (x, y) in l.values().iter().zip(want) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn degree_zero_is_origin() {
        let l = lattice(&EigenvalueSet::new(vec![c(1.0, 0.0), c(2.0, 0.0)]), 0);
        assert_eq!(l.values(), &[c(0.0, 0.0)]);
    }

    #[test]
    fn conjugate_sum_appears_once() {
        let l = lattice(&EigenvalueSet::new(vec![c(1.0, 1.0), c(1.0, -1.0)]), 2);
        let twos = l
            .values()
            .iter()
            .filter(|v| (*v - c(2.0, 0.0)).norm() < 1e-12)
            .count();
        assert_eq!(twos, 1);
        assert!(l.closed_under_conjugation());
    }

    #[test]
    fn dedup_shrinks_count() {
        // Base {1, 2}: lattice values are the integers 0..=2d.
        let l = lattice(&EigenvalueSet::new(vec![c(1.0, 0.0), c(2.0, 0.0)]), 3);
        assert_eq!(l.len(), 7);
    }

    #[test]
    fn prefix_grows_degree_until_large_enough() {
        let base = EigenvalueSet::new(vec![c(-1.0, 2.0), c(-1.0, -2.0)]);
        let p = lattice_prefix(&base, 10);
        assert_eq!(p.len(), 10);
        assert!(p.closed_under_conjugation());
        assert!(!lattice_prefix(&base, 2).closed_under_conjugation());
    }
}
