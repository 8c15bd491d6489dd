//! Unions of half-open subintervals of the circle with exact endpoints.
//!
//! The upstairs dynamics of a stage is a pure rotation in x₁ and the tower
//! sets are products of x₁ stripe unions with one fixed inset box, so their
//! whole measure algebra collapses to 1-dimensional interval arithmetic.
//! That keeps tower diagnostics exact at parameter sizes whose grids would
//! blow any cell budget.

use num_traits::{One, Zero};

use crate::rational::{mod1, Rational};

/// A sorted union of disjoint half-open intervals inside [0, 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    pub intervals: Vec<(Rational, Rational)>,
}

impl IntervalSet {
    /// Normalize arbitrary pieces: drop empty ones, sort, merge overlaps.
    pub fn from_pieces(mut pieces: Vec<(Rational, Rational)>) -> Self {
        pieces.retain(|(lo, hi)| hi > lo);
        pieces.sort();
        let mut merged: Vec<(Rational, Rational)> = Vec::with_capacity(pieces.len());
        for (lo, hi) in pieces {
            if let Some(last) = merged.last_mut() {
                if lo <= last.1 {
                    if hi > last.1 {
                        last.1 = hi;
                    }
                    continue;
                }
            }
            merged.push((lo, hi));
        }
        IntervalSet { intervals: merged }
    }

    pub fn empty() -> Self {
        IntervalSet { intervals: Vec::new() }
    }

    pub fn measure(&self) -> Rational {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// Rotate by t on the circle, splitting pieces that wrap past 1.
    pub fn rotate(&self, t: &Rational) -> Self {
        let one = Rational::one();
        let mut pieces = Vec::with_capacity(self.intervals.len() + 1);
        for (lo, hi) in &self.intervals {
            let width = hi - lo;
            let start = mod1(&(lo + t));
            let end = &start + &width;
            if end <= one {
                pieces.push((start, end));
            } else {
                pieces.push((start, one.clone()));
                pieces.push((Rational::zero(), end - &one));
            }
        }
        Self::from_pieces(pieces)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut pieces = self.intervals.clone();
        pieces.extend(other.intervals.iter().cloned());
        Self::from_pieces(pieces)
    }

    /// λ(self ∩ other) by a two-pointer sweep.
    pub fn intersection_measure(&self, other: &Self) -> Rational {
        let a = &self.intervals;
        let b = &other.intervals;
        let mut total = Rational::zero();
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            let lo = if a[i].0 >= b[j].0 { &a[i].0 } else { &b[j].0 };
            let hi = if a[i].1 <= b[j].1 { &a[i].1 } else { &b[j].1 };
            if hi > lo {
                total += hi - lo;
            }
            if a[i].1 <= b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersection_measure(other).is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn normalization_merges_and_drops() {
        let s = IntervalSet::from_pieces(vec![
            (rat(1, 2), rat(3, 4)),
            (rat(0, 1), rat(1, 4)),
            (rat(1, 4), rat(1, 3)),
            (rat(2, 3), rat(2, 3)),
        ]);
        assert_eq!(s.intervals.len(), 2);
        assert_eq!(s.measure(), rat(1, 3) + rat(1, 4));
    }

    #[test]
    fn rotation_wraps_and_preserves_measure() {
        let s = IntervalSet::from_pieces(vec![(rat(3, 4), rat(9, 10))]);
        let r = s.rotate(&rat(1, 2));
        assert_eq!(r.measure(), s.measure());
        assert_eq!(
            r.intervals,
            vec![(rat(1, 4), rat(2, 5))]
        );
        let wrapped = s.rotate(&rat(1, 5));
        assert_eq!(wrapped.measure(), s.measure());
        assert_eq!(wrapped.intervals.len(), 2);
        // rotating by −t undoes the rotation exactly
        assert_eq!(wrapped.rotate(&rat(-1, 5)), s);
    }

    #[test]
    fn intersection_measure_sweep() {
        let a = IntervalSet::from_pieces(vec![(rat(0, 1), rat(1, 2)), (rat(3, 4), rat(1, 1))]);
        let b = IntervalSet::from_pieces(vec![(rat(1, 4), rat(4, 5))]);
        assert_eq!(a.intersection_measure(&b), rat(1, 4) + rat(1, 20));
        assert_eq!(b.intersection_measure(&a), rat(3, 10));
        assert!(!a.is_disjoint(&b));
        let c = IntervalSet::from_pieces(vec![(rat(1, 2), rat(3, 4))]);
        assert!(a.is_disjoint(&c));
    }
}
