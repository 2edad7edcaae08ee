//! Pieces of cake as canonical unions of half-open rational intervals.
//!
//! The cake is `[0,1)`. A [`PieceSet`] is a finite union of disjoint
//! half-open intervals `[lo, hi)` kept sorted with no two adjacent
//! intervals touching, so equal sets compare equal structurally.
//! Half-open intervals make partitions literal set partitions: no
//! endpoint is ever counted twice.
//!
//! ```
//! use efcake::pieces::PieceSet;
//! use efcake::frac::Frac;
//!
//! let left = PieceSet::interval(Frac::zero(), Frac::new(1, 2));
//! let right = PieceSet::interval(Frac::new(1, 2), Frac::one());
//! assert_eq!(left.union(&right), PieceSet::cake());
//! assert!(left.intersect(&right).is_empty());
//! ```

use crate::frac::{Frac, FracParseError};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A canonical finite union of disjoint half-open intervals within `[0,1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PieceSet {
    intervals: Vec<(Frac, Frac)>,
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum PieceError {
    #[error("interval [{0}, {1}) is out of bounds or empty")]
    BadInterval(Frac, Frac),
    #[error("malformed piece set `{0}`: {1}")]
    Parse(String, FracParseError),
    #[error("malformed span `{0}` (expected lo..hi)")]
    BadSpan(String),
}

impl PieceSet {
    /// The empty piece.
    pub fn empty() -> Self {
        PieceSet { intervals: vec![] }
    }

    /// The whole cake `[0,1)`.
    pub fn cake() -> Self {
        PieceSet::interval(Frac::zero(), Frac::one())
    }

    /// A single interval `[lo, hi)`; empty when `lo >= hi`.
    pub fn interval(lo: Frac, hi: Frac) -> Self {
        if lo >= hi {
            return PieceSet::empty();
        }
        PieceSet {
            intervals: vec![(lo, hi)],
        }
    }

    /// Builds the canonical form from arbitrary intervals: empty spans are
    /// dropped, overlapping or touching spans are merged.
    pub fn from_intervals<I: IntoIterator<Item = (Frac, Frac)>>(iter: I) -> Self {
        let mut spans: Vec<(Frac, Frac)> = iter.into_iter().filter(|(lo, hi)| lo < hi).collect();
        spans.sort();
        let mut out: Vec<(Frac, Frac)> = Vec::with_capacity(spans.len());
        for (lo, hi) in spans {
            match out.last_mut() {
                Some((_, phi)) if *phi >= lo => {
                    if hi > *phi {
                        *phi = hi;
                    }
                }
                _ => out.push((lo, hi)),
            }
        }
        PieceSet { intervals: out }
    }

    /// Validates bounds for externally supplied intervals.
    pub fn checked(self) -> Result<Self, PieceError> {
        for (lo, hi) in &self.intervals {
            if lo.is_negative() || *hi > Frac::one() {
                return Err(PieceError::BadInterval(lo.clone(), hi.clone()));
            }
        }
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[(Frac, Frac)] {
        &self.intervals
    }

    /// Total Lebesgue length of the piece.
    pub fn length(&self) -> Frac {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn union(&self, other: &PieceSet) -> PieceSet {
        PieceSet::from_intervals(
            self.intervals
                .iter()
                .chain(other.intervals.iter())
                .cloned(),
        )
    }

    pub fn intersect(&self, other: &PieceSet) -> PieceSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (alo, ahi) = &self.intervals[i];
            let (blo, bhi) = &other.intervals[j];
            let lo = alo.clone().max(blo.clone());
            let hi = ahi.clone().min(bhi.clone());
            if lo < hi {
                out.push((lo, hi));
            }
            if ahi <= bhi {
                i += 1;
            } else {
                j += 1;
            }
        }
        PieceSet { intervals: out }
    }

    /// Set difference `self \ other`.
    pub fn subtract(&self, other: &PieceSet) -> PieceSet {
        let mut out = Vec::new();
        for (lo, hi) in &self.intervals {
            let mut cur = lo.clone();
            for (blo, bhi) in &other.intervals {
                if bhi <= &cur {
                    continue;
                }
                if blo >= hi {
                    break;
                }
                if blo > &cur {
                    out.push((cur.clone(), blo.clone()));
                }
                cur = cur.max(bhi.clone());
                if &cur >= hi {
                    break;
                }
            }
            if &cur < hi {
                out.push((cur, hi.clone()));
            }
        }
        PieceSet { intervals: out }
    }

    /// The part of the piece to the left of `x`, i.e. `self ∩ [0, x)`.
    pub fn before(&self, x: &Frac) -> PieceSet {
        let mut out = Vec::new();
        for (lo, hi) in &self.intervals {
            if lo >= x {
                break;
            }
            out.push((lo.clone(), hi.clone().min(x.clone())));
        }
        PieceSet { intervals: out }
    }

    /// `self ∩ [x, 1)`.
    pub fn from_point(&self, x: &Frac) -> PieceSet {
        self.subtract(&PieceSet::interval(Frac::zero(), x.clone()))
    }

    pub fn is_subset_of(&self, other: &PieceSet) -> bool {
        self.subtract(other).is_empty()
    }

    /// True when the two pieces share no cake.
    pub fn is_disjoint(&self, other: &PieceSet) -> bool {
        self.intersect(other).is_empty()
    }
}

impl fmt::Display for PieceSet {
    /// Serializes as comma-separated `lo..hi` spans; the empty piece as
    /// `empty`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "empty");
        }
        for (k, (lo, hi)) in self.intervals.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}..{}", lo, hi)?;
        }
        Ok(())
    }
}

impl FromStr for PieceSet {
    type Err = PieceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "empty" || s.is_empty() {
            return Ok(PieceSet::empty());
        }
        let mut spans = Vec::new();
        for span in s.split(',') {
            let (lo, hi) = span
                .split_once("..")
                .ok_or_else(|| PieceError::BadSpan(span.to_string()))?;
            let lo: Frac = lo
                .parse()
                .map_err(|e| PieceError::Parse(span.to_string(), e))?;
            let hi: Frac = hi
                .parse()
                .map_err(|e| PieceError::Parse(span.to_string(), e))?;
            spans.push((lo, hi));
        }
        PieceSet::from_intervals(spans).checked()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(spans: &[(i64, i64, i64)]) -> PieceSet {
        // (num_lo, num_hi, den)
        PieceSet::from_intervals(
            spans
                .iter()
                .map(|&(a, b, d)| (Frac::new(a, d), Frac::new(b, d))),
        )
    }

    #[test]
    fn canonical_form_merges_touching_spans() {
        let p = ps(&[(0, 1, 4), (1, 2, 4)]);
        assert_eq!(p.intervals().len(), 1);
        assert_eq!(p, ps(&[(0, 2, 4)]));
        let q = ps(&[(2, 3, 4), (0, 1, 4)]);
        assert_eq!(q.intervals().len(), 2);
    }

    #[test]
    fn boolean_ops() {
        let left = ps(&[(0, 2, 4)]);
        let right = ps(&[(1, 4, 4)]);
        assert_eq!(left.intersect(&right), ps(&[(1, 2, 4)]));
        assert_eq!(left.union(&right), PieceSet::cake());
        assert_eq!(left.subtract(&right), ps(&[(0, 1, 4)]));
        assert_eq!(PieceSet::cake().subtract(&left), ps(&[(2, 4, 4)]));
    }

    #[test]
    fn before_and_from_point_partition() {
        let p = ps(&[(0, 1, 4), (2, 4, 4)]);
        let x = Frac::new(3, 4);
        let a = p.before(&x);
        let b = p.from_point(&x);
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b), p);
    }

    #[test]
    fn display_parse_round_trip() {
        let p = ps(&[(0, 1, 4), (2, 3, 4)]);
        let s = p.to_string();
        assert_eq!(s, "0..1/4,1/2..3/4");
        assert_eq!(s.parse::<PieceSet>().unwrap(), p);
        assert_eq!("empty".parse::<PieceSet>().unwrap(), PieceSet::empty());
    }
}
