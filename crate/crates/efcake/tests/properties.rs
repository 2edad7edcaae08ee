//! Property suite for the measure-theoretic core: the piece algebra and
//! valuation operations everything else is built on.

use efcake::valuation::{perfect_partition, ValuationDensity};
use efcake::{Frac, PieceSet};
use proptest::prelude::*;

fn frac_strategy() -> impl Strategy<Value = Frac> {
    (-1000i64..1000, 1i64..1000).prop_map(|(n, d)| Frac::new(n, d))
}

/// A union of up to four grid-aligned intervals inside [0,1].
fn piece_strategy() -> impl Strategy<Value = PieceSet> {
    prop::collection::vec((0u8..97, 0u8..97), 0..4).prop_map(|pairs| {
        let mut p = PieceSet::empty();
        for (a, b) in pairs {
            let (lo, hi) = (a.min(b), a.max(b));
            if lo < hi {
                p = p.union(&PieceSet::interval(
                    Frac::new(lo as i64, 97),
                    Frac::new(hi as i64, 97),
                ));
            }
        }
        p
    })
}

/// Piecewise-constant densities with up to six segments on the 1/64 grid,
/// non-negative integer weights, normalized to integrate to 1.
fn valuation_strategy() -> impl Strategy<Value = ValuationDensity> {
    (
        prop::collection::btree_set(1u8..64, 0..5),
        prop::collection::vec(0i64..10, 6),
    )
        .prop_map(|(points, weights)| {
            let mut bounds = vec![Frac::zero()];
            bounds.extend(points.iter().map(|&k| Frac::new(k as i64, 64)));
            bounds.push(Frac::one());
            let nseg = bounds.len() - 1;
            let total: i64 = weights[..nseg].iter().sum();
            if total == 0 {
                return ValuationDensity::uniform();
            }
            let segs: Vec<(Frac, Frac, Frac)> = (0..nseg)
                .map(|j| {
                    let len = &bounds[j + 1] - &bounds[j];
                    let d = Frac::int(weights[j]) / (Frac::int(total) * len);
                    (bounds[j].clone(), bounds[j + 1].clone(), d)
                })
                .collect();
            ValuationDensity::from_segments(&segs).unwrap()
        })
}

proptest! {
    #[test]
    fn frac_display_parse_round_trip(f in frac_strategy()) {
        let back: Frac = f.to_string().parse().unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn measure_is_modular(v in valuation_strategy(), a in piece_strategy(), b in piece_strategy()) {
        // v(A) + v(B) = v(A ∪ B) + v(A ∩ B) for any additive measure.
        let lhs = v.measure(&a) + v.measure(&b);
        let rhs = v.measure(&a.union(&b)) + v.measure(&a.intersect(&b));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn subtract_complements_intersection(a in piece_strategy(), b in piece_strategy()) {
        let diff = a.subtract(&b);
        prop_assert!(diff.is_disjoint(&b));
        prop_assert_eq!(diff.union(&a.intersect(&b)), a);
    }

    #[test]
    fn union_length_never_exceeds_sum(a in piece_strategy(), b in piece_strategy()) {
        prop_assert!(a.union(&b).length() <= a.length() + b.length());
        prop_assert!(a.intersect(&b).is_subset_of(&a));
    }

    #[test]
    fn piece_display_parse_round_trip(a in piece_strategy()) {
        let back: PieceSet = a.to_string().parse().unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn quantile_cut_hits_its_target(v in valuation_strategy(), num in 0u8..=16) {
        let target = Frac::new(num as i64, 16);
        let cake = PieceSet::cake();
        let x = v.quantile_cut(&cake, &target).unwrap();
        prop_assert_eq!(v.measure(&cake.before(&x)), target);
    }

    #[test]
    fn split_equal_partitions_exactly(v in valuation_strategy(), k in 1usize..6) {
        let cake = PieceSet::cake();
        let (parts, _cuts) = v.split_equal(&cake, k).unwrap();
        prop_assert_eq!(parts.len(), k);
        let mut whole = PieceSet::empty();
        let each = Frac::one() / Frac::int(k as i64);
        for p in &parts {
            prop_assert!(whole.is_disjoint(p));
            prop_assert_eq!(v.measure(p), each.clone());
            whole = whole.union(p);
        }
        prop_assert_eq!(whole, cake);
    }

    #[test]
    fn perfect_partition_is_exact_for_everyone(
        u in valuation_strategy(),
        v in valuation_strategy(),
        w in valuation_strategy(),
    ) {
        let cake = PieceSet::cake();
        let ratios = [Frac::new(1, 6), Frac::new(1, 3), Frac::new(1, 2)];
        let slices = perfect_partition(&[&u, &v, &w], &cake, &ratios);
        prop_assert_eq!(slices.len(), 3);
        let mut whole = PieceSet::empty();
        for (slice, r) in slices.iter().zip(&ratios) {
            for val in [&u, &v, &w] {
                prop_assert_eq!(val.measure(slice), r * &val.measure(&cake));
            }
            whole = whole.union(slice);
        }
        prop_assert_eq!(whole, cake);
    }
}
