//! Nearest-rank percentiles.
//!
//! `P(q)` is the value at 1-based position `ceil(q * n / 100)` of the
//! ascending sample, with position clamped to at least 1. Ranks are computed
//! in integer arithmetic so `q * n` never picks up floating-point error.

use std::collections::BTreeMap;

pub fn nearest_rank_position(percent: u32, n: usize) -> usize {
    debug_assert!((1..=100).contains(&percent));
    let pos = (percent as usize * n).div_ceil(100);
    pos.max(1)
}

/// Percentile of an already sorted slice. `None` when empty.
pub fn percentile_sorted<T>(sorted: &[T], percent: u32) -> Option<&T> {
    if sorted.is_empty() {
        return None;
    }
    sorted.get(nearest_rank_position(percent, sorted.len()) - 1)
}

pub fn percentile<T: Ord + Clone>(values: &[T], percent: u32) -> Option<T> {
    let mut v = values.to_vec();
    v.sort();
    percentile_sorted(&v, percent).cloned()
}

/// Percentile over a value -> multiplicity histogram.
pub fn percentile_histogram<T>(hist: &BTreeMap<T, u64>, percent: u32) -> Option<&T> {
    let n: u64 = hist.values().sum();
    if n == 0 {
        return None;
    }
    let pos = nearest_rank_position(percent, n as usize) as u64;
    let mut seen = 0;
    for (v, c) in hist {
        seen += c;
        if seen >= pos {
            return Some(v);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_checked_ranks() {
        let v = [2, 2, 3, 3, 5];
        let got: Vec<_> = [10, 25, 50, 75, 90].iter().map(|p| *percentile_sorted(&v, *p).unwrap()).collect();
        assert_eq!(got, vec![2, 2, 3, 3, 5]);
        assert_eq!(nearest_rank_position(10, 10), 1);
        assert_eq!(nearest_rank_position(50, 4), 2);
        assert_eq!(nearest_rank_position(10, 1), 1);
        assert_eq!(percentile::<u32>(&[], 50), None);
    }

    proptest! {
        #[test]
        fn histogram_matches_sorted(values in proptest::collection::vec(0u32..20, 1..60), p in 1u32..=100) {
            let mut hist = BTreeMap::new();
            for v in &values {
                *hist.entry(*v).or_insert(0u64) += 1;
            }
            prop_assert_eq!(percentile_histogram(&hist, p).copied(), percentile(&values, p));
        }
    }
}
