use crate::similarity::RelatednessMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    /// Indices kept, ascending.
    pub retained: Vec<usize>,
    /// Indices removed with the best relatedness they reached.
    pub pruned: Vec<(usize, f64)>,
}

/// Keeps a behavior iff its relatedness to at least one of its `k` temporal
/// neighbors on either side reaches `threshold`. The matrix must be indexed
/// in time order. A behavior without neighbors is kept.
pub fn prune(matrix: &RelatednessMatrix, k: usize, threshold: f64) -> PruneOutcome {
    let n = matrix.len();
    let mut out = PruneOutcome {
        retained: Vec::with_capacity(n),
        pruned: Vec::new(),
    };
    for i in 0..n {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(n.saturating_sub(1));
        let best = (lo..=hi)
            .filter(|&j| j != i)
            .map(|j| matrix.get(i, j))
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.max(r)))
            });
        match best {
            Some(r) if r < threshold => out.pruned.push((i, r)),
            _ => out.retained.push(i),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singleton_is_kept() {
        let m = RelatednessMatrix::from_fn(1, |_, _| 0.0);
        assert_eq!(prune(&m, 3, 0.35).retained, vec![0]);
    }

    #[test]
    fn only_near_neighbors_count() {
        // 0 relates strongly to 4 only, which is outside k = 3.
        let m = RelatednessMatrix::from_fn(5, |i, j| if (i, j) == (0, 4) { 0.9 } else { 0.1 });
        let out = prune(&m, 3, 0.35);
        assert_eq!(out.retained, Vec::<usize>::new());
        let out = prune(&m, 4, 0.35);
        assert_eq!(out.retained, vec![0, 4]);
    }

    proptest! {
        #[test]
        fn raising_the_threshold_never_grows_the_kept_set(
            n in 1usize..25,
            seed in prop::collection::vec(0.0f64..1.0, 300),
            low in 0.0f64..1.0,
            bump in 0.0f64..1.0,
        ) {
            let m = RelatednessMatrix::from_fn(n, |i, j| seed[(i * 17 + j * 31) % seed.len()]);
            let high = (low + bump).min(1.0);
            let loose = prune(&m, 3, low).retained;
            let strict = prune(&m, 3, high).retained;
            prop_assert!(strict.iter().all(|i| loose.contains(i)));
            prop_assert_eq!(loose.len() + prune(&m, 3, low).pruned.len(), n);
        }
    }
}
