//! Pareto front over (utility, risk) points: utility is maximized, risk is
//! minimized. A point is dominated when some other point is at least as good
//! in both objectives and strictly better in one; exact duplicates do not
//! dominate each other, so they stay on the front together.

/// Front membership flags, aligned with `points`. Sort-and-sweep,
/// O(n log n).
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<bool> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    // utility descending, then risk ascending
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .partial_cmp(&points[a].0)
            .unwrap()
            .then(points[a].1.partial_cmp(&points[b].1).unwrap())
    });

    let mut on_front = vec![false; n];
    let mut best_risk_higher_u = f64::INFINITY; // min risk among strictly higher utility
    let mut i = 0;
    while i < n {
        // group of equal utility
        let mut j = i;
        while j < n && points[order[j]].0 == points[order[i]].0 {
            j += 1;
        }
        let group = &order[i..j];
        let group_min_risk = group
            .iter()
            .map(|&idx| points[idx].1)
            .fold(f64::INFINITY, f64::min);
        for &idx in group {
            let (_, r) = points[idx];
            // dominated by a strictly-higher-utility point with risk <= r,
            // or by an equal-utility point with strictly lower risk
            let dominated = best_risk_higher_u <= r || group_min_risk < r;
            on_front[idx] = !dominated;
        }
        best_risk_higher_u = best_risk_higher_u.min(group_min_risk);
        i = j;
    }
    on_front
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive dominance filter used as the independent oracle.
    pub fn brute_force_front(points: &[(f64, f64)]) -> Vec<bool> {
        points
            .iter()
            .map(|&(u, r)| {
                !points.iter().any(|&(u2, r2)| {
                    u2 >= u && r2 <= r && (u2 > u || r2 < r)
                })
            })
            .collect()
    }

    #[test]
    fn worked_dominance_example() {
        let pts = [(0.9, 0.5), (0.8, 0.2), (0.7, 0.6)];
        assert_eq!(pareto_front(&pts), vec![true, true, false]);
    }

    #[test]
    fn single_point_is_on_front() {
        assert_eq!(pareto_front(&[(0.3, 0.9)]), vec![true]);
    }

    #[test]
    fn empty_input_empty_front() {
        assert!(pareto_front(&[]).is_empty());
    }

    #[test]
    fn duplicates_all_retained() {
        let pts = [(0.5, 0.5), (0.5, 0.5), (0.4, 0.6)];
        assert_eq!(pareto_front(&pts), vec![true, true, false]);
    }

    #[test]
    fn equal_utility_lower_risk_dominates() {
        let pts = [(0.5, 0.5), (0.5, 0.4)];
        assert_eq!(pareto_front(&pts), vec![false, true]);
    }

    #[test]
    fn random_points_match_brute_force() {
        use rand::prelude::*;
        use rand_chacha::ChaCha20Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for trial in 0..40 {
            let n = rng.gen_range(1..60);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    // quantized values make exact ties common
                    (
                        (rng.gen_range(0..10) as f64) / 10.0,
                        (rng.gen_range(0..10) as f64) / 10.0,
                    )
                })
                .collect();
            assert_eq!(
                pareto_front(&pts),
                brute_force_front(&pts),
                "trial {trial}: {pts:?}"
            );
        }
    }

    #[test]
    fn front_members_dominate_or_tie_every_excluded_point() {
        use rand::prelude::*;
        use rand_chacha::ChaCha20Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..50).map(|_| (rng.gen(), rng.gen())).collect();
        let flags = pareto_front(&pts);
        for (i, &(u, r)) in pts.iter().enumerate() {
            if !flags[i] {
                let covered = pts.iter().enumerate().any(|(j, &(u2, r2))| {
                    flags[j] && u2 >= u && r2 <= r && (u2 > u || r2 < r)
                });
                assert!(covered, "excluded point must be dominated by a front member");
            }
        }
    }
}
