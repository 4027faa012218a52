//! Minimum-cost assignment on rectangular matrices (shortest augmenting path
//! with row and column potentials).

use nalgebra::DMatrix;

/// Returns `row -> column` for a minimum-cost assignment that matches
/// `min(rows, cols)` pairs. Costs must be finite.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let by_col = solve_assignment(&cost.transpose());
        let mut rows = vec![None; n];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                rows[r] = Some(c);
            }
        }
        return rows;
    }
    // 1-based arrays; index 0 is the virtual column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![None; n];
    for j in 1..=m {
        if owner[j] > 0 {
            rows[owner[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Total cost summed in row order.
pub fn assignment_cost(cost: &DMatrix<f64>, rows: &[Option<usize>]) -> f64 {
    rows.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[(r, c)])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimum over all injective maps from the smaller side, summed in row order.
    pub(crate) fn brute_force(cost: &DMatrix<f64>) -> f64 {
        let (n, m) = cost.shape();
        fn rec(cost: &DMatrix<f64>, r: usize, used: &mut Vec<bool>, picks: &mut Vec<Option<usize>>, best: &mut f64) {
            let (n, m) = cost.shape();
            if r == n {
                let total = assignment_cost(cost, picks);
                if total < *best {
                    *best = total;
                }
                return;
            }
            let assigned = picks.iter().filter(|p| p.is_some()).count();
            let need = n.min(m);
            // rows may stay unassigned only when there are more rows than columns
            if n - r > need - assigned {
                picks.push(None);
                rec(cost, r + 1, used, picks, best);
                picks.pop();
            }
            for c in 0..m {
                if !used[c] {
                    used[c] = true;
                    picks.push(Some(c));
                    rec(cost, r + 1, used, picks, best);
                    picks.pop();
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; m], &mut Vec::with_capacity(n), &mut best);
        best
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=6);
            let c = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..100.0));
            let rows = solve_assignment(&c);
            assert_eq!(rows.iter().filter(|r| r.is_some()).count(), n.min(m));
            assert_eq!(assignment_cost(&c, &rows), brute_force(&c));
        }
    }

    #[test]
    fn identity_and_empty() {
        let c = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(solve_assignment(&c), vec![Some(0), Some(1), Some(2), Some(3)]);
        assert!(solve_assignment(&DMatrix::zeros(0, 3)).is_empty());
        assert_eq!(solve_assignment(&DMatrix::zeros(2, 0)), vec![None, None]);
    }
}
