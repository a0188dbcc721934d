//! Maximum-weight bipartite matching via the Hungarian algorithm
//! (shortest augmenting paths with potentials, O(n²m)).

/// Matches every row of the smaller side to a distinct column (or vice
/// versa) maximizing the total weight. Returns `(row, col)` pairs sorted by
/// row.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    debug_assert!(weights.iter().all(|r| r.len() == cols));
    if rows <= cols {
        let cost: Vec<Vec<f64>> = weights.iter().map(|r| r.iter().map(|w| -w).collect()).collect();
        min_cost_assignment(&cost)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| -weights[r][c]).collect())
            .collect();
        let mut pairs: Vec<(usize, usize)> = min_cost_assignment(&cost)
            .into_iter()
            .enumerate()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Minimum-cost assignment of each of `n` rows to distinct columns out of
/// `m >= n`. Returns the column of every row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based potentials; column 0 is a virtual start
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
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let w = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        assert_eq!(max_weight_matching(&w), vec![(0, 0), (1, 1)]);
        let w = vec![vec![0.1, 0.9], vec![0.8, 0.2]];
        assert_eq!(max_weight_matching(&w), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = vec![vec![0.1, 0.5, 0.9]];
        assert_eq!(max_weight_matching(&wide), vec![(0, 2)]);
        let tall = vec![vec![0.3], vec![0.7], vec![0.1]];
        assert_eq!(max_weight_matching(&tall), vec![(1, 0)]);
        let tall = vec![vec![1.0, 0.9], vec![0.9, 0.0], vec![0.0, 0.0]];
        // greedy would take (0,0) = 1.0 and then 0.0; optimum is 0.9 + 0.9
        assert_eq!(max_weight_matching(&tall), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty() {
        assert!(max_weight_matching(&[]).is_empty());
        assert!(max_weight_matching(&[vec![]]).is_empty());
    }
}
