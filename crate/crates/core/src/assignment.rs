//! Minimum-cost linear assignment (Hungarian method with potentials).

/// Solves the rectangular assignment problem for a finite cost matrix.
///
/// Returns, for every row, the column it is assigned to. Exactly
/// `min(rows, cols)` rows receive a column and the total cost over those
/// pairs is minimal. Runs in `O(n^2 m)` with `n <= m`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    debug_assert!(cost.iter().flatten().all(|c| c.is_finite()));
    if cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve_wide(rows, cols, |i, j| cost[i][j])
    } else {
        let by_col = solve_wide(cols, rows, |i, j| cost[j][i]);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    }
}

fn solve_wide(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based with a virtual column 0
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
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] > 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Assignment over a partially forbidden cost matrix (`None` = forbidden).
///
/// Maximises the number of allowed pairs first and minimises their total
/// cost second. Forbidden pairs are never returned.
pub fn gated_assignment(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let allowed_total: f64 = cost.iter().flatten().flatten().map(|c| c.abs()).sum();
    // any single forbidden pair must outweigh every allowed matching
    let forbidden = 2.0 * allowed_total + 1.0;
    let dense: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|c| c.unwrap_or(forbidden)).collect())
        .collect();
    min_cost_assignment(&dense)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| cost[i][j].is_some()).map(|j| (i, j)))
        .collect()
}
