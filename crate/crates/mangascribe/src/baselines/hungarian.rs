//! Minimum-cost bipartite matching with a deterministic tie-break: among
//! all minimum-cost maximal matchings, return the lexicographically
//! smallest when read row by row, with "unmatched" sorting after every
//! real column.

use crate::error::Error;
use crate::Result;

/// Relative tolerance for "same total cost" during the tie-break pass.
const VALUE_EPS: f64 = 1e-9;

/// Matches rows of `cost` to columns, minimizing total cost over matchings
/// of size `min(rows, cols)`. `result[i]` is the column of row `i`, or
/// `None` when the row is left out (only possible when rows > cols).
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<Option<usize>>> {
    let r = cost.len();
    if r == 0 {
        return Err(Error::input("empty cost matrix"));
    }
    let c = cost[0].len();
    if c == 0 {
        return Err(Error::input("cost matrix has no columns"));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != c {
            return Err(Error::input(format!(
                "ragged cost matrix: row {i} has {} entries, expected {c}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite cost in row {i}")));
        }
    }

    let target = optimal_value(cost, &vec![false; r], &vec![false; c]);
    let scale = target.abs().max(1.0);

    // Fix rows first to last; each takes the smallest column that keeps the
    // total optimal, so the finished matching is the lexicographic minimum.
    let mut row_done = vec![false; r];
    let mut col_done = vec![false; c];
    let mut result = vec![None; r];
    let mut fixed_cost = 0.0;
    for i in 0..r {
        row_done[i] = true;
        let mut chosen = None;
        for j in 0..c {
            if col_done[j] {
                continue;
            }
            col_done[j] = true;
            let rest = optimal_value(cost, &row_done, &col_done);
            col_done[j] = false;
            if (fixed_cost + cost[i][j] + rest - target).abs() <= VALUE_EPS * scale {
                chosen = Some(j);
                break;
            }
        }
        match chosen {
            Some(j) => {
                col_done[j] = true;
                fixed_cost += cost[i][j];
                result[i] = Some(j);
            }
            None => {
                // Leaving the row out must itself preserve the optimum.
                let rest = optimal_value(cost, &row_done, &col_done);
                debug_assert!(
                    (fixed_cost + rest - target).abs() <= VALUE_EPS * scale,
                    "no column and no skip preserves the optimum"
                );
                result[i] = None;
            }
        }
    }
    Ok(result)
}

/// Total cost of a matching produced by [`hungarian`] against its matrix.
pub fn matching_cost(cost: &[Vec<f64>], matching: &[Option<usize>]) -> f64 {
    matching
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cost[i][j]))
        .sum()
}

/// Minimum cost of a maximal matching on the rows/columns not yet fixed.
/// Pads the live submatrix to a square with zero-cost dummies so matching
/// size is forced to min(live rows, live cols).
fn optimal_value(cost: &[Vec<f64>], row_done: &[bool], col_done: &[bool]) -> f64 {
    let rows: Vec<usize> = (0..row_done.len()).filter(|&i| !row_done[i]).collect();
    let cols: Vec<usize> = (0..col_done.len()).filter(|&j| !col_done[j]).collect();
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let n = rows.len().max(cols.len());
    let mut a = vec![vec![0.0; n]; n];
    for (ri, &i) in rows.iter().enumerate() {
        for (ci, &j) in cols.iter().enumerate() {
            a[ri][ci] = cost[i][j];
        }
    }
    solve_square(&a)
}

/// Classic potentials/augmenting-path solver for the square assignment
/// problem; returns the optimal total cost.
fn solve_square(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    // 1-based columns; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // row (1-based) matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        if p[j] != 0 {
            total += a[p[j] - 1][j - 1];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_on_diagonal_dominant() {
        let m = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(m, vec![Some(0), Some(1)]);
        assert_eq!(matching_cost(&[vec![1.0, 2.0], vec![2.0, 1.0]], &m), 2.0);
    }

    #[test]
    fn crossing_beats_diagonal() {
        let cost = vec![vec![10.0, 1.0], vec![1.0, 10.0]];
        let m = hungarian(&cost).unwrap();
        assert_eq!(m, vec![Some(1), Some(0)]);
        assert_eq!(matching_cost(&cost, &m), 2.0);
    }

    #[test]
    fn all_ties_resolve_lexicographically() {
        let cost = vec![vec![1.0; 3]; 3];
        assert_eq!(
            hungarian(&cost).unwrap(),
            vec![Some(0), Some(1), Some(2)]
        );
        // Two optima sharing the value: row 0 keeps the smaller column.
        let cost = vec![vec![2.0, 1.0], vec![2.0, 1.0]];
        assert_eq!(hungarian(&cost).unwrap(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn wide_matrix_matches_all_rows() {
        let m = hungarian(&[vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(m, vec![Some(1)]);
    }

    #[test]
    fn tall_matrix_skips_expensive_rows() {
        let cost = vec![vec![3.0], vec![1.0], vec![2.0]];
        let m = hungarian(&cost).unwrap();
        assert_eq!(m, vec![None, Some(0), None]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[]).is_err());
        assert!(hungarian(&[vec![]]).is_err());
        assert!(hungarian(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
    }

    /// Exhaustive oracle: enumerate every row-to-column map (including
    /// skips), keep maximal ones, then the cheapest, then the row-wise
    /// lexicographically smallest with None ordered last.
    fn oracle(cost: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
        fn key(m: &[Option<usize>]) -> Vec<usize> {
            m.iter().map(|j| j.unwrap_or(usize::MAX)).collect()
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            i: usize,
            matched: usize,
            total: f64,
            cost: &[Vec<f64>],
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<usize>>,
            size: usize,
            best: &mut Option<(f64, Vec<Option<usize>>)>,
        ) {
            if i == cost.len() {
                if matched != size {
                    return;
                }
                let better = match best {
                    None => true,
                    Some((bc, bm)) => {
                        total < *bc - 1e-12
                            || ((total - *bc).abs() <= 1e-12 && key(cur) < key(bm))
                    }
                };
                if better {
                    *best = Some((total, cur.clone()));
                }
                return;
            }
            for j in 0..cost[0].len() {
                if !used[j] {
                    used[j] = true;
                    cur[i] = Some(j);
                    rec(i + 1, matched + 1, total + cost[i][j], cost, used, cur, size, best);
                    cur[i] = None;
                    used[j] = false;
                }
            }
            rec(i + 1, matched, total, cost, used, cur, size, best);
        }
        let r = cost.len();
        let c = cost[0].len();
        let mut best = None;
        let mut cur = vec![None; r];
        let mut used = vec![false; c];
        rec(0, 0, 0.0, cost, &mut used, &mut cur, r.min(c), &mut best);
        best.unwrap()
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..150 {
            let r = rng.gen_range(1..=5);
            let c = rng.gen_range(1..=5);
            // Coarse grid of values makes cost ties common, exercising the
            // lexicographic pass.
            let cost: Vec<Vec<f64>> = (0..r)
                .map(|_| (0..c).map(|_| rng.gen_range(0..4) as f64 / 2.0).collect())
                .collect();
            let got = hungarian(&cost).unwrap();
            let (oracle_cost, oracle_match) = oracle(&cost);
            assert!(
                (matching_cost(&cost, &got) - oracle_cost).abs() < 1e-9,
                "case {case}: cost {} vs {oracle_cost} for {cost:?}",
                matching_cost(&cost, &got)
            );
            assert_eq!(got, oracle_match, "case {case}: {cost:?}");
        }
    }
}
