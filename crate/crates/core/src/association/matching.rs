//! Greedy and optimal one-to-one assignment over gated cost matrices.

use crate::error::{Error, Result};

/// Dense row-major `rows x cols` matrix of association costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{cols} columns"),
                actual: "ragged rows".into(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    fn same_shape(&self, other: &CostMatrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }
}

/// One-to-one matching between rows (detections) and columns (tracks).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs, in the order they were accepted.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_matches(matches: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(i, j) in &matches {
            row_used[i] = true;
            col_used[j] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&i| !row_used[i]).collect(),
            unmatched_cols: (0..cols).filter(|&j| !col_used[j]).collect(),
        }
    }

    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(i, j)| cost.get(i, j)).sum()
    }

    /// Column matched to `row`, if any.
    pub fn col_for(&self, row: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == row).map(|m| m.1)
    }
}

/// Greedy matching in row order: every row takes its cheapest still-unmatched
/// column (lowest index on ties) and keeps it only if the cost is strictly
/// below that pair's gate. Rows are expected in priority order.
pub fn greedy_assign(cost: &CostMatrix, gate: &CostMatrix) -> Result<Assignment> {
    cost.same_shape(gate)?;
    let mut taken = vec![false; cost.cols];
    let mut matches = Vec::new();
    for i in 0..cost.rows {
        let row = &cost.data[i * cost.cols..(i + 1) * cost.cols];
        let mut best: Option<(usize, f64)> = None;
        for (j, &c) in row.iter().enumerate() {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((j, c));
            }
        }
        if let Some((j, c)) = best {
            if c < gate.get(i, j) {
                taken[j] = true;
                matches.push((i, j));
            }
        }
    }
    Ok(Assignment::from_matches(matches, cost.rows, cost.cols))
}

/// Optimal one-to-one assignment among pairs with `cost < gate`: the largest
/// possible number of pairs, and among those the smallest total cost.
/// Gated-out pairs are never matched. Matches are returned sorted by row.
pub fn hungarian_match(cost: &CostMatrix, gate: &CostMatrix) -> Result<Assignment> {
    cost.same_shape(gate)?;
    let (n, m) = (cost.rows, cost.cols);
    if cost.data.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let allowed = |i: usize, j: usize| cost.get(i, j) < gate.get(i, j);
    let valid: Vec<f64> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| allowed(i, j))
        .map(|(i, j)| cost.get(i, j))
        .collect();
    if valid.is_empty() {
        return Ok(Assignment::from_matches(Vec::new(), n, m));
    }
    let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Any assignment with one more allowed pair is cheaper than every
    // assignment with fewer, whatever the shifted costs of the rest.
    let forbidden = (hi - lo) * (n.min(m) as f64 + 1.0) + 1.0;
    let shifted = CostMatrix::from_fn(n, m, |i, j| {
        if allowed(i, j) {
            cost.get(i, j) - lo
        } else {
            forbidden
        }
    });
    let matches = solve(&shifted)
        .into_iter()
        .filter(|&(i, j)| allowed(i, j))
        .collect();
    Ok(Assignment::from_matches(matches, n, m))
}

/// Plain rectangular assignment: exactly `min(rows, cols)` pairs of minimum
/// total cost, no gating. Matches are sorted by row.
pub fn min_cost_assignment(cost: &CostMatrix) -> Result<Vec<(usize, usize)>> {
    if cost.data.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let (n, m) = (cost.rows, cost.cols);
    if n == 0 || m == 0 {
        return Ok(Vec::new());
    }
    Ok(solve(cost))
}

// Full-cardinality minimum assignment of any rectangular matrix, sorted by row.
fn solve(a: &CostMatrix) -> Vec<(usize, usize)> {
    if a.rows <= a.cols {
        solve_wide(a).into_iter().enumerate().collect()
    } else {
        let t = CostMatrix::from_fn(a.cols, a.rows, |i, j| a.get(j, i));
        let mut pairs: Vec<(usize, usize)> = solve_wide(&t).into_iter().enumerate().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Shortest-augmenting-path Hungarian method (potentials), O(n^2 m) for an
/// n x m matrix with n <= m. Returns the column assigned to each row.
fn solve_wide(a: &CostMatrix) -> Vec<usize> {
    let (n, m) = (a.rows, a.cols);
    // 1-based potentials, column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a.get(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(rows: usize, cols: usize) -> CostMatrix {
        CostMatrix::filled(rows, cols, f64::INFINITY)
    }

    #[test]
    fn hungarian_two_by_two() {
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let a = hungarian_match(&cost, &open(2, 2)).unwrap();
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost(&cost), 4.0);
    }

    #[test]
    fn hungarian_zero_diagonal() {
        let cost = CostMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 + (i * j) as f64 });
        let a = hungarian_match(&cost, &open(4, 4)).unwrap();
        assert_eq!(a.matches, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(a.total_cost(&cost), 0.0);
    }

    #[test]
    fn hungarian_fully_gated() {
        let cost = CostMatrix::filled(3, 2, 5.0);
        let gate = CostMatrix::filled(3, 2, 5.0);
        let a = hungarian_match(&cost, &gate).unwrap();
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1, 2]);
        assert_eq!(a.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn hungarian_prefers_more_pairs() {
        // Single pair (0,0) costs 0; the two-pair assignment costs 18 but
        // covers more objects.
        let cost = CostMatrix::from_rows(&[vec![0.0, 9.0], vec![9.0, 100.0]]).unwrap();
        let gate = CostMatrix::from_rows(&[vec![10.0, 10.0], vec![10.0, 10.0]]).unwrap();
        let a = hungarian_match(&cost, &gate).unwrap();
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn hungarian_rectangular_and_empty() {
        let cost = CostMatrix::from_rows(&[vec![3.0, 1.0, 2.0]]).unwrap();
        let a = hungarian_match(&cost, &open(1, 3)).unwrap();
        assert_eq!(a.matches, vec![(0, 1)]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
        let empty = CostMatrix::new(0, 3, vec![]).unwrap();
        let a = hungarian_match(&empty, &open(0, 3)).unwrap();
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_cols.len(), 3);
    }

    #[test]
    fn hungarian_rejects_non_finite() {
        let cost = CostMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(hungarian_match(&cost, &open(1, 1)).is_err());
    }

    #[test]
    fn greedy_takes_rows_in_order() {
        // Row 0 grabs column 0 even though the global optimum gives it column 1.
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let a = greedy_assign(&cost, &open(2, 2)).unwrap();
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&cost), 5.0);
    }

    #[test]
    fn greedy_gate_is_strict_and_per_pair() {
        let cost = CostMatrix::from_rows(&[vec![4.0, 5.0]]).unwrap();
        let gate = CostMatrix::from_rows(&[vec![4.0, 100.0]]).unwrap();
        // Argmin is column 0, which fails its gate; column 1 is not considered.
        let a = greedy_assign(&cost, &gate).unwrap();
        assert!(a.matches.is_empty());
    }

    #[test]
    fn greedy_cost_ties_pick_lowest_column() {
        let cost = CostMatrix::from_rows(&[vec![2.0, 1.0, 1.0]]).unwrap();
        let a = greedy_assign(&cost, &open(1, 3)).unwrap();
        assert_eq!(a.matches, vec![(0, 1)]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(greedy_assign(&open(2, 2), &open(2, 3)).is_err());
        assert!(hungarian_match(&open(2, 2), &open(3, 2)).is_err());
    }
}
