//! Minimum-cost bipartite assignment with infeasible cells.
//!
//! Infeasible pairs are marked with [`INFEASIBLE`] (infinity). The solver
//! maximizes the number of feasible pairs first and minimizes the total cost
//! among those, which is the behavior both association stages need.

use crate::{Error, Result};

/// Cost marker for pairs that must never be matched.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Dense row-major cost matrix.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![INFEASIBLE; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(Error::input("ragged cost matrix"));
        }
        Ok(CostMatrix {
            rows: nr,
            cols: nc,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn transpose(&self) -> CostMatrix {
        let mut t = CostMatrix::new(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

/// Result of an assignment solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched (row, col) pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    /// Sum of the matched pairs' costs.
    pub total_cost: f64,
}

/// Solves the rectangular assignment problem: a minimum-total-cost matching
/// of maximum feasible cardinality. Pairs marked [`INFEASIBLE`] are never
/// returned; leftover rows and columns are reported unmatched.
pub fn solve_assignment(cost: &CostMatrix) -> Assignment {
    if cost.rows() == 0 || cost.cols() == 0 {
        return Assignment {
            pairs: Vec::new(),
            unmatched_rows: (0..cost.rows()).collect(),
            unmatched_cols: (0..cost.cols()).collect(),
            total_cost: 0.0,
        };
    }

    // Solve with rows <= cols; transpose back afterwards.
    let transposed = cost.rows() > cost.cols();
    let work = if transposed { cost.transpose() } else { cost.clone() };

    // Replace infeasible marks with a sentinel large enough that the solver
    // prefers any all-feasible matching over one using a sentinel cell.
    let finite_sum: f64 = work
        .data
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| v.abs())
        .sum();
    let big = 2.0 * finite_sum + 1.0;

    let row_to_col = shortest_augmenting_path(&work, big);

    let mut pairs = Vec::new();
    for (r, &c) in row_to_col.iter().enumerate() {
        let (orig_r, orig_c) = if transposed { (c, r) } else { (r, c) };
        if cost.get(orig_r, orig_c).is_finite() {
            pairs.push((orig_r, orig_c));
        }
    }
    pairs.sort_unstable();

    let matched_rows: Vec<bool> = {
        let mut v = vec![false; cost.rows()];
        for (r, _) in &pairs {
            v[*r] = true;
        }
        v
    };
    let matched_cols: Vec<bool> = {
        let mut v = vec![false; cost.cols()];
        for (_, c) in &pairs {
            v[*c] = true;
        }
        v
    };

    Assignment {
        total_cost: pairs.iter().map(|(r, c)| cost.get(*r, *c)).sum(),
        unmatched_rows: (0..cost.rows()).filter(|r| !matched_rows[*r]).collect(),
        unmatched_cols: (0..cost.cols()).filter(|c| !matched_cols[*c]).collect(),
        pairs,
    }
}

/// Classic O(n²m) shortest-augmenting-path assignment on a matrix with
/// rows <= cols. Returns the matched column for every row.
fn shortest_augmenting_path(cost: &CostMatrix, big: f64) -> Vec<usize> {
    let nr = cost.rows();
    let nc = cost.cols();
    debug_assert!(nr <= nc);
    let at = |r: usize, c: usize| -> f64 {
        let v = cost.get(r, c);
        if v.is_finite() {
            v
        } else {
            big
        }
    };

    // 1-based potentials; p[j] = row matched to column j (0 = none)
    let mut u = vec![0.0f64; nr + 1];
    let mut v = vec![0.0f64; nc + 1];
    let mut p = vec![0usize; nc + 1];
    let mut way = vec![0usize; nc + 1];

    for i in 1..=nr {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; nc + 1];
        let mut used = vec![false; nc + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=nc {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=nc {
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

    let mut row_to_col = vec![usize::MAX; nr];
    for j in 1..=nc {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    debug_assert!(row_to_col.iter().all(|c| *c != usize::MAX));
    row_to_col
}
