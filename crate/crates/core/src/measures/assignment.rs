//! Minimum-cost perfect assignment by shortest augmenting paths with
//! potentials (Hungarian method), O(n³) on a dense cost matrix.

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `col_of[i]` is the column assigned to row `i`.
    pub col_of: Vec<usize>,
    pub cost: f64,
    /// Dual potentials with `row[i] + col[j] ≤ cost(i, j)`.
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

/// `cost(i, j)` for an `n × n` problem.
pub fn solve(n: usize, cost: impl Fn(usize, usize) -> f64) -> Assignment {
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut row_cost = vec![0.0; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            for (j, rc) in row_cost.iter_mut().enumerate().skip(1) {
                if !used[j] {
                    *rc = cost(i0 - 1, j - 1);
                }
            }
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row_cost[j] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of[p[j] - 1] = j - 1;
        }
    }
    let total = col_of.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    Assignment { col_of, cost: total, row_potential: u[1..].to_vec(), col_potential: v[1..].to_vec() }
}
