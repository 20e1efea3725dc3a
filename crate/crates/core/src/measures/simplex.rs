//! Dense dictionary simplex for `max c·u` subject to `A u ≤ b`, `u ≥ 0`,
//! `b ≥ 0`, so the origin is a feasible starting basis.

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;
/// Degenerate pivots tolerated under Dantzig's rule before switching to Bland's.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub degenerate: bool,
    pub pivots: usize,
}

/// A row `Σ coef·u ≤ rhs` stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

pub fn maximize(c: &[f64], rows: &[Row]) -> Result<SimplexSolution> {
    let n = c.len();
    let m = rows.len();
    // tableau row i: x_basic[i] = b[i] - Σ_j a[i][j] x_nonbasic[j]
    let mut a = vec![0.0; m * n];
    let mut b = Vec::with_capacity(m);
    for (i, row) in rows.iter().enumerate() {
        if row.rhs < 0.0 {
            return Err(Error::Lp("negative right-hand side; origin not feasible".into()));
        }
        for &(j, v) in &row.coefs {
            a[i * n + j] += v;
        }
        b.push(row.rhs);
    }
    // variable ids: 0..n structural, n..n+m slack
    let mut nonbasic: Vec<usize> = (0..n).collect();
    let mut basic: Vec<usize> = (n..n + m).collect();
    let mut cost = c.to_vec();
    let mut z = 0.0;
    let mut degenerate = false;
    let mut stalls = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 50 * (n + m) + 1000;

    loop {
        let bland = stalls >= STALL_LIMIT;
        let entering = if bland {
            (0..n).filter(|&j| cost[j] > EPS).min_by_key(|&j| nonbasic[j])
        } else {
            (0..n).filter(|&j| cost[j] > EPS).max_by(|&p, &q| cost[p].total_cmp(&cost[q]).then(q.cmp(&p)))
        };
        let Some(e) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aie = a[i * n + e];
            if aie > EPS {
                let ratio = b[i] / aie;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) if ratio < best - EPS || (ratio <= best + EPS && basic[i] < basic[r]) => {
                        Some((i, ratio))
                    }
                    keep => keep,
                };
            }
        }
        let Some((r, ratio)) = leave else {
            return Err(Error::Lp("objective unbounded".into()));
        };
        if ratio <= EPS {
            degenerate = true;
            stalls += 1;
        } else {
            stalls = 0;
        }

        let piv = a[r * n + e];
        b[r] /= piv;
        for j in 0..n {
            if j != e {
                a[r * n + j] /= piv;
            }
        }
        a[r * n + e] = 1.0 / piv;
        let (br, row_r): (f64, Vec<f64>) = (b[r], a[r * n..(r + 1) * n].to_vec());
        for i in 0..m {
            if i == r {
                continue;
            }
            let aie = a[i * n + e];
            if aie == 0.0 {
                continue;
            }
            b[i] -= aie * br;
            if b[i] < 0.0 && b[i] > -1e-11 {
                b[i] = 0.0;
            }
            let base = i * n;
            for j in 0..n {
                if j != e {
                    a[base + j] -= aie * row_r[j];
                }
            }
            a[base + e] = -aie * row_r[e];
        }
        let ce = cost[e];
        z += ce * br;
        for j in 0..n {
            if j != e {
                cost[j] -= ce * row_r[j];
            }
        }
        cost[e] = -ce * row_r[e];
        std::mem::swap(&mut nonbasic[e], &mut basic[r]);

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Lp(format!("no convergence after {pivots} pivots")));
        }
    }

    let mut x = vec![0.0; n];
    for (i, &v) in basic.iter().enumerate() {
        if v < n {
            x[v] = b[i];
        }
    }
    Ok(SimplexSolution { value: z, x, degenerate, pivots })
}
