//! Brute-force reference values for the bounded-Lipschitz distance between
//! two weighted point sets under an arbitrary metric.
//!
//! With net weights `c` summing to zero the objective is invariant under
//! adding a constant to `g`, and any feasible `g` with range ≤ 2s can be
//! recentred into `[−s, s]`. So the program is equivalently
//! `max Σ c_i g_i` over `g_0 = 0`, `|g_i − g_j| ≤ min(L d_ij, 2s)`.

#![allow(dead_code)]

/// Merge two weighted supports into net weights on distinct points.
pub fn net_weights<P: Clone + PartialEq>(a: &[(P, f64)], b: &[(P, f64)]) -> (Vec<P>, Vec<f64>) {
    let mut pts: Vec<P> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (p, w, sign) in a.iter().map(|(p, w)| (p, w, 1.0)).chain(b.iter().map(|(p, w)| (p, w, -1.0))) {
        match pts.iter().position(|q| q == p) {
            Some(k) => c[k] += sign * w,
            None => {
                pts.push(p.clone());
                c.push(sign * w);
            }
        }
    }
    (pts, c)
}

fn caps<P>(pts: &[P], metric: &impl Fn(&P, &P) -> f64, lip: f64, sup: f64) -> Vec<Vec<f64>> {
    pts.iter().map(|p| pts.iter().map(|q| (lip * metric(p, q)).min(2.0 * sup)).collect()).collect()
}

/// Exhaustive search with `g_i` on a grid of the given step; at most 3 points.
pub fn grid_value<P>(pts: &[P], c: &[f64], metric: impl Fn(&P, &P) -> f64, lip: f64, sup: f64, step: f64) -> f64 {
    let n = pts.len();
    assert!(n <= 3, "grid oracle is limited to 3 points");
    if n <= 1 {
        return 0.0;
    }
    let cap = caps(pts, &metric, lip, sup);
    let k = (2.0 * sup / step).round() as i64;
    let vals = |lim: f64| {
        let m = (lim / step).floor() as i64;
        (-m.min(k)..=m.min(k)).map(move |i| i as f64 * step)
    };
    let mut best = 0.0f64;
    for g1 in vals(cap[0][1]) {
        if n == 2 {
            best = best.max(c[1] * g1);
            continue;
        }
        for g2 in vals(cap[0][2]) {
            if (g1 - g2).abs() <= cap[1][2] + 1e-12 {
                best = best.max(c[1] * g1 + c[2] * g2);
            }
        }
    }
    best
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][col] = b[r];
        }
        *xc = det(m) / d;
    }
    Some(x)
}

/// Best vertex of the polytope `g_0 = 0`, `|g_i − g_j| ≤ cap_ij`; at most 4 points.
pub fn vertex_value<P>(pts: &[P], c: &[f64], metric: impl Fn(&P, &P) -> f64, lip: f64, sup: f64) -> f64 {
    let n = pts.len();
    assert!(n <= 4, "vertex oracle is limited to 4 points");
    if n <= 1 {
        return 0.0;
    }
    let cap = caps(pts, &metric, lip, sup);
    // pad to 4 points with zero weight and infinite separation (cap 2s)
    let mut full = [[2.0 * sup; 4]; 4];
    for i in 0..n {
        for j in 0..n {
            full[i][j] = cap[i][j];
        }
    }
    let mut cc = [0.0; 4];
    cc[..n].copy_from_slice(c);
    // constraints over unknowns (g1, g2, g3): sign·(g_i − g_j) ≤ cap
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            for sign in [1.0, -1.0] {
                let mut r = [0.0; 3];
                if i > 0 {
                    r[i - 1] += sign;
                }
                r[j - 1] -= sign;
                rows.push((r, full[i][j]));
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            for d in b + 1..rows.len() {
                let Some(x) = solve3([rows[a].0, rows[b].0, rows[d].0], [rows[a].1, rows[b].1, rows[d].1]) else {
                    continue;
                };
                let feasible = rows.iter().all(|(r, rhs)| r[0] * x[0] + r[1] * x[1] + r[2] * x[2] <= rhs + 1e-9);
                if feasible {
                    best = best.max(cc[1] * x[0] + cc[2] * x[1] + cc[3] * x[2]);
                }
            }
        }
    }
    best
}
