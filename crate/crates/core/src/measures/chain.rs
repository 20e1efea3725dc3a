//! Exact solver for the bounded-Lipschitz program on points of a line:
//! `max Σ c_k g_k` subject to `|g_k| ≤ s` and `|g_{k+1} − g_k| ≤ r_k`.
//!
//! Dynamic programming over `V_k(g) = max Σ_{i≤k} c_i g_i` with `g_k = g`.
//! Each `V_k` is concave piecewise linear on `[−s, s]` and is stored as its
//! pieces `(length, slope)`, split into those left of the maximizer (positive
//! slope) and those right of it. A common slope offset makes adding `c·g`
//! constant time; the window maximum inserts a flat piece at the maximizer
//! and trims the ends.

use std::collections::VecDeque;

const TINY: f64 = 1e-15;

#[derive(Debug, Clone, Copy)]
struct Piece {
    len: f64,
    /// Slope before the global offset is added.
    raw: f64,
}

struct Concave {
    half: f64,
    offset: f64,
    /// Pieces with slope > 0, left to right.
    up: VecDeque<Piece>,
    /// Pieces with slope ≤ 0, left to right.
    down: VecDeque<Piece>,
    left_value: f64,
    up_len: f64,
}

impl Concave {
    fn flat(half: f64) -> Self {
        let mut down = VecDeque::new();
        down.push_back(Piece { len: 2.0 * half, raw: 0.0 });
        Self { half, offset: 0.0, up: VecDeque::new(), down, left_value: 0.0, up_len: 0.0 }
    }

    fn slope(&self, p: &Piece) -> f64 {
        p.raw + self.offset
    }

    fn argmax(&self) -> f64 {
        -self.half + self.up_len
    }

    fn max_value(&self) -> f64 {
        self.left_value + self.up.iter().map(|p| p.len * self.slope(p)).sum::<f64>()
    }

    fn add_linear(&mut self, c: f64) {
        self.left_value -= c * self.half;
        self.offset += c;
        if c > 0.0 {
            while let Some(p) = self.down.front().copied() {
                if self.slope(&p) > 0.0 {
                    self.down.pop_front();
                    self.up.push_back(p);
                    self.up_len += p.len;
                } else {
                    break;
                }
            }
        } else if c < 0.0 {
            while let Some(p) = self.up.back().copied() {
                if self.slope(&p) <= 0.0 {
                    self.up.pop_back();
                    self.down.push_front(p);
                    self.up_len -= p.len;
                } else {
                    break;
                }
            }
        }
    }

    /// `V ↦ max_{|g' − g| ≤ r} V(g')`, restricted back to `[−s, s]`.
    fn window_max(&mut self, r: f64) {
        if r <= 0.0 {
            return;
        }
        self.down.push_front(Piece { len: 2.0 * r, raw: -self.offset });
        // the concatenation now spans [−s − r, s + r] starting at the old left value
        let mut cut = r;
        while cut > TINY {
            let from_up = !self.up.is_empty();
            let q = if from_up { self.up.front_mut() } else { self.down.front_mut() }.expect("pieces cover the domain");
            let take = cut.min(q.len);
            let slope = q.raw + self.offset;
            self.left_value += take * slope;
            q.len -= take;
            cut -= take;
            if from_up {
                self.up_len -= take;
            }
            if q.len <= TINY {
                if from_up {
                    self.up.pop_front();
                } else {
                    self.down.pop_front();
                }
            }
        }
        let mut cut = r;
        while cut > TINY {
            let from_down = !self.down.is_empty();
            let q = if from_down { self.down.back_mut() } else { self.up.back_mut() }.expect("pieces cover the domain");
            let take = cut.min(q.len);
            q.len -= take;
            cut -= take;
            if !from_down {
                self.up_len -= take;
            }
            if q.len <= TINY {
                if from_down {
                    self.down.pop_back();
                } else {
                    self.up.pop_back();
                }
            }
        }
        if self.up.is_empty() {
            self.up_len = 0.0;
        }
    }
}

/// Optimal value and an optimal `g` for weights `c` on a chain with gaps `r`.
pub fn solve(c: &[f64], gaps: &[f64], sup_bound: f64) -> (f64, Vec<f64>) {
    let n = c.len();
    assert_eq!(gaps.len() + 1, n.max(1));
    if n == 0 {
        return (0.0, Vec::new());
    }
    let mut v = Concave::flat(sup_bound);
    let mut peaks = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            v.window_max(gaps[k - 1]);
        }
        v.add_linear(c[k]);
        peaks.push(v.argmax().clamp(-sup_bound, sup_bound));
    }
    let mut g = vec![0.0; n];
    g[n - 1] = peaks[n - 1];
    for k in (0..n - 1).rev() {
        let r = gaps[k];
        g[k] = peaks[k].clamp(g[k + 1] - r, g[k + 1] + r).clamp(-sup_bound, sup_bound);
    }
    let value = c.iter().zip(&g).map(|(a, b)| a * b).sum();
    (value, g)
}

/// The DP's own optimal value, kept for cross-checking the backtracked `g`.
pub fn optimal_value(c: &[f64], gaps: &[f64], sup_bound: f64) -> f64 {
    let mut v = Concave::flat(sup_bound);
    for k in 0..c.len() {
        if k > 0 {
            v.window_max(gaps[k - 1]);
        }
        v.add_linear(c[k]);
    }
    v.max_value()
}
