//! Empirical measures on the phase space and on `Ω × X`, the Markov
//! push-forward, and bounded-Lipschitz distances.
//!
//! The bounded-Lipschitz distance between finite measures is the value of
//! `max Σ (μ_k − ν_k) g_k` subject to `|g_k| ≤ s` and
//! `|g_k − g_l| ≤ L·d(p_k, p_l)`. Three exact solvers are used: a chain
//! dynamic program when all support points lie on one line of the phase
//! space, a dense simplex for small supports, and an optimal assignment for
//! uniform measures of equal size (the value equals the transport cost for
//! the ground cost `min(L·d, 2s)`). A two-fiber shortcut certifies the value
//! by matching a coupling cost with an explicit feasible `g`.

pub mod assignment;
pub mod chain;
pub mod simplex;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diophantine::AlmostPeriodSet;
use crate::error::{Error, Result};
use crate::noise::{BrownianPath, NoiseEnsemble};
use crate::systems::{apply_cocycle, SolutionSection, StatePoint, SystemDescriptor};

/// Tolerance on the total weight of a measure.
const WEIGHT_TOL: f64 = 1e-12;
/// Constraint-satisfaction tolerance of an optimizer.
const FEAS_TOL: f64 = 1e-9;
/// Largest active support handed to the dense simplex.
pub const SIMPLEX_LIMIT: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    support: Vec<StatePoint>,
    weights: Vec<f64>,
    /// Master seed of the ensemble that produced the support, if any.
    provenance: Option<u64>,
}

fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

impl EmpiricalMeasure {
    pub fn new(support: Vec<StatePoint>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::Measure(format!(
                "support of size {} with {} weights",
                support.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Measure("weights must be finite and nonnegative".into()));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Measure(format!("weights sum to {total}, not 1")));
        }
        let kind = support[0].kind_name();
        if let Some(p) = support.iter().find(|p| p.kind_name() != kind) {
            return Err(Error::KindMismatch { system: kind.into(), state: p.to_string() });
        }
        Ok(Self { support, weights, provenance: None })
    }

    pub fn uniform(support: Vec<StatePoint>) -> Result<Self> {
        let n = support.len().max(1);
        let w = 1.0 / n as f64;
        Self::new(support, vec![w; n])
    }

    pub fn dirac(x: StatePoint) -> Self {
        Self { support: vec![x], weights: vec![1.0], provenance: None }
    }

    pub fn with_provenance(mut self, master_seed: u64) -> Self {
        self.provenance = Some(master_seed);
        self
    }

    pub fn provenance(&self) -> Option<u64> {
        self.provenance
    }

    pub fn support(&self) -> &[StatePoint] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    /// Identical support points combined, in order of first appearance.
    pub fn merged(&self) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut support = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.support.iter().zip(&self.weights) {
            match index.get(&point_key(p)) {
                Some(&k) => weights[k] += w,
                None => {
                    index.insert(point_key(p), support.len());
                    support.push(*p);
                    weights.push(w);
                }
            }
        }
        Self { support, weights, provenance: self.provenance }
    }

    /// `Σ w_k f(x_k)`; uniform measures use `(Σ f(x_k)) / N`.
    pub fn expectation(&self, f: impl Fn(&StatePoint) -> f64) -> f64 {
        if self.is_uniform() {
            self.support.iter().map(&f).sum::<f64>() / self.len() as f64
        } else {
            self.support.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
        }
    }

    pub fn mean(&self, component: usize) -> f64 {
        self.expectation(|p| p.components()[component])
    }

    pub fn variance(&self, component: usize) -> f64 {
        let m = self.mean(component);
        self.expectation(|p| (p.components()[component] - m).powi(2))
    }

    /// CSV `weight,c1,...` after `#` comment lines (the first names the kind).
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        writeln!(out, "# kind={}", self.support[0].kind_name())?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let names = component_names(&self.support[0]);
        writeln!(out, "weight,{}", names.join(","))?;
        for (p, w) in self.support.iter().zip(&self.weights) {
            let cs: Vec<String> = p.components().iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{w},{}", cs.join(","))?;
        }
        Ok(())
    }

    /// Read a measure written by [`write_csv`](Self::write_csv). Without a
    /// `kind` comment, 1, 2 and 3 components mean real, cylinder and torus.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut kind: Option<String> = None;
        let mut header = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(k) = c.trim().strip_prefix("kind=") {
                    kind = Some(k.trim().to_string());
                }
                continue;
            }
            if header.is_none() {
                header = Some(line.to_string());
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        let width = rows.first().map(|r| r.len()).ok_or_else(|| Error::Parse("measure file has no rows".into()))?;
        let template = match (kind.as_deref(), width) {
            (Some("real"), 2) | (None, 2) => StatePoint::Real(0.0),
            (Some("cylinder"), 3) | (None, 3) => StatePoint::cylinder(0.0, 1.0),
            (Some("torus"), 4) | (None, 4) => StatePoint::torus(1.0, 0.0, 0.0),
            (Some("product"), 4) => StatePoint::product(0.0, 0.0, 0.0),
            (k, w) => return Err(Error::Parse(format!("cannot read kind {k:?} with {w} columns"))),
        };
        let mut support = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != width {
                return Err(Error::Parse("ragged measure file".into()));
            }
            weights.push(r[0]);
            support.push(template.with_components(&r[1..])?);
        }
        Self::new(support, weights)
    }
}

fn component_names(p: &StatePoint) -> Vec<&'static str> {
    match p {
        StatePoint::Real(_) => vec!["x"],
        StatePoint::Cylinder { .. } => vec!["alpha", "rho"],
        StatePoint::Torus { .. } => vec!["r", "alpha", "z"],
        StatePoint::Product { .. } => vec!["x", "y", "z"],
    }
}

fn point_key(p: &StatePoint) -> Vec<u64> {
    let tag = match p {
        StatePoint::Real(_) => 0,
        StatePoint::Cylinder { .. } => 1,
        StatePoint::Torus { .. } => 2,
        StatePoint::Product { .. } => 3,
    };
    std::iter::once(tag).chain(p.components().iter().map(|v| (v + 0.0).to_bits())).collect()
}

/// One point per ω-id: a δ-factorized measure on `Ω × X`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedMeasure {
    pub omega_ids: Vec<u64>,
    pub points: Vec<StatePoint>,
}

impl FactorizedMeasure {
    pub fn new(omega_ids: Vec<u64>, points: Vec<StatePoint>) -> Result<Self> {
        if omega_ids.len() != points.len() || omega_ids.is_empty() {
            return Err(Error::Measure("need exactly one point per omega id".into()));
        }
        Ok(Self { omega_ids, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BLConfig {
    pub sup_bound: f64,
    pub lip_constant: f64,
}

impl BLConfig {
    pub fn new(sup_bound: f64, lip_constant: f64) -> Result<Self> {
        if !(sup_bound > 0.0 && lip_constant > 0.0 && sup_bound.is_finite() && lip_constant.is_finite()) {
            return Err(Error::Config(format!(
                "sup bound and Lipschitz constant must be positive, got ({sup_bound}, {lip_constant})"
            )));
        }
        Ok(Self { sup_bound, lip_constant })
    }

    /// Ground cost `min(L·d, 2s)` whose transport cost equals the distance.
    pub fn capped(&self, d: f64) -> f64 {
        (self.lip_constant * d).min(2.0 * self.sup_bound)
    }
}

impl Default for BLConfig {
    fn default() -> Self {
        Self { sup_bound: 1.0, lip_constant: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Solved,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Let the dispatcher pick.
    Auto,
    Chain,
    Fibers,
    Simplex,
    Assignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BLResult {
    pub distance: f64,
    /// Union support, in the order `g` is reported.
    pub support: Vec<StatePoint>,
    pub optimizer_values: Vec<f64>,
    pub lp_status: LpStatus,
    pub solver: Solver,
}

/// Union support and signed weights `μ_k − ν_k`.
fn signed_union(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> (Vec<StatePoint>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut pts = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (m, sign) in [(mu, 1.0), (nu, -1.0)] {
        for (p, &w) in m.support.iter().zip(&m.weights) {
            let key = point_key(p);
            match index.get(&key) {
                Some(&k) => c[k] += sign * w,
                None => {
                    index.insert(key, pts.len());
                    pts.push(*p);
                    c.push(sign * w);
                }
            }
        }
    }
    (pts, c)
}

/// Index of the single non-circular coordinate of a point kind.
fn line_coordinate(p: &StatePoint) -> usize {
    match p {
        StatePoint::Real(_) | StatePoint::Torus { .. } => 0,
        StatePoint::Cylinder { .. } => 1,
        StatePoint::Product { .. } => 2,
    }
}

/// Whether `a` and `b` agree on every coordinate except the line coordinate.
fn same_fiber(a: &StatePoint, b: &StatePoint) -> bool {
    let j = line_coordinate(a);
    let (ca, cb) = (a.components(), b.components());
    ca.iter().zip(&cb).enumerate().all(|(i, (x, y))| i == j || x.to_bits() == y.to_bits())
}

/// Bounded-Lipschitz distance under the phase metric of the points.
pub fn bl_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cfg: &BLConfig) -> Result<BLResult> {
    bl_distance_using(mu, nu, cfg, Solver::Auto)
}

/// As [`bl_distance`] with an explicit solver choice.
pub fn bl_distance_using(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cfg: &BLConfig, solver: Solver) -> Result<BLResult> {
    if mu.support[0].kind_name() != nu.support[0].kind_name() {
        return Err(Error::KindMismatch {
            system: mu.support[0].kind_name().into(),
            state: nu.support[0].to_string(),
        });
    }
    let metric = |a: &StatePoint, b: &StatePoint| a.distance(b).expect("kinds checked");
    let (pts, c) = signed_union(mu, nu);
    let active: Vec<usize> = (0..pts.len()).filter(|&k| c[k].abs() > 1e-15).collect();
    if active.is_empty() {
        return Ok(BLResult {
            distance: 0.0,
            optimizer_values: vec![0.0; pts.len()],
            support: pts,
            lp_status: LpStatus::Solved,
            solver: Solver::Auto,
        });
    }
    let on_line = active.iter().all(|&k| same_fiber(&pts[active[0]], &pts[k]));
    let choice = match solver {
        Solver::Auto if on_line => Solver::Chain,
        Solver::Auto => {
            if let Some(r) = try_fibers(&pts, &c, &active, cfg, &metric) {
                return Ok(r);
            }
            if active.len() <= SIMPLEX_LIMIT {
                Solver::Simplex
            } else if mu.is_uniform() && nu.is_uniform() && mu.len() == nu.len() {
                Solver::Assignment
            } else {
                return Err(Error::Lp(format!(
                    "support of {} points is too large for the dense simplex and not an assignment instance",
                    active.len()
                )));
            }
        }
        Solver::Chain if !on_line => return Err(Error::Lp("support does not lie on a single line".into())),
        s => s,
    };
    match choice {
        Solver::Chain => solve_chain(pts, &c, &active, cfg),
        Solver::Fibers => try_fibers(&pts, &c, &active, cfg, &metric)
            .ok_or_else(|| Error::Lp("two-fiber bounds do not meet".into())),
        Solver::Simplex => solve_simplex(pts, &c, &active, cfg, &metric),
        Solver::Assignment => solve_assignment(mu, nu, pts, &c, cfg, &metric),
        Solver::Auto => unreachable!(),
    }
}

/// General metric: dense simplex, or assignment for large uniform measures.
pub fn bl_distance_with_metric<M>(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cfg: &BLConfig, metric: M) -> Result<BLResult>
where
    M: Fn(&StatePoint, &StatePoint) -> f64 + Sync,
{
    let (pts, c) = signed_union(mu, nu);
    let active: Vec<usize> = (0..pts.len()).filter(|&k| c[k].abs() > 1e-15).collect();
    if active.len() <= SIMPLEX_LIMIT {
        solve_simplex(pts, &c, &active, cfg, &metric)
    } else if mu.is_uniform() && nu.is_uniform() && mu.len() == nu.len() {
        solve_assignment(mu, nu, pts, &c, cfg, &metric)
    } else {
        Err(Error::Lp(format!("support of {} points is too large", active.len())))
    }
}

/// Extend `g` from the active points to the whole support (McShane, clamped).
fn extend(pts: &[StatePoint], active: &[usize], g_active: &[f64], cfg: &BLConfig, metric: &impl Fn(&StatePoint, &StatePoint) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; pts.len()];
    let mut is_active = vec![usize::MAX; pts.len()];
    for (i, &k) in active.iter().enumerate() {
        is_active[k] = i;
    }
    for (k, p) in pts.iter().enumerate() {
        g[k] = if is_active[k] != usize::MAX {
            g_active[is_active[k]]
        } else {
            active
                .iter()
                .zip(g_active)
                .map(|(&a, &ga)| ga + cfg.lip_constant * metric(p, &pts[a]))
                .fold(f64::INFINITY, f64::min)
                .clamp(-cfg.sup_bound, cfg.sup_bound)
        };
    }
    g
}

fn objective(c: &[f64], g: &[f64]) -> f64 {
    neumaier_sum(c.iter().zip(g).map(|(a, b)| a * b))
}

fn check_box(g: &[f64], cfg: &BLConfig) -> Result<()> {
    match g.iter().find(|v| v.abs() > cfg.sup_bound + FEAS_TOL) {
        Some(v) => Err(Error::Lp(format!("optimizer leaves the box: {v}"))),
        None => Ok(()),
    }
}

fn check_pairs(pts: &[StatePoint], g: &[f64], cfg: &BLConfig, metric: &impl Fn(&StatePoint, &StatePoint) -> f64) -> Result<()> {
    for k in 0..pts.len() {
        for l in k + 1..pts.len() {
            let bound = cfg.lip_constant * metric(&pts[k], &pts[l]);
            if (g[k] - g[l]).abs() > bound + FEAS_TOL {
                return Err(Error::Lp(format!("optimizer violates the Lipschitz bound between {k} and {l}")));
            }
        }
    }
    Ok(())
}

fn solve_chain(pts: Vec<StatePoint>, c: &[f64], active: &[usize], cfg: &BLConfig) -> Result<BLResult> {
    let j = line_coordinate(&pts[active[0]]);
    let coord = |k: usize| pts[k].components()[j];
    // every point (active or not) lies on the line when called from the dispatcher;
    // inactive points are solved with zero weight so g covers the whole support
    let all_on_line = pts.iter().all(|p| same_fiber(&pts[active[0]], p));
    let members: Vec<usize> = if all_on_line { (0..pts.len()).collect() } else { active.to_vec() };
    let mut order = members.clone();
    order.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)));
    let cs: Vec<f64> = order.iter().map(|&k| c[k]).collect();
    let gaps: Vec<f64> = order.windows(2).map(|w| cfg.lip_constant * (coord(w[1]) - coord(w[0]))).collect();
    let (_, g_sorted) = chain::solve(&cs, &gaps, cfg.sup_bound);
    for (w, r) in g_sorted.windows(2).zip(&gaps) {
        if (w[1] - w[0]).abs() > r + FEAS_TOL {
            return Err(Error::Lp("chain optimizer violates a Lipschitz bound".into()));
        }
    }
    let mut g = vec![0.0; pts.len()];
    for (i, &k) in order.iter().enumerate() {
        g[k] = g_sorted[i];
    }
    if !all_on_line {
        let metric = |a: &StatePoint, b: &StatePoint| a.distance(b).expect("same kind");
        let ga: Vec<f64> = active.iter().map(|&k| g[k]).collect();
        g = extend(&pts, active, &ga, cfg, &metric);
    }
    check_box(&g, cfg)?;
    Ok(BLResult {
        distance: objective(c, &g).max(0.0),
        support: pts,
        optimizer_values: g,
        lp_status: LpStatus::Solved,
        solver: Solver::Chain,
    })
}

/// Positive part on one fiber, negative part on another: the value is
/// `m·min(L·δ, 2s)` whenever a monotone coupling attains that cost.
fn try_fibers(
    pts: &[StatePoint],
    c: &[f64],
    active: &[usize],
    cfg: &BLConfig,
    metric: &impl Fn(&StatePoint, &StatePoint) -> f64,
) -> Option<BLResult> {
    let pos: Vec<usize> = active.iter().copied().filter(|&k| c[k] > 0.0).collect();
    let neg: Vec<usize> = active.iter().copied().filter(|&k| c[k] < 0.0).collect();
    let (&a0, &b0) = (pos.first()?, neg.first()?);
    if !pos.iter().all(|&k| same_fiber(&pts[a0], &pts[k])) || !neg.iter().all(|&k| same_fiber(&pts[b0], &pts[k])) {
        return None;
    }
    let j = line_coordinate(&pts[a0]);
    let flatten = |p: &StatePoint| {
        let mut cs = p.components();
        cs[j] = 0.0;
        p.with_components(&cs).ok()
    };
    let delta = metric(&flatten(&pts[a0])?, &flatten(&pts[b0])?);
    if delta == 0.0 {
        return None;
    }
    let level = cfg.capped(delta);
    let mass = neumaier_sum(pos.iter().map(|&k| c[k]));
    let lower = mass * level;

    let coord = |k: usize| pts[k].components()[j];
    let mut ps = pos.clone();
    let mut ns = neg.clone();
    ps.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)));
    ns.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)));
    let (mut i, mut k) = (0, 0);
    let (mut left_p, mut left_n) = (c[ps[0]], -c[ns[0]]);
    let mut upper = 0.0;
    while i < ps.len() && k < ns.len() {
        let m = left_p.min(left_n);
        upper += m * cfg.capped(metric(&pts[ps[i]], &pts[ns[k]]));
        left_p -= m;
        left_n -= m;
        if left_p <= 1e-15 {
            i += 1;
            if i < ps.len() {
                left_p = c[ps[i]];
            }
        }
        if left_n <= 1e-15 {
            k += 1;
            if k < ns.len() {
                left_n = -c[ns[k]];
            }
        }
    }
    if upper > lower + 1e-12 * lower.max(1.0) {
        return None;
    }
    let ga: Vec<f64> = active.iter().map(|&k| if c[k] > 0.0 { level / 2.0 } else { -level / 2.0 }).collect();
    let g = extend(pts, active, &ga, cfg, metric);
    Some(BLResult {
        distance: lower,
        support: pts.to_vec(),
        optimizer_values: g,
        lp_status: LpStatus::Solved,
        solver: Solver::Fibers,
    })
}

fn solve_simplex(
    pts: Vec<StatePoint>,
    c: &[f64],
    active: &[usize],
    cfg: &BLConfig,
    metric: &(impl Fn(&StatePoint, &StatePoint) -> f64 + Sync),
) -> Result<BLResult> {
    let n = active.len();
    let s = cfg.sup_bound;
    let d: Vec<f64> = (0..n * n).map(|q| metric(&pts[active[q / n]], &pts[active[q % n]])).collect();
    let mut rows: Vec<simplex::Row> = (0..n).map(|k| simplex::Row { coefs: vec![(k, 1.0)], rhs: 2.0 * s }).collect();
    for k in 0..n {
        for l in k + 1..n {
            let dkl = d[k * n + l];
            if cfg.lip_constant * dkl >= 2.0 * s {
                continue;
            }
            let redundant = (0..n).any(|m| {
                m != k && m != l && d[k * n + m] > 0.0 && d[m * n + l] > 0.0 && d[k * n + m] + d[m * n + l] <= dkl * (1.0 + 1e-12)
            });
            if redundant {
                continue;
            }
            let b = cfg.lip_constant * dkl;
            rows.push(simplex::Row { coefs: vec![(k, 1.0), (l, -1.0)], rhs: b });
            rows.push(simplex::Row { coefs: vec![(k, -1.0), (l, 1.0)], rhs: b });
        }
    }
    let ca: Vec<f64> = active.iter().map(|&k| c[k]).collect();
    let sol = simplex::maximize(&ca, &rows)?;
    let ga: Vec<f64> = sol.x.iter().map(|u| u - s).collect();
    let sub: Vec<StatePoint> = active.iter().map(|&k| pts[k]).collect();
    check_box(&ga, cfg)?;
    check_pairs(&sub, &ga, cfg, metric)?;
    let g = extend(&pts, active, &ga, cfg, metric);
    Ok(BLResult {
        distance: objective(&ca, &ga).max(0.0),
        support: pts,
        optimizer_values: g,
        lp_status: if sol.degenerate { LpStatus::Degenerate } else { LpStatus::Solved },
        solver: Solver::Simplex,
    })
}

fn solve_assignment(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    pts: Vec<StatePoint>,
    c: &[f64],
    cfg: &BLConfig,
    metric: &(impl Fn(&StatePoint, &StatePoint) -> f64 + Sync),
) -> Result<BLResult> {
    let n = mu.len();
    if nu.len() != n || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Lp("assignment needs uniform measures of equal size".into()));
    }
    let cost: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|q| cfg.capped(metric(&mu.support[q / n], &nu.support[q % n])))
        .collect();
    let a = assignment::solve(n, |i, j| cost[i * n + j]);
    let primal = a.cost / n as f64;
    // c-transform of the column potentials gives a feasible g on the union
    let v = &a.col_potential;
    let phi: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            (0..n)
                .map(|j| cfg.capped(metric(p, &nu.support[j])) - v[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (lo, hi) = phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mid = 0.5 * (lo + hi);
    let g: Vec<f64> = phi.iter().map(|x| (x - mid).clamp(-cfg.sup_bound, cfg.sup_bound)).collect();
    check_box(&g, cfg)?;
    if pts.len() <= 2000 {
        check_pairs(&pts, &g, cfg, metric)?;
    }
    let dual = objective(c, &g);
    let status = if (dual - primal).abs() <= 1e-9 * primal.max(1.0) { LpStatus::Solved } else { LpStatus::Degenerate };
    Ok(BLResult { distance: primal, support: pts, optimizer_values: g, lp_status: status, solver: Solver::Assignment })
}

/// `(1/N) Σ min(2s, L·d(x_i, y_i))` over common ω-ids.
pub fn bl_distance_factorized(mu: &FactorizedMeasure, nu: &FactorizedMeasure, cfg: &BLConfig) -> Result<f64> {
    if mu.omega_ids != nu.omega_ids {
        return Err(Error::MarginalMismatch);
    }
    let n = mu.points.len() as f64;
    let mut total = 0.0;
    for (a, b) in mu.points.iter().zip(&nu.points) {
        total += cfg.capped(a.distance(b)?);
    }
    Ok(total / n)
}

/// Skew-product flow `(ω, x) ↦ (θ_t ω, Φ(t, ω)x)`.
pub fn skew_apply(t: f64, omega: &BrownianPath, x: &StatePoint, desc: &SystemDescriptor) -> Result<(BrownianPath, StatePoint)> {
    Ok((omega.wiener_shift(t)?, apply_cocycle(desc, t, omega, x)?))
}

fn collect<T>(rs: Vec<Result<T>>) -> Result<Vec<T>> {
    rs.into_iter().collect()
}

/// Points `H(t, θ_{-t} ω_i)` of the ensemble.
pub fn lambda_points(section: &SolutionSection, t: f64, ensemble: &NoiseEnsemble) -> Result<Vec<StatePoint>> {
    collect(ensemble.map(|_, p| section.eval(t, &p.wiener_shift(-t)?)))
}

/// `λ_t`: uniform weights on `H(t, θ_{-t} ω_i)`.
pub fn lambda_t(section: &SolutionSection, t: f64, ensemble: &NoiseEnsemble) -> Result<EmpiricalMeasure> {
    Ok(EmpiricalMeasure::uniform(lambda_points(section, t, ensemble)?)?.with_provenance(ensemble.master_seed()))
}

/// `μ_t` with fibers `δ_{H(t, θ_{-t} ω_i)}`.
pub fn mu_t(section: &SolutionSection, t: f64, ensemble: &NoiseEnsemble) -> Result<FactorizedMeasure> {
    FactorizedMeasure::new(ensemble.seeds().to_vec(), lambda_points(section, t, ensemble)?)
}

/// `(1/N) Σ f(θ_t ω_i, H(t, ω_i))`.
pub fn mu_eval<F>(f: F, section: &SolutionSection, t: f64, ensemble: &NoiseEnsemble) -> Result<f64>
where
    F: Fn(&BrownianPath, &StatePoint) -> f64 + Sync + Send,
{
    let vals = collect(ensemble.map(|_, p| -> Result<f64> {
        let x = section.eval(t, p)?;
        Ok(f(&p.wiener_shift(t)?, &x))
    }))?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// `P_t* μ` with product weights over the support and the fresh paths.
pub fn push_forward_kernel(desc: &SystemDescriptor, t: f64, mu: &EmpiricalMeasure, fresh: &NoiseEnsemble) -> Result<EmpiricalMeasure> {
    if mu.provenance == Some(fresh.master_seed()) {
        return Err(Error::Independence(fresh.master_seed()));
    }
    if t == 0.0 {
        return Ok(mu.merged());
    }
    let m = fresh.len() as f64;
    let rows = collect(fresh.map(|_, p| -> Result<Vec<(StatePoint, f64)>> {
        mu.support
            .iter()
            .zip(&mu.weights)
            .map(|(x, w)| Ok((apply_cocycle(desc, t, p, x)?, w / m)))
            .collect()
    }))?;
    let (support, weights): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    EmpiricalMeasure::new(support, weights)
}

/// `P_t* μ` sampled with one fresh path per support point (`x_i ↦ Φ(t, ω'_i)x_i`).
pub fn push_forward_paired(desc: &SystemDescriptor, t: f64, mu: &EmpiricalMeasure, fresh: &NoiseEnsemble) -> Result<EmpiricalMeasure> {
    if mu.provenance == Some(fresh.master_seed()) {
        return Err(Error::Independence(fresh.master_seed()));
    }
    if fresh.len() != mu.len() {
        return Err(Error::Measure(format!(
            "paired push-forward needs {} fresh paths, got {}",
            mu.len(),
            fresh.len()
        )));
    }
    let support = collect(fresh.map(|i, p| apply_cocycle(desc, t, p, &mu.support[i])))?;
    EmpiricalMeasure::new(support, mu.weights.clone())
}

/// Bootstrap percentile band of a two-sample statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// 2.5% and 97.5% quantiles over `resamples` seeded resamples. Equal-size
/// samples are resampled jointly by index, others independently.
pub fn bootstrap_band<F>(a: &[StatePoint], b: &[StatePoint], stat: F, resamples: usize, seed: u64) -> Result<Band>
where
    F: Fn(&[StatePoint], &[StatePoint]) -> Result<f64> + Sync,
{
    if a.is_empty() || b.is_empty() || resamples < 2 {
        return Err(Error::Config("bootstrap needs non-empty samples and at least 2 resamples".into()));
    }
    let estimate = stat(a, b)?;
    let joint = a.len() == b.len();
    let mut values = collect(
        (0..resamples)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64 + 1);
                let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
                let ib: Vec<usize> = if joint { ia.clone() } else { (0..b.len()).map(|_| rng.random_range(0..b.len())).collect() };
                let ra: Vec<StatePoint> = ia.iter().map(|&i| a[i]).collect();
                let rb: Vec<StatePoint> = ib.iter().map(|&i| b[i]).collect();
                stat(&ra, &rb)
            })
            .collect(),
    )?;
    values.sort_by(f64::total_cmp);
    Ok(Band { estimate, lo: quantile(&values, 0.025), hi: quantile(&values, 0.975), resamples })
}

/// `ρ₁` between the uniform measures on two samples.
pub fn rho_uniform(a: &[StatePoint], b: &[StatePoint], cfg: &BLConfig) -> Result<f64> {
    Ok(bl_distance(&EmpiricalMeasure::uniform(a.to_vec())?, &EmpiricalMeasure::uniform(b.to_vec())?, cfg)?.distance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApMeasureConfig {
    pub epsilon: f64,
    /// Push-forward times `t`.
    pub times: Vec<f64>,
    /// Base times `s`.
    pub shifts: Vec<f64>,
    /// `(sup bound, C₂)` on the phase space.
    pub bl_x: BLConfig,
    /// `(sup bound, C₁)` on `Ω × X`.
    pub bl_omega: BLConfig,
    pub resamples: usize,
    pub bootstrap_seed: u64,
}

impl ApMeasureConfig {
    pub fn new(epsilon: f64, times: Vec<f64>, shifts: Vec<f64>) -> Self {
        Self {
            epsilon,
            times,
            shifts,
            bl_x: BLConfig::default(),
            bl_omega: BLConfig::default(),
            resamples: 200,
            bootstrap_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushForwardRow {
    pub t: f64,
    pub s: f64,
    pub rho: f64,
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftRow {
    pub s: f64,
    pub tau: f64,
    pub rho: f64,
    pub bound: f64,
    /// Bootstrap band; absent for the factorized family.
    pub band: Option<Band>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApMeasureCertificate {
    pub epsilon: f64,
    pub push_forward: Vec<PushForwardRow>,
    pub lambda_rows: Vec<ShiftRow>,
    pub omega_rows: Vec<ShiftRow>,
    pub passed: bool,
}

impl ApMeasureCertificate {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "passed: {}", self.passed);
        let _ = writeln!(s, "epsilon: {}", self.epsilon);
        let max = |rows: &[ShiftRow]| rows.iter().map(|r| r.rho).fold(0.0, f64::max);
        let pf = self.push_forward.iter().map(|r| r.rho).fold(0.0, f64::max);
        let _ = writeln!(s, "push_forward_max_rho: {pf}");
        let _ = writeln!(s, "lambda_max_rho: {}", max(&self.lambda_rows));
        let _ = writeln!(s, "omega_max_rho: {}", max(&self.omega_rows));
        let _ = writeln!(s, "lambda_failures: {}", self.lambda_rows.iter().filter(|r| !r.ok).count());
        let _ = writeln!(s, "omega_failures: {}", self.omega_rows.iter().filter(|r| !r.ok).count());
        s
    }

    /// CSV rows `family,t,s,tau,rho,lo,hi,bound,ok`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,t,s,tau,rho,lo,hi,bound,ok\n");
        for r in &self.push_forward {
            let _ = writeln!(s, "push_forward,{},{},,{},{},{},,", r.t, r.s, r.rho, r.band.lo, r.band.hi);
        }
        for (name, rows) in [("lambda", &self.lambda_rows), ("omega", &self.omega_rows)] {
            for r in rows {
                let (lo, hi) = r.band.map(|b| (b.lo.to_string(), b.hi.to_string())).unwrap_or_default();
                let _ = writeln!(s, "{name},,{},{},{},{lo},{hi},{},{}", r.s, r.tau, r.rho, r.bound, r.ok);
            }
        }
        s
    }
}

/// Push-forward identity, `ρ₁(λ_{s+τ}, λ_s)` against `C₂ε` plus the bootstrap
/// band width, and `ρ(μ_{s+τ}, μ_s)` against `C₁ε`.
pub fn check_ap_measure(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    tau_set: &AlmostPeriodSet,
    ensemble: &NoiseEnsemble,
    fresh: &NoiseEnsemble,
    cfg: &ApMeasureConfig,
) -> Result<ApMeasureCertificate> {
    if tau_set.is_empty() {
        return Err(Error::EmptyTauSet);
    }
    let mut cache: HashMap<u64, Vec<StatePoint>> = HashMap::new();
    let mut points = |t: f64| -> Result<Vec<StatePoint>> {
        if let Some(v) = cache.get(&t.to_bits()) {
            return Ok(v.clone());
        }
        let v = lambda_points(section, t, ensemble)?;
        cache.insert(t.to_bits(), v.clone());
        Ok(v)
    };
    let rho = |a: &[StatePoint], b: &[StatePoint]| rho_uniform(a, b, &cfg.bl_x);

    let mut push_forward = Vec::new();
    for &s in &cfg.shifts {
        let lam_s = EmpiricalMeasure::uniform(points(s)?)?.with_provenance(ensemble.master_seed());
        for &t in &cfg.times {
            let pushed = push_forward_paired(desc, t, &lam_s, fresh)?;
            let target = points(t + s)?;
            let band = bootstrap_band(pushed.support(), &target, rho, cfg.resamples, cfg.bootstrap_seed)?;
            push_forward.push(PushForwardRow { t, s, rho: band.estimate, band });
        }
    }

    let ids = ensemble.seeds().to_vec();
    let mut lambda_rows = Vec::new();
    let mut omega_rows = Vec::new();
    for &s in &cfg.shifts {
        let base = points(s)?;
        let mu_s = FactorizedMeasure::new(ids.clone(), base.clone())?;
        for &tau in &tau_set.taus {
            let moved = points(s + tau)?;
            let band = bootstrap_band(&moved, &base, rho, cfg.resamples, cfg.bootstrap_seed)?;
            let bound = cfg.bl_x.lip_constant * cfg.epsilon + band.width();
            lambda_rows.push(ShiftRow { s, tau, rho: band.estimate, bound, band: Some(band), ok: band.estimate <= bound });

            let mu_moved = FactorizedMeasure::new(ids.clone(), moved)?;
            let r = bl_distance_factorized(&mu_moved, &mu_s, &cfg.bl_omega)?;
            let bound = cfg.bl_omega.lip_constant * cfg.epsilon;
            omega_rows.push(ShiftRow { s, tau, rho: r, bound, band: None, ok: r <= bound });
        }
    }
    let passed = lambda_rows.iter().chain(&omega_rows).all(|r| r.ok);
    Ok(ApMeasureCertificate { epsilon: cfg.epsilon, push_forward, lambda_rows, omega_rows, passed })
}
