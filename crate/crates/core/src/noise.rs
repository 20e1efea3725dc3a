//! Two-sided Brownian paths on a dyadic time grid, the Wiener shift, and the
//! path integrals the closed-form cocycles are built from.
//!
//! A [`BrownianPath`] never copies its samples when shifted. It keeps the
//! originally sampled array and an integer origin index, so that
//! `B_s(θ_t ω) = B_{t+s}(ω) − B_t(ω)` is evaluated directly against the
//! original samples. Composed shifts therefore agree bitwise with a single
//! shift by the summed time, and increments `B(s+h) − B(s)` are identical
//! before and after a shift.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest dyadic refinement level accepted for a grid.
const MAX_LEVEL: u32 = 40;
/// Relative slack used when deciding that a time is a grid multiple.
const GRID_SLACK: f64 = 1e-9;
/// First truncation horizon (time units) of the pullback doubling.
const PULLBACK_START: f64 = 1.0;
/// Horizon increment once doubling has reached it.
const PULLBACK_CHUNK: f64 = 4.0;

/// Uniform time grid `{k·h : |k·h| ≤ T}` with `h = base · 2^-level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    base: f64,
    level: u32,
    step: f64,
    half_steps: usize,
}

impl TimeGrid {
    /// Grid with base period 1; `h` must be a power of two.
    pub fn new(h: f64, half_range: f64) -> Result<Self> {
        Self::with_base(1.0, h, half_range)
    }

    /// Grid whose step is a dyadic fraction of `base` (for instance 2π).
    pub fn with_base(base: f64, h: f64, half_range: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::Config(format!("base period must be positive, got {base}")));
        }
        let ratio = base / h;
        let level = ratio.log2().round();
        if !(0.0..=MAX_LEVEL as f64).contains(&level) || base * (-level).exp2() != h {
            return Err(Error::Config(format!(
                "grid step {h} is not a dyadic fraction base·2^-k of base {base}"
            )));
        }
        Self::dyadic(base, level as u32, half_range)
    }

    /// Grid with `h = base · 2^-level` and half range `T`.
    pub fn dyadic(base: f64, level: u32, half_range: f64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Config(format!("grid level {level} exceeds {MAX_LEVEL}")));
        }
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::Config(format!("base period must be positive, got {base}")));
        }
        let step = base * (-(level as f64)).exp2();
        if !(half_range.is_finite() && half_range > 0.0) {
            return Err(Error::Config(format!("half range must be positive, got {half_range}")));
        }
        let n = half_range / step;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > GRID_SLACK * rounded.max(1.0) {
            return Err(Error::Config(format!(
                "half range {half_range} is not a positive multiple of the step {step}"
            )));
        }
        Ok(Self { base, level, step, half_steps: rounded as usize })
    }

    /// Default grid for the cylinder example: base 2π.
    pub fn circle(level: u32, half_range: f64) -> Result<Self> {
        let step = TAU * (-(level as f64)).exp2();
        let half = (half_range / step).ceil() * step;
        Self::dyadic(TAU, level, half)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn half_steps(&self) -> usize {
        self.half_steps
    }

    pub fn half_range(&self) -> f64 {
        self.half_steps as f64 * self.step
    }

    /// Grid index of `t`, if `t` is a grid multiple.
    pub fn index_of(&self, t: f64) -> Option<i64> {
        if !t.is_finite() {
            return None;
        }
        let x = t / self.step;
        let k = x.round();
        ((x - k).abs() <= GRID_SLACK * k.abs().max(1.0)).then_some(k as i64)
    }

    pub fn time_of(&self, k: i64) -> f64 {
        k as f64 * self.step
    }

    /// Same base and range, step multiplied by `2^levels`.
    pub fn coarsened(&self, levels: u32) -> Result<Self> {
        if levels > self.level {
            return Err(Error::Config(format!(
                "cannot coarsen level {} by {levels}",
                self.level
            )));
        }
        let coarse = self.step * (levels as f64).exp2();
        let half = (self.half_range() / coarse).floor() * coarse;
        Self::dyadic(self.base, self.level - levels, half)
    }

    /// Human-readable exact description of the step.
    pub fn describe_step(&self) -> String {
        if self.base == 1.0 {
            format!("{} (2^-{})", exact_dyadic_decimal(self.level), self.level)
        } else if self.base == TAU {
            format!("{} (2pi*2^-{})", self.step, self.level)
        } else {
            format!("{} ({}*2^-{})", self.step, self.base, self.level)
        }
    }
}

/// Exact decimal expansion of `2^-k`.
fn exact_dyadic_decimal(k: u32) -> String {
    if k == 0 {
        return "1".to_string();
    }
    if k > 55 {
        return format!("{}", (-(k as f64)).exp2());
    }
    // 2^-k = 5^k / 10^k
    let digits = 5u128.pow(k).to_string();
    let mut s = String::from("0.");
    for _ in digits.len()..k as usize {
        s.push('0');
    }
    s.push_str(&digits);
    s
}

/// How a shift by a non-grid time is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftMode {
    /// Non-grid shifts are rejected.
    #[default]
    Strict,
    /// Non-grid shifts rebuild the path by linear interpolation and flag it.
    Permissive,
}

/// A sampled two-sided Brownian trajectory, possibly Wiener-shifted.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    grid: TimeGrid,
    samples: Arc<[f64]>,
    /// Grid index of `samples[0]` in sample coordinates.
    first: i64,
    /// Sample-coordinate index of the current origin.
    origin: i64,
    seed: u64,
    origin_offset: f64,
    interpolated: bool,
}

impl PartialEq for BrownianPath {
    fn eq(&self, other: &Self) -> bool {
        let (lo, hi) = self.index_range();
        (lo, hi) == other.index_range()
            && self.grid == other.grid
            && (lo..=hi).all(|k| self.value_at(k).to_bits() == other.value_at(k).to_bits())
    }
}

impl BrownianPath {
    /// Sample a path on `grid` from `seed`.
    ///
    /// The forward increments come from ChaCha stream 0 and the backward ones
    /// from stream 1 of the same seed; `B(0) = 0`.
    pub fn sample(seed: u64, grid: TimeGrid) -> Self {
        let n = grid.half_steps();
        let sd = grid.step().sqrt();
        let mut samples = vec![0.0; 2 * n + 1];

        let mut fwd = ChaCha8Rng::seed_from_u64(seed);
        fwd.set_stream(0);
        let mut acc = 0.0;
        for v in samples[n + 1..].iter_mut() {
            let z: f64 = StandardNormal.sample(&mut fwd);
            acc += sd * z;
            *v = acc;
        }

        let mut bwd = ChaCha8Rng::seed_from_u64(seed);
        bwd.set_stream(1);
        let mut acc = 0.0;
        for v in samples[..n].iter_mut().rev() {
            let z: f64 = StandardNormal.sample(&mut bwd);
            acc += sd * z;
            *v = acc;
        }

        Self::from_parts(grid, samples, -(n as i64), seed)
    }

    /// The path that is identically zero.
    pub fn zero(grid: TimeGrid) -> Self {
        let n = grid.half_steps();
        Self::from_parts(grid, vec![0.0; 2 * n + 1], -(n as i64), 0)
    }

    /// Build a path from explicit values on `-T..=T`; `values[n]` must be 0.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>, seed: u64) -> Result<Self> {
        let n = grid.half_steps();
        if values.len() != 2 * n + 1 {
            return Err(Error::Config(format!(
                "expected {} values for the grid, got {}",
                2 * n + 1,
                values.len()
            )));
        }
        if values[n] != 0.0 {
            return Err(Error::Config("path value at time 0 must be 0".into()));
        }
        Ok(Self::from_parts(grid, values, -(n as i64), seed))
    }

    fn from_parts(grid: TimeGrid, samples: Vec<f64>, first: i64, seed: u64) -> Self {
        Self {
            grid,
            samples: samples.into(),
            first,
            origin: 0,
            seed,
            origin_offset: 0.0,
            interpolated: false,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Accumulated shift time.
    pub fn origin_offset(&self) -> f64 {
        self.origin_offset
    }

    /// Whether some shift in this path's history needed interpolation.
    pub fn is_interpolated(&self) -> bool {
        self.interpolated
    }

    /// Inclusive range of local grid indices.
    pub fn index_range(&self) -> (i64, i64) {
        let lo = self.first - self.origin;
        (lo, lo + self.samples.len() as i64 - 1)
    }

    /// Inclusive time domain.
    pub fn domain(&self) -> (f64, f64) {
        let (lo, hi) = self.index_range();
        (self.grid.time_of(lo), self.grid.time_of(hi))
    }

    fn raw(&self, sample_index: i64) -> f64 {
        self.samples[(sample_index - self.first) as usize]
    }

    /// Value at local grid index `k`. Panics when out of range.
    #[inline]
    pub fn value_at(&self, k: i64) -> f64 {
        self.raw(k + self.origin) - self.raw(self.origin)
    }

    /// `B((k+1)h) − B(kh)` at local index `k`; invariant under grid shifts.
    #[inline]
    pub fn increment(&self, k: i64) -> f64 {
        let j = k + self.origin;
        self.raw(j + 1) - self.raw(j)
    }

    fn check_index(&self, k: i64) -> Result<()> {
        let (lo, hi) = self.index_range();
        if k < lo || k > hi {
            let (a, b) = self.domain();
            return Err(Error::OutOfDomain { t: self.grid.time_of(k), lo: a, hi: b });
        }
        Ok(())
    }

    /// Grid index of `t`, checked against the domain.
    pub fn grid_index(&self, t: f64) -> Result<i64> {
        let k = self.grid.index_of(t).ok_or(Error::NotOnGrid { t, h: self.step() })?;
        self.check_index(k)?;
        Ok(k)
    }

    /// `B(s)`: exact on grid points, linear interpolation in between.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        let (a, b) = self.domain();
        if !(s >= a && s <= b) {
            return Err(Error::OutOfDomain { t: s, lo: a, hi: b });
        }
        if let Some(k) = self.grid.index_of(s) {
            self.check_index(k)?;
            return Ok(self.value_at(k));
        }
        let x = s / self.step();
        let k = x.floor() as i64;
        let w = x - k as f64;
        let (lo, hi) = self.index_range();
        let k = k.clamp(lo, hi - 1);
        Ok((1.0 - w) * self.value_at(k) + w * self.value_at(k + 1))
    }

    /// The Wiener shift `θ_t`, strict about grid multiples.
    pub fn wiener_shift(&self, t: f64) -> Result<Self> {
        self.shift_with(t, ShiftMode::Strict)
    }

    /// The Wiener shift with an explicit policy for non-grid `t`.
    pub fn shift_with(&self, t: f64, mode: ShiftMode) -> Result<Self> {
        match self.grid.index_of(t) {
            Some(j) => self.shift_index(j),
            None if mode == ShiftMode::Permissive => self.shift_interpolated(t),
            None => Err(Error::NotOnGrid { t, h: self.step() }),
        }
    }

    /// Shift by `j` grid steps.
    pub fn shift_index(&self, j: i64) -> Result<Self> {
        self.check_index(j)?;
        let mut out = self.clone();
        out.origin += j;
        out.origin_offset = self.origin_offset + self.grid.time_of(j);
        Ok(out)
    }

    fn shift_interpolated(&self, t: f64) -> Result<Self> {
        let (a, b) = self.domain();
        let h = self.step();
        let base = self.evaluate(t)?;
        let lo = ((a - t) / h).ceil() as i64;
        let hi = ((b - t) / h).floor() as i64;
        if lo > 0 || hi < 0 {
            return Err(Error::OutOfDomain { t, lo: a, hi: b });
        }
        let samples = (lo..=hi)
            .map(|k| {
                let s = (t + k as f64 * h).clamp(a, b);
                self.evaluate(s).map(|v| v - base)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::from_parts(self.grid, samples, lo, self.seed);
        out.origin_offset = self.origin_offset + t;
        out.interpolated = true;
        Ok(out)
    }

    /// Subsample every `2^levels`-th grid point (same path, coarser grid).
    pub fn coarsen(&self, levels: u32) -> Result<Self> {
        let grid = self.grid.coarsened(levels)?;
        let f = 1i64 << levels;
        let (lo, hi) = self.index_range();
        let clo = lo.div_euclid(f) + i64::from(lo.rem_euclid(f) != 0);
        let chi = hi.div_euclid(f);
        let samples: Vec<f64> = (clo..=chi).map(|j| self.value_at(j * f)).collect();
        let mut out = Self::from_parts(grid, samples, clo, self.seed);
        out.origin_offset = self.origin_offset;
        out.interpolated = self.interpolated;
        Ok(out)
    }

    /// Values over the whole domain as `(time, value)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (lo, hi) = self.index_range();
        (lo..=hi).map(move |k| (self.grid.time_of(k), self.value_at(k)))
    }

    /// Write the path as CSV `time,value` with a header comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# seed={} h={} T={} base={} level={} origin_offset={} interpolated={}",
            self.seed,
            self.grid.describe_step(),
            self.grid.half_range(),
            self.grid.base(),
            self.grid.level(),
            self.origin_offset,
            self.interpolated
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "value"])?;
        for (t, v) in self.points() {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a path written by [`BrownianPath::write_csv`] (unshifted paths only).
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("missing `{key}` in path header")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse::<f64>().map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let seed: u64 = field("seed")?.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let level = num("level")? as u32;
        let grid = TimeGrid::dyadic(num("base")?, level, num("T")?)?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(1)
                .ok_or_else(|| Error::Parse("short path row".into()))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("path value: {e}")))?;
            values.push(v);
        }
        Self::from_values(grid, values, seed)
    }
}

/// Left-endpoint Riemann–Stieltjes sum `Σ f(s_k)(B(s_{k+1}) − B(s_k))` over
/// the grid points of `[a, b)`, summed left to right.
pub fn ito_integral<F: Fn(f64) -> f64>(path: &BrownianPath, integrand: F, a: f64, b: f64) -> Result<f64> {
    let ia = path.grid_index(a)?;
    let ib = path.grid_index(b)?;
    if ib < ia {
        return Err(Error::Config(format!("integration bounds reversed: [{a}, {b}]")));
    }
    let h = path.step();
    let mut sum = 0.0;
    for k in ia..ib {
        sum += integrand(k as f64 * h) * path.increment(k);
    }
    Ok(sum)
}

/// Trapezoid rule for `∫_a^b exp(rate·s + coef·B(s)) ds` on the grid.
pub fn exp_integral(path: &BrownianPath, rate: f64, coef: f64, a: f64, b: f64) -> Result<f64> {
    let ia = path.grid_index(a)?;
    let ib = path.grid_index(b)?;
    if ib < ia {
        return Err(Error::Config(format!("integration bounds reversed: [{a}, {b}]")));
    }
    if ia == ib {
        return Ok(0.0);
    }
    let h = path.step();
    let f = |k: i64| (rate * k as f64 * h + coef * path.value_at(k)).exp();
    let mut inner = 0.0;
    for k in ia + 1..ib {
        inner += f(k);
    }
    Ok(h * (0.5 * f(ia) + inner + 0.5 * f(ib)))
}

/// Truncation horizons (in steps): doubling up to [`PULLBACK_CHUNK`], then
/// growing by one chunk at a time, and finally the whole available past.
fn horizons(path: &BrownianPath) -> Vec<i64> {
    let avail = -path.index_range().0;
    let chunk = (PULLBACK_CHUNK / path.step()).ceil().max(1.0) as i64;
    let mut k = (PULLBACK_START / path.step()).ceil().max(1.0) as i64;
    let mut out = Vec::new();
    while k < avail {
        out.push(k);
        k = if k < chunk { 2 * k } else { k + chunk };
    }
    if avail > 0 {
        out.push(avail);
    }
    out
}

/// Adaptive pullback: `terms(k)` is the contribution of grid index `-k`,
/// `finish(sum, k)` turns the running sum into the value for horizon `k`.
fn pullback<T, F>(path: &BrownianPath, tol: f64, scale_floor: f64, term: T, finish: F) -> Result<f64>
where
    T: Fn(i64) -> f64,
    F: Fn(f64, i64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::Config(format!("pullback tolerance must be positive, got {tol}")));
    }
    let mut sum = 0.0;
    let mut done = 0i64;
    let mut previous = f64::NAN;
    let mut last = f64::NAN;
    for k in horizons(path) {
        for j in done + 1..=k {
            sum += term(j);
        }
        done = k;
        let value = finish(sum, k);
        if last.is_finite() && (value - last).abs() <= tol * value.abs().max(scale_floor) {
            return Ok(value);
        }
        previous = last;
        last = value;
    }
    Err(Error::DomainExhausted { last, previous })
}

/// `∫_{-∞}^0 exp(a·s + b·B(s)) ds` by the trapezoid rule, truncated at a
/// horizon that is doubled until the relative change drops below `tol`.
pub fn pullback_exp_integral(path: &BrownianPath, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Config(format!("decay rate must be positive, got {a}")));
    }
    let h = path.step();
    let f = |k: i64| (a * k as f64 * h + b * path.value_at(k)).exp();
    let f0 = f(0);
    // running sum holds Σ_{j=1..k} f(-j); the trapezoid halves the far end
    pullback(path, tol, 0.0, |j| f(-j), |sum, k| h * (0.5 * f0 + sum - 0.5 * f(-k)))
}

/// `∫_{-∞}^0 exp(decay·s) dB_s` as a left-endpoint sum with the same
/// adaptive truncation. The convergence test is relative to `max(|I|, 1)`.
pub fn pullback_ito_integral(path: &BrownianPath, decay: f64, tol: f64) -> Result<f64> {
    if !(decay > 0.0) {
        return Err(Error::Config(format!("decay must be positive, got {decay}")));
    }
    let h = path.step();
    pullback(
        path,
        tol,
        1.0,
        |j| (-decay * j as f64 * h).exp() * path.increment(-j),
        |sum, _| sum,
    )
}

/// A reproducible collection of independent paths, generated on demand.
#[derive(Debug, Clone)]
pub struct NoiseEnsemble {
    grid: TimeGrid,
    master_seed: u64,
    seeds: Vec<u64>,
    shift: i64,
}

impl NoiseEnsemble {
    /// `n` paths whose seeds are drawn from a ChaCha stream keyed by `master_seed`.
    pub fn new(master_seed: u64, n: usize, grid: TimeGrid) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        let mut seen = HashSet::with_capacity(n);
        let mut seeds = Vec::with_capacity(n);
        while seeds.len() < n {
            let s = rng.next_u64();
            if seen.insert(s) {
                seeds.push(s);
            }
        }
        Ok(Self { grid, master_seed, seeds, shift: 0 })
    }

    /// Ensemble over explicitly given path seeds.
    pub fn from_seeds(master_seed: u64, seeds: Vec<u64>, grid: TimeGrid) -> Result<Self> {
        let distinct: HashSet<_> = seeds.iter().collect();
        if seeds.is_empty() || distinct.len() != seeds.len() {
            return Err(Error::Config("ensemble seeds must be non-empty and distinct".into()));
        }
        Ok(Self { grid, master_seed, seeds, shift: 0 })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Every path of this ensemble shifted by `θ_t`.
    pub fn shifted(&self, t: f64) -> Result<Self> {
        let j = self.grid.index_of(t).ok_or(Error::NotOnGrid { t, h: self.grid.step() })?;
        let mut out = self.clone();
        out.shift += j;
        Ok(out)
    }

    /// First `n` paths.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.seeds.truncate(n.max(1));
        out
    }

    pub fn path(&self, i: usize) -> BrownianPath {
        let p = BrownianPath::sample(self.seeds[i], self.grid);
        if self.shift == 0 {
            p
        } else {
            p.shift_index(self.shift).expect("ensemble shift inside the grid")
        }
    }

    /// Apply `f` to every path in parallel; results keep ensemble order.
    pub fn map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &BrownianPath) -> T + Sync + Send,
    {
        (0..self.len()).into_par_iter().map(|i| f(i, &self.path(i))).collect()
    }

    /// Write one CSV per path plus `manifest.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        let _ = writeln!(
            manifest,
            "# master_seed={} n={} h={} T={}",
            self.master_seed,
            self.len(),
            self.grid.describe_step(),
            self.grid.half_range()
        );
        manifest.push_str("index,seed,file\n");
        for i in 0..self.len() {
            let name = format!("path_{i:05}.csv");
            let file = std::fs::File::create(dir.join(&name))?;
            self.path(i).write_csv(std::io::BufWriter::new(file))?;
            let _ = writeln!(manifest, "{i},{},{name}", self.seeds[i]);
        }
        std::fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0 / 64.0, 8.0).unwrap()
    }

    #[test]
    fn grid_rejects_bad_steps() {
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(-0.5, 1.0).is_err());
        assert!(TimeGrid::new(0.3, 3.0).is_err());
        assert!(TimeGrid::new(0.25, 0.3).is_err());
        assert!(TimeGrid::new(0.25, 1.0).is_ok());
    }

    #[test]
    fn circle_grid_makes_two_pi_exact() {
        let g = TimeGrid::circle(10, 20.0).unwrap();
        assert_eq!(g.index_of(TAU), Some(1024));
        assert_eq!(g.index_of(3.0 * TAU), Some(3072));
        assert_eq!(g.index_of(1.0), None);
    }

    #[test]
    fn exact_decimal_of_dyadic_steps() {
        assert_eq!(exact_dyadic_decimal(10), "0.0009765625");
        assert_eq!(exact_dyadic_decimal(1), "0.5");
        assert_eq!(exact_dyadic_decimal(30), "0.000000000931322574615478515625");
    }

    #[test]
    fn origin_is_zero_and_sampling_is_deterministic() {
        let a = BrownianPath::sample(7, grid());
        let b = BrownianPath::sample(7, grid());
        assert_eq!(a.value_at(0), 0.0);
        assert_eq!(a, b);
        assert_ne!(a, BrownianPath::sample(8, grid()));
    }

    #[test]
    fn evaluate_interpolates_linearly() {
        let p = BrownianPath::sample(3, grid());
        let h = p.step();
        assert_eq!(p.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(p.evaluate(5.0 * h).unwrap(), p.value_at(5));
        let (a, b) = (p.value_at(5), p.value_at(6));
        assert!((p.evaluate(5.5 * h).unwrap() - (a + b) / 2.0).abs() < 1e-15);
        assert!(matches!(p.evaluate(100.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn shift_identity_and_definition() {
        let p = BrownianPath::sample(11, grid());
        assert_eq!(p.wiener_shift(0.0).unwrap(), p);
        let t = 1.25;
        let q = p.wiener_shift(t).unwrap();
        let j = p.grid().index_of(t).unwrap();
        let (lo, hi) = q.index_range();
        for k in lo..=hi {
            assert_eq!(q.value_at(k).to_bits(), (p.value_at(k + j) - p.value_at(j)).to_bits());
        }
        assert_eq!(q.origin_offset(), t);
        assert_eq!(q.domain(), (-8.0 - t, 8.0 - t));
    }

    #[test]
    fn non_grid_shift_policy() {
        let p = BrownianPath::sample(5, grid());
        assert!(matches!(p.wiener_shift(0.01), Err(Error::NotOnGrid { .. })));
        let q = p.shift_with(0.01, ShiftMode::Permissive).unwrap();
        assert!(q.is_interpolated());
        assert_eq!(q.evaluate(0.0).unwrap(), 0.0);
        let expect = p.evaluate(0.01 + 0.5).unwrap() - p.evaluate(0.01).unwrap();
        assert!((q.evaluate(0.5).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn increments_survive_shifts_bitwise() {
        let p = BrownianPath::sample(2, grid());
        let q = p.wiener_shift(0.5).unwrap();
        for k in -10..10 {
            assert_eq!(q.increment(k).to_bits(), p.increment(k + 32).to_bits());
        }
    }

    #[test]
    fn ito_integral_of_one_telescopes() {
        let p = BrownianPath::sample(9, grid());
        let v = ito_integral(&p, |_| 1.0, 0.0, 2.0).unwrap();
        assert!((v - p.evaluate(2.0).unwrap()).abs() < 1e-13);
        let z = BrownianPath::zero(grid());
        assert_eq!(ito_integral(&z, |s| s.exp(), -1.0, 2.0).unwrap(), 0.0);
        assert!(ito_integral(&p, |_| 1.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn ito_integral_matches_integration_by_parts() {
        // e^b B(b) − e^a B(a) − Σ e^{s_k} B(s_{k+1}) (e^h − 1) e^{...}: O(h) agreement
        for seed in 0..5 {
            let p = BrownianPath::sample(seed, grid());
            let (a, b) = (-1.0, 1.5);
            let h = p.step();
            let direct = ito_integral(&p, f64::exp, a, b).unwrap();
            let (ia, ib) = (p.grid_index(a).unwrap(), p.grid_index(b).unwrap());
            let mut riemann = 0.0;
            for k in ia..ib {
                riemann += (k as f64 * h).exp() * p.value_at(k) * h;
            }
            let parts = b.exp() * p.evaluate(b).unwrap() - a.exp() * p.evaluate(a).unwrap() - riemann;
            assert!((direct - parts).abs() < 5.0 * h, "seed {seed}: {direct} vs {parts}");
        }
    }

    #[test]
    fn pullback_exp_on_flat_path() {
        let z = BrownianPath::zero(TimeGrid::new(1.0 / 256.0, 40.0).unwrap());
        let half = pullback_exp_integral(&z, 2.0, 0.0, 1e-12).unwrap();
        assert!((half - 0.5).abs() < 1e-5, "{half}");
        let one = pullback_exp_integral(&z, 1.0, 5.0, 1e-12).unwrap();
        assert!((one - 1.0).abs() < 1e-5, "{one}");
    }

    #[test]
    fn pullback_ito_on_flat_path_is_zero() {
        let z = BrownianPath::zero(grid());
        assert_eq!(pullback_ito_integral(&z, 1.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn pullback_reports_exhaustion() {
        let p = BrownianPath::sample(1, TimeGrid::new(1.0 / 16.0, 2.0).unwrap());
        match pullback_exp_integral(&p, 2.0, 2.0, 1e-14) {
            Err(Error::DomainExhausted { last, previous }) => {
                assert!(last.is_finite() && previous.is_finite());
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn pullback_exp_is_self_consistent_under_tighter_tol() {
        let g = TimeGrid::new(1.0 / 64.0, 64.0).unwrap();
        for seed in 0..10 {
            let p = BrownianPath::sample(seed, g);
            let tol = 1e-6;
            let a = pullback_exp_integral(&p, 2.0, 2.0, tol).unwrap();
            let b = pullback_exp_integral(&p, 2.0, 2.0, tol / 2.0).unwrap();
            assert!((a - b).abs() <= tol * b.abs(), "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn pullback_ito_matches_integration_by_parts() {
        // Σ e^{s}ΔB ≈ −∫ e^{s} B(s) ds for B(0) = 0
        let g = TimeGrid::new(1.0 / 256.0, 48.0).unwrap();
        for seed in 0..4 {
            let p = BrownianPath::sample(seed, g);
            let direct = pullback_ito_integral(&p, 1.0, 1e-12).unwrap();
            let h = p.step();
            let n = (40.0 / h) as i64;
            let mut trap = 0.5 * p.value_at(0);
            for k in 1..n {
                trap += (-(k as f64) * h).exp() * p.value_at(-k);
            }
            let parts = -h * trap;
            assert!((direct - parts).abs() < 2e-2, "seed {seed}: {direct} vs {parts}");
        }
    }

    #[test]
    fn coarsen_keeps_values() {
        let p = BrownianPath::sample(4, grid());
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.step(), 4.0 * p.step());
        assert_eq!(c.value_at(3).to_bits(), p.value_at(12).to_bits());
        assert_eq!(c.value_at(-5).to_bits(), p.value_at(-20).to_bits());
    }

    #[test]
    fn ensemble_is_reproducible_and_shifted() {
        let e = NoiseEnsemble::new(42, 5, grid()).unwrap();
        let f = NoiseEnsemble::new(42, 5, grid()).unwrap();
        assert_eq!(e.seeds(), f.seeds());
        let s = e.shifted(1.0).unwrap();
        assert_eq!(s.path(3), e.path(3).wiener_shift(1.0).unwrap());
        let values = e.map(|_, p| p.value_at(10));
        assert_eq!(values.len(), 5);
    }

    #[test]
    fn csv_round_trip() {
        let p = BrownianPath::sample(17, TimeGrid::new(0.125, 2.0).unwrap());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = BrownianPath::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.seed(), 17);
    }
}
