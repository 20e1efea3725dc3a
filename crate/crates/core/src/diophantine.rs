//! Continued fractions and certified sets of almost periods for irrational
//! rotations.
//!
//! For the rotation `n ↦ {γn}` the integer almost periods at accuracy `ε` are
//! the `n` with `|{γn}| < ε`. The set is always produced by an exhaustive
//! scan of the window; continued-fraction denominators only seed it, and the
//! seeding is checked against the scan.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::systems::frac_nearest;

/// Partial quotients above this value mark the target as rational.
pub const RATIONAL_QUOTIENT: f64 = 1e8;
/// Default scan window (time units).
pub const DEFAULT_WINDOW: f64 = 1e4;
/// Coefficient bound for combinations of two consecutive convergent denominators.
const SEED_COEFFICIENT: i64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub target: f64,
    pub partial_quotients: Vec<i64>,
    /// `(p, q)` pairs, `p/q → target`.
    pub convergents: Vec<(i64, i64)>,
    /// The expansion terminated or hit a huge partial quotient.
    pub rational: bool,
}

impl ContinuedFraction {
    /// `|q·target − p|` for every convergent, with a single rounding; the
    /// plain product loses the error once `q·target` is large.
    pub fn errors(&self) -> Vec<f64> {
        self.convergents
            .iter()
            .map(|&(p, q)| (q as f64).mul_add(self.target, -(p as f64)).abs())
            .collect()
    }

    pub fn denominators(&self) -> impl Iterator<Item = i64> + '_ {
        self.convergents.iter().map(|&(_, q)| q)
    }
}

/// Partial quotients of `gamma`, up to `depth` of them. Each complete quotient
/// is `−e_{k−1}/e_k` with `e_k = q_k·gamma − p_k` from a fused multiply-add,
/// which does not drift the way iterating `1/frac` does.
pub fn continued_fraction(gamma: f64, depth: usize) -> Result<ContinuedFraction> {
    if !gamma.is_finite() {
        return Err(Error::Config(format!("cannot expand non-finite {gamma}")));
    }
    if depth == 0 {
        return Err(Error::Config("continued fraction depth must be at least 1".into()));
    }
    let mut quotients = Vec::with_capacity(depth);
    let mut convergents = Vec::with_capacity(depth);
    let (mut p_prev, mut p_prev2) = (1i128, 0i128);
    let (mut q_prev, mut q_prev2) = (0i128, 1i128);
    let err = |p: i128, q: i128| (q as f64).mul_add(gamma, -(p as f64));
    let mut rational = false;

    while quotients.len() < depth {
        let x = -err(p_prev2, q_prev2) / err(p_prev, q_prev);
        let a = x.floor();
        if !quotients.is_empty() && a > RATIONAL_QUOTIENT {
            rational = true;
            break;
        }
        let ai = a as i128;
        let p = ai * p_prev + p_prev2;
        let q = ai * q_prev + q_prev2;
        if p.abs() > i64::MAX as i128 || q > i64::MAX as i128 {
            break;
        }
        quotients.push(a as i64);
        convergents.push((p as i64, q as i64));
        (p_prev2, p_prev) = (p_prev, p);
        (q_prev2, q_prev) = (q_prev, q);

        if err(p, q) == 0.0 {
            rational = true;
            break;
        }
    }
    Ok(ContinuedFraction { target: gamma, partial_quotients: quotients, convergents, rational })
}

/// Whether `gamma` looks rational within `depth` partial quotients.
pub fn looks_rational(gamma: f64, depth: usize) -> bool {
    continued_fraction(gamma, depth).map(|cf| cf.rational).unwrap_or(true)
}

/// How the members of an [`AlmostPeriodSet`] were found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    /// Continued-fraction seeding covered every strong member of the scan.
    CfSeeded,
    /// Seeding missed members; the exhaustive scan alone is authoritative.
    ScanOnly,
}

/// Certified ε-almost periods inside `[0, window]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmostPeriodSet {
    pub epsilon: f64,
    pub taus: Vec<f64>,
    /// Deviation each τ was certified against.
    pub deviations: Vec<f64>,
    pub inclusion_length: f64,
    pub window: f64,
    pub mode: SeedMode,
}

impl AlmostPeriodSet {
    /// Build a set from explicit members; the inclusion length is the max gap.
    pub fn from_taus(epsilon: f64, window: f64, mut taus: Vec<f64>, deviation: impl Fn(f64) -> f64) -> Self {
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let deviations = taus.iter().map(|&t| deviation(t)).collect();
        let inclusion_length = max_gap(&taus, window).0;
        Self { epsilon, taus, deviations, inclusion_length, window, mode: SeedMode::ScanOnly }
    }

    /// Multiply every member (and the window) by `factor`, e.g. a base period.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            epsilon: self.epsilon,
            taus: self.taus.iter().map(|t| t * factor).collect(),
            deviations: self.deviations.clone(),
            inclusion_length: self.inclusion_length * factor,
            window: self.window * factor,
            mode: self.mode,
        }
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.taus.contains(&tau)
    }

    /// Largest certified deviation.
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Deviation `[{τ}² + {γτ}²]^{1/2}` of the unit-speed two-frequency rotation.
pub fn rotation_deviation(gamma: f64, tau: f64) -> f64 {
    frac_nearest(tau).hypot(frac_nearest(gamma * tau))
}

/// All integers `n ∈ [1, window]` with `|{γn}| < ε`.
pub fn almost_periods(gamma: f64, epsilon: f64, window: f64) -> Result<AlmostPeriodSet> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(window >= 1.0) || !window.is_finite() {
        return Err(Error::Config(format!("window must be at least 1, got {window}")));
    }
    if !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be finite, got {gamma}")));
    }
    let top = window.floor() as i64;
    let dev = |n: i64| frac_nearest(gamma * n as f64).abs();

    let members: Vec<i64> = (1..=top).filter(|&n| dev(n) < epsilon).collect();
    if members.is_empty() {
        return Err(Error::WindowTooSmall { epsilon, window });
    }

    let seeds = cf_candidates(gamma, top);
    let complete = members.iter().filter(|&&n| dev(n) < epsilon / 2.0).all(|n| seeds.contains(n));
    let mode = if complete { SeedMode::CfSeeded } else { SeedMode::ScanOnly };

    let taus: Vec<f64> = members.iter().map(|&n| n as f64).collect();
    let deviations = members.iter().map(|&n| dev(n)).collect();
    let inclusion_length = max_gap(&taus, window).0;
    Ok(AlmostPeriodSet { epsilon, taus, deviations, inclusion_length, window, mode })
}

/// Integer combinations `a·q_k + b·q_{k+1}` of consecutive convergent
/// denominators that land in `[1, top]`.
fn cf_candidates(gamma: f64, top: i64) -> HashSet<i64> {
    let mut out = HashSet::new();
    let Ok(cf) = continued_fraction(gamma, 64) else { return out };
    let qs: Vec<i64> = cf.denominators().take_while(|&q| q <= top).collect();
    let m = SEED_COEFFICIENT;
    for pair in qs.windows(2) {
        let (qa, qb) = (pair[0], pair[1]);
        for a in -m..=m {
            for b in -m..=m {
                let n = a * qa + b * qb;
                if (1..=top).contains(&n) {
                    out.insert(n);
                }
            }
        }
    }
    if let Some(&q) = qs.last() {
        out.extend((1..=top / q.max(1)).map(|a| a * q));
    }
    out
}

/// Two-frequency flow with periods `t1`, `t2`: scan `τ = k·step` in the window.
pub fn almost_periods_two_frequency(
    t1: f64,
    t2: f64,
    epsilon: f64,
    window: f64,
    step: f64,
) -> Result<AlmostPeriodSet> {
    if !(t1 > 0.0 && t2 > 0.0 && step > 0.0) {
        return Err(Error::Config("periods and step must be positive".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let dev = |tau: f64| frac_nearest(tau / t1).hypot(frac_nearest(tau / t2));
    let n = (window / step).floor() as i64;
    let taus: Vec<f64> = (1..=n).map(|k| k as f64 * step).filter(|&t| dev(t) < epsilon).collect();
    if taus.is_empty() {
        return Err(Error::WindowTooSmall { epsilon, window });
    }
    Ok(AlmostPeriodSet::from_taus(epsilon, window, taus, dev))
}

/// Largest gap between consecutive members, window ends included, and where it sits.
fn max_gap(taus: &[f64], window: f64) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut prev = 0.0;
    for &t in taus.iter().filter(|&&t| (0.0..=window).contains(&t)) {
        if t - prev > best.0 {
            best = (t - prev, prev, t);
        }
        prev = t;
    }
    if window - prev > best.0 {
        best = (window - prev, prev, window);
    }
    best
}

/// A length-`claimed` subinterval of the window that misses every member.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFailure {
    pub claimed: f64,
    pub gap_start: f64,
    pub gap_end: f64,
}

impl fmt::Display for DensityFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gap ({}, {}) of length {} exceeds the claimed inclusion length {}",
            self.gap_start,
            self.gap_end,
            self.gap_end - self.gap_start,
            self.claimed
        )
    }
}

/// Recompute the maximal gap and compare it with the set's inclusion length.
pub fn verify_relative_density(set: &AlmostPeriodSet) -> std::result::Result<f64, DensityFailure> {
    verify_relative_density_with(set, set.inclusion_length)
}

/// As [`verify_relative_density`] against an explicit claimed length.
pub fn verify_relative_density_with(
    set: &AlmostPeriodSet,
    claimed: f64,
) -> std::result::Result<f64, DensityFailure> {
    let (gap, a, b) = max_gap(&set.taus, set.window);
    if set.taus.is_empty() || gap > claimed * (1.0 + 1e-12) {
        return Err(DensityFailure { claimed, gap_start: a, gap_end: b });
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn sqrt2_expansion() {
        let cf = continued_fraction(SQRT2, 8).unwrap();
        assert_eq!(cf.partial_quotients, vec![1, 2, 2, 2, 2, 2, 2, 2]);
        let qs: Vec<i64> = cf.denominators().take(6).collect();
        assert_eq!(qs, vec![1, 2, 5, 12, 29, 70]);
        assert!(!cf.rational);
        let err12 = (12.0 * SQRT2 - 17.0).abs();
        assert!((err12 - 0.029437).abs() < 1e-6);
        assert_eq!(cf.convergents[3], (17, 12));
    }

    #[test]
    fn rational_targets_are_flagged() {
        let cf = continued_fraction(0.5, 10).unwrap();
        assert!(cf.rational);
        assert_eq!(cf.partial_quotients, vec![0, 2]);
        assert!(looks_rational(1.0 / 3.0, 16));
        assert!(!looks_rational(SQRT2, 16));
        assert!(continued_fraction(f64::NAN, 3).is_err());
        assert!(continued_fraction(1.0, 0).is_err());
    }

    #[test]
    fn sqrt2_almost_periods_in_small_window() {
        let set = almost_periods(SQRT2, 0.05, 200.0).unwrap();
        assert!(set.contains(12.0) && set.contains(29.0));
        assert!(!set.contains(7.0));
        for (&t, &d) in set.taus.iter().zip(&set.deviations) {
            assert!(d < 0.05);
            assert_eq!(d, rotation_deviation(SQRT2, t));
        }
        assert_eq!(set.mode, SeedMode::CfSeeded);
        assert_eq!(verify_relative_density(&set), Ok(set.inclusion_length));
    }

    #[test]
    fn integer_gamma_and_wide_epsilon_give_every_integer() {
        let a = almost_periods(3.0, 0.01, 50.0).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a.inclusion_length, 1.0);
        let b = almost_periods(SQRT2, 0.6, 50.0).unwrap();
        assert_eq!(b.len(), 50);
        assert_eq!(b.inclusion_length, 1.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(almost_periods(SQRT2, 1e-4, 20.0), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn density_of_integers_and_of_a_single_point() {
        let all = AlmostPeriodSet::from_taus(0.1, 100.0, (1..=100).map(f64::from).collect(), |_| 0.0);
        assert_eq!(verify_relative_density(&all), Ok(1.0));
        let lone = AlmostPeriodSet::from_taus(0.1, 100.0, vec![0.0], |_| 0.0);
        let fail = verify_relative_density_with(&lone, 99.0).unwrap_err();
        assert_eq!((fail.gap_start, fail.gap_end), (0.0, 100.0));
        assert!(verify_relative_density_with(&lone, 100.0).is_ok());
    }

    #[test]
    fn two_frequency_scan_matches_rotation() {
        let set = almost_periods_two_frequency(1.0, 1.0 / SQRT2, 0.05, 100.0, 1.0).unwrap();
        let direct = almost_periods(SQRT2, 0.05, 100.0).unwrap();
        assert_eq!(set.taus, direct.taus);
    }

    proptest! {
        #[test]
        fn convergents_are_reduced_and_improving(gamma in 0.01f64..50.0) {
            let cf = continued_fraction(gamma, 8).unwrap();
            for &(p, q) in &cf.convergents {
                prop_assert_eq!(gcd(p.abs(), q), 1);
            }
            let errs = cf.errors();
            for w in errs.windows(2) {
                prop_assert!(w[1] < w[0] || w[1] == 0.0);
            }
        }
    }

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
}
