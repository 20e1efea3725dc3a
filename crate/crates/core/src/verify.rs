//! Monte-Carlo certification of cocycle, stationarity, periodicity and
//! almost periodicity relations.
//!
//! Every sweep is evaluated path by path in parallel and reduced in ensemble
//! order, so reports are identical run to run regardless of thread count.

use std::fmt::{self, Write as _};

use crate::diophantine::{verify_relative_density, AlmostPeriodSet, DensityFailure};
use crate::error::{Error, Result};
use crate::noise::{BrownianPath, NoiseEnsemble};
use crate::systems::{
    apply_cocycle, phase_metric, section_from_initial, InitialMap, SolutionSection, StatePoint, SystemDescriptor,
    SystemKind,
};

/// Where a sup residual was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub t: f64,
    pub s: f64,
    pub state: Option<StatePoint>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub sup_residual: f64,
    pub mean_residual: f64,
    pub n_samples: usize,
    pub h: f64,
    pub half_range: f64,
    pub worst_case: Option<WorstCase>,
}

impl ResidualReport {
    fn fold(samples: impl IntoIterator<Item = (f64, WorstCase)>, ensemble: &NoiseEnsemble) -> Self {
        let mut sup = 0.0;
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut worst = None;
        for (r, w) in samples {
            if worst.is_none() || r > sup {
                sup = r;
                worst = Some(w);
            }
            sum += r;
            n += 1;
        }
        Self {
            sup_residual: sup,
            mean_residual: if n == 0 { 0.0 } else { sum / n as f64 },
            n_samples: n,
            h: ensemble.grid().step(),
            half_range: ensemble.grid().half_range(),
            worst_case: worst,
        }
    }

    /// `key: value` lines.
    pub fn to_text(&self, prefix: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{prefix}sup_residual: {:e}", self.sup_residual);
        let _ = writeln!(s, "{prefix}mean_residual: {:e}", self.mean_residual);
        let _ = writeln!(s, "{prefix}n_samples: {}", self.n_samples);
        let _ = writeln!(s, "{prefix}grid: h={} T={}", self.h, self.half_range);
        if let Some(w) = &self.worst_case {
            let state = w.state.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{prefix}worst_case: t={} s={} state={} seed={}", w.t, w.s, state, w.seed);
        }
        s
    }
}

/// The `(t, s, x)` sample policy of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub times: Vec<f64>,
    pub shifts: Vec<f64>,
    pub states: Vec<StatePoint>,
}

impl SampleMatrix {
    /// 8 t-values, 8 s-values and 4 states, all grid-exact multiples of `base/8`.
    pub fn default_for(desc: &SystemDescriptor) -> Self {
        let b = desc.base_period();
        let times: Vec<f64> = (0..8).map(|k| k as f64 * b / 4.0).collect();
        let shifts: Vec<f64> = (0..8).map(|k| (2 * k + 1) as f64 * b / 8.0).collect();
        Self { times, shifts, states: default_states(&desc.kind) }
    }
}

pub fn default_states(kind: &SystemKind) -> Vec<StatePoint> {
    match kind {
        SystemKind::Ou => [-2.0, -0.5, 0.5, 2.0].map(StatePoint::Real).to_vec(),
        SystemKind::Pitchfork => [0.25, 0.5, 1.0, 2.0].map(StatePoint::Real).to_vec(),
        SystemKind::Cylinder => [(0.0, 0.25), (0.2, 0.5), (-0.3, 1.0), (0.5, 2.0)]
            .map(|(a, r)| StatePoint::cylinder(a, r))
            .to_vec(),
        SystemKind::Torus { .. } => [(0.25, 0.0, 0.0), (0.5, 0.2, -0.1), (1.0, -0.3, 0.4), (2.0, 0.5, 0.25)]
            .map(|(r, a, z)| StatePoint::torus(r, a, z))
            .to_vec(),
        SystemKind::Product { inner, .. } => {
            let zs = default_states(inner);
            let xy = [(0.0, 0.0), (0.2, -0.1), (-0.3, 0.4), (0.5, 0.25)];
            zs.iter()
                .zip(xy)
                .map(|(z, (x, y))| StatePoint::product(x, y, z.components()[0]))
                .collect()
        }
    }
}

/// Run `per_path` on every path in parallel and flatten in ensemble order.
fn sweep<F>(ensemble: &NoiseEnsemble, per_path: F) -> Result<Vec<(f64, WorstCase)>>
where
    F: Fn(&BrownianPath) -> Result<Vec<(f64, WorstCase)>> + Sync + Send,
{
    let chunks = ensemble.map(|_, p| per_path(p));
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// `d(Φ(t+s,ω)x, Φ(t,θ_sω)Φ(s,ω)x)` over the sample product.
pub fn check_cocycle(desc: &SystemDescriptor, ensemble: &NoiseEnsemble, sample: &SampleMatrix) -> Result<ResidualReport> {
    let samples = sweep(ensemble, |path| {
        let mut out = Vec::new();
        for &s in &sample.shifts {
            let shifted = path.wiener_shift(s)?;
            for x in &sample.states {
                let mid = apply_cocycle(desc, s, path, x)?;
                for &t in &sample.times {
                    let direct = apply_cocycle(desc, t + s, path, x)?;
                    let composed = apply_cocycle(desc, t, &shifted, &mid)?;
                    let r = phase_metric(desc, &direct, &composed)?;
                    out.push((r, WorstCase { t, s, state: Some(*x), seed: path.seed() }));
                }
            }
        }
        Ok(out)
    })?;
    Ok(ResidualReport::fold(samples, ensemble))
}

/// `d(Φ(t,ω)y(ω), y(θ_tω))` with `y = H(0, ·)`.
pub fn check_stationary(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    ensemble: &NoiseEnsemble,
    times: &[f64],
) -> Result<ResidualReport> {
    let samples = sweep(ensemble, |path| {
        let y = section.eval(0.0, path)?;
        times
            .iter()
            .map(|&t| {
                let moved = apply_cocycle(desc, t, path, &y)?;
                let target = section.eval(0.0, &path.wiener_shift(t)?)?;
                let r = phase_metric(desc, &moved, &target)?;
                Ok((r, WorstCase { t, s: 0.0, state: Some(y), seed: path.seed() }))
            })
            .collect()
    })?;
    Ok(ResidualReport::fold(samples, ensemble))
}

/// Flow relation `d(Φ(t,θ_sω)H(s,ω), H(t+s,ω))`.
pub fn check_flow(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    ensemble: &NoiseEnsemble,
    times: &[f64],
    shifts: &[f64],
) -> Result<ResidualReport> {
    let samples = sweep(ensemble, |path| {
        let mut out = Vec::new();
        for &s in shifts {
            let shifted = path.wiener_shift(s)?;
            let hs = section.eval(s, path)?;
            for &t in times {
                let moved = apply_cocycle(desc, t, &shifted, &hs)?;
                let target = section.eval(t + s, path)?;
                out.push((phase_metric(desc, &moved, &target)?, WorstCase { t, s, state: Some(hs), seed: path.seed() }));
            }
        }
        Ok(out)
    })?;
    Ok(ResidualReport::fold(samples, ensemble))
}

/// `d(H(s+τ,ω), H(s,θ_τω))` per path, per τ, per s.
fn shift_residuals(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    ensemble: &NoiseEnsemble,
    taus: &[f64],
    shifts: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_path = ensemble.map(|_, path| -> Result<Vec<Vec<f64>>> {
        taus.iter()
            .map(|&tau| {
                let shifted = path.wiener_shift(tau)?;
                shifts
                    .iter()
                    .map(|&s| phase_metric(desc, &section.eval(s + tau, path)?, &section.eval(s, &shifted)?))
                    .collect()
            })
            .collect()
    });
    per_path.into_iter().collect()
}

fn fold_shift_residuals(
    residuals: &[Vec<Vec<f64>>],
    ensemble: &NoiseEnsemble,
    taus: &[f64],
    shifts: &[f64],
) -> ResidualReport {
    let seeds = ensemble.seeds();
    let samples = residuals.iter().enumerate().flat_map(|(i, per_tau)| {
        per_tau.iter().enumerate().flat_map(move |(k, per_s)| {
            per_s.iter().enumerate().map(move |(j, &r)| {
                (r, WorstCase { t: taus[k], s: shifts[j], state: None, seed: seeds[i] })
            })
        })
    });
    ResidualReport::fold(samples, ensemble)
}

/// Both relations of a random periodic section with period `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicReport {
    pub tau: f64,
    pub flow: ResidualReport,
    /// `d(H(s+τ,ω), H(s,θ_τω))`; the `t` field of its worst case holds τ.
    pub shift: ResidualReport,
}

pub fn check_random_periodic(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    tau: f64,
    ensemble: &NoiseEnsemble,
    sample: &SampleMatrix,
) -> Result<PeriodicReport> {
    let flow = check_flow(desc, section, ensemble, &sample.times, &sample.shifts)?;
    let res = shift_residuals(desc, section, ensemble, &[tau], &sample.shifts)?;
    let shift = fold_shift_residuals(&res, ensemble, &[tau], &sample.shifts);
    Ok(PeriodicReport { tau, flow, shift })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RapCertificate {
    pub epsilon: f64,
    pub tau_set: AlmostPeriodSet,
    pub sup_deviation: f64,
    /// `(τ, sup over s and ω)` for every member.
    pub per_tau: Vec<(f64, f64)>,
    pub flow: ResidualReport,
    pub deviation: ResidualReport,
    pub density: std::result::Result<f64, DensityFailure>,
    pub passed: bool,
}

impl RapCertificate {
    pub fn deviation_at(&self, tau: f64) -> Option<f64> {
        self.per_tau.iter().find(|(t, _)| *t == tau).map(|&(_, d)| d)
    }

    /// Re-judge the same measurements against another ε.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut out = self.clone();
        out.epsilon = epsilon;
        out.passed = self.sup_deviation < epsilon && self.density.is_ok();
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "passed: {}", self.passed);
        let _ = writeln!(s, "epsilon: {}", self.epsilon);
        let _ = writeln!(s, "sup_deviation: {:.12}", self.sup_deviation);
        let _ = writeln!(s, "n_taus: {}", self.per_tau.len());
        match &self.density {
            Ok(l) => {
                let _ = writeln!(s, "inclusion_length: {l}");
            }
            Err(f) => {
                let _ = writeln!(s, "density_failure: {f}");
            }
        }
        let _ = writeln!(s, "window: {}", self.tau_set.window);
        s.push_str(&self.flow.to_text("flow."));
        s.push_str(&self.deviation.to_text("deviation."));
        s
    }
}

/// Random almost periodicity of a section: the flow relation plus
/// `sup d(H(s+τ,ω), H(s,θ_τω)) < ε` over the certified τ set.
pub fn check_rap(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    epsilon: f64,
    tau_set: &AlmostPeriodSet,
    ensemble: &NoiseEnsemble,
    sample: &SampleMatrix,
) -> Result<RapCertificate> {
    if tau_set.is_empty() {
        return Err(Error::EmptyTauSet);
    }
    let flow = check_flow(desc, section, ensemble, &sample.times, &sample.shifts)?;
    let res = shift_residuals(desc, section, ensemble, &tau_set.taus, &sample.shifts)?;
    let per_tau: Vec<(f64, f64)> = tau_set
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let sup = res.iter().flat_map(|p| p[k].iter().copied()).fold(0.0, f64::max);
            (tau, sup)
        })
        .collect();
    let deviation = fold_shift_residuals(&res, ensemble, &tau_set.taus, &sample.shifts);
    let sup_deviation = deviation.sup_residual;
    let density = verify_relative_density(tau_set);
    let passed = sup_deviation < epsilon && density.is_ok();
    Ok(RapCertificate { epsilon, tau_set: tau_set.clone(), sup_deviation, per_tau, flow, deviation, density, passed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub t: f64,
    pub seed: u64,
    pub pair: (StatePoint, StatePoint),
}

/// `max d(Φ(t,ω)x, Φ(t,ω)y) / d(x,y)` over the samples; coincident pairs are skipped.
pub fn estimate_lipschitz(
    desc: &SystemDescriptor,
    ensemble: &NoiseEnsemble,
    times: &[f64],
    pairs: &[(StatePoint, StatePoint)],
) -> Result<LipschitzEstimate> {
    let per_path = ensemble.map(|_, path| -> Result<Option<LipschitzEstimate>> {
        let mut best: Option<LipschitzEstimate> = None;
        for &t in times {
            for &(x, y) in pairs {
                let d0 = phase_metric(desc, &x, &y)?;
                if d0 == 0.0 {
                    continue;
                }
                let d1 = phase_metric(desc, &apply_cocycle(desc, t, path, &x)?, &apply_cocycle(desc, t, path, &y)?)?;
                let ratio = d1 / d0;
                if best.is_none_or(|b| ratio > b.value) {
                    best = Some(LipschitzEstimate { value: ratio, t, seed: path.seed(), pair: (x, y) });
                }
            }
        }
        Ok(best)
    });
    let mut best: Option<LipschitzEstimate> = None;
    for r in per_path {
        if let Some(e) = r? {
            if best.is_none_or(|b| e.value > b.value) {
                best = Some(e);
            }
        }
    }
    best.ok_or_else(|| Error::Config("no non-coincident pair to estimate a Lipschitz constant".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm45Report {
    pub epsilon: f64,
    /// `d(H0(ω), Φ(τ, θ_{-τ}ω) H0(θ_{-τ}ω))`; worst case `t` holds τ.
    pub condition: ResidualReport,
    pub lipschitz: LipschitzEstimate,
    /// `d(H(s+τ, θ_{-τ}ω), H(s,ω))`.
    pub conclusion_backward: ResidualReport,
    /// `d(H(s+τ, ω), H(s, θ_τω))`.
    pub conclusion_forward: ResidualReport,
    pub condition_passed: bool,
    pub conclusion_passed: bool,
}

impl Thm45Report {
    pub fn passed(&self) -> bool {
        self.condition_passed && self.conclusion_passed
    }

    pub fn bound(&self) -> f64 {
        self.lipschitz.value * self.epsilon
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "passed: {}", self.passed());
        let _ = writeln!(s, "epsilon: {}", self.epsilon);
        let _ = writeln!(s, "condition_passed: {}", self.condition_passed);
        let _ = writeln!(s, "conclusion_passed: {}", self.conclusion_passed);
        let _ = writeln!(s, "lipschitz: {} (t={}, seed={})", self.lipschitz.value, self.lipschitz.t, self.lipschitz.seed);
        let _ = writeln!(s, "conclusion_bound: {}", self.bound());
        s.push_str(&self.condition.to_text("condition."));
        s.push_str(&self.conclusion_backward.to_text("backward."));
        s.push_str(&self.conclusion_forward.to_text("forward."));
        s
    }
}

/// Backward-shift hypothesis on an initial value and both forms of the
/// resulting almost periodicity of `H(t,ω) = Φ(t,ω)H0(ω)`.
pub fn check_thm45_condition(
    desc: &SystemDescriptor,
    h0: InitialMap,
    tau_set: &AlmostPeriodSet,
    epsilon: f64,
    ensemble: &NoiseEnsemble,
    sample: &SampleMatrix,
) -> Result<Thm45Report> {
    if tau_set.is_empty() {
        return Err(Error::EmptyTauSet);
    }
    let taus = &tau_set.taus;
    let condition = {
        let h0 = h0.clone();
        let samples = sweep(ensemble, |path| {
            let here = h0(path)?;
            taus.iter()
                .map(|&tau| {
                    let back = path.wiener_shift(-tau)?;
                    let moved = apply_cocycle(desc, tau, &back, &h0(&back)?)?;
                    let r = phase_metric(desc, &here, &moved)?;
                    Ok((r, WorstCase { t: tau, s: 0.0, state: Some(here), seed: path.seed() }))
                })
                .collect()
        })?;
        ResidualReport::fold(samples, ensemble)
    };

    let section = section_from_initial(desc, h0);
    let backward = sweep(ensemble, |path| {
        let mut out = Vec::new();
        for &tau in taus {
            let back = path.wiener_shift(-tau)?;
            for &s in &sample.shifts {
                let r = phase_metric(desc, &section.eval(s + tau, &back)?, &section.eval(s, path)?)?;
                out.push((r, WorstCase { t: tau, s, state: None, seed: path.seed() }));
            }
        }
        Ok(out)
    })?;
    let conclusion_backward = ResidualReport::fold(backward, ensemble);
    let res = shift_residuals(desc, &section, ensemble, taus, &sample.shifts)?;
    let conclusion_forward = fold_shift_residuals(&res, ensemble, taus, &sample.shifts);

    let pairs = lipschitz_pairs(&sample.states);
    let lipschitz = estimate_lipschitz(desc, ensemble, &sample.times, &pairs)?;
    let condition_passed = condition.sup_residual < epsilon;
    let conclusion_passed = conclusion_backward.sup_residual <= lipschitz.value * epsilon;
    Ok(Thm45Report {
        epsilon,
        condition,
        lipschitz,
        conclusion_backward,
        conclusion_forward,
        condition_passed,
        conclusion_passed,
    })
}

/// All unordered pairs of distinct sample states.
pub fn lipschitz_pairs(states: &[StatePoint]) -> Vec<(StatePoint, StatePoint)> {
    let mut out = Vec::new();
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            out.push((*a, *b));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Deterministic,
    Random,
    Combined,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Factor::Deterministic => "deterministic",
            Factor::Random => "random",
            Factor::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub tau: f64,
    pub factor: Factor,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm43Report {
    pub epsilon: f64,
    /// `(τ, [{τ/t1}² + {τ/t2}²]^{1/2})`.
    pub deterministic: Vec<(f64, f64)>,
    pub deterministic_sup: f64,
    /// Deviation of the random component alone.
    pub random: ResidualReport,
    pub certificate: RapCertificate,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl Thm43Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "passed: {}", self.passed);
        let _ = writeln!(s, "epsilon: {}", self.epsilon);
        let _ = writeln!(s, "deterministic_sup: {:.12}", self.deterministic_sup);
        let _ = writeln!(s, "random_sup: {:e}", self.random.sup_residual);
        let _ = writeln!(s, "combined_sup: {:.12}", self.certificate.sup_deviation);
        for v in &self.violations {
            let _ = writeln!(s, "violation: tau={} factor={} value={} bound={}", v.tau, v.factor, v.value, v.bound);
        }
        s
    }
}

/// Hypotheses (each factor `< ε/√2`) and conclusion (combined `< ε`) for a
/// product of a torus flow with a random cocycle.
pub fn check_thm43(
    desc: &SystemDescriptor,
    section: &SolutionSection,
    epsilon: f64,
    tau_set: &AlmostPeriodSet,
    ensemble: &NoiseEnsemble,
    sample: &SampleMatrix,
) -> Result<Thm43Report> {
    let SystemKind::Product { flow, .. } = &desc.kind else {
        return Err(Error::Config(format!("expected a product system, got {}", desc.name())));
    };
    if tau_set.is_empty() {
        return Err(Error::EmptyTauSet);
    }
    let half = epsilon / std::f64::consts::SQRT_2;
    let deterministic: Vec<(f64, f64)> = tau_set.taus.iter().map(|&t| (t, flow.deviation(t))).collect();
    let deterministic_sup = deterministic.iter().map(|d| d.1).fold(0.0, f64::max);

    let taus = &tau_set.taus;
    let per_path = ensemble.map(|_, path| -> Result<Vec<Vec<f64>>> {
        taus.iter()
            .map(|&tau| {
                let shifted = path.wiener_shift(tau)?;
                sample
                    .shifts
                    .iter()
                    .map(|&s| {
                        let a = section.eval(s + tau, path)?;
                        let b = section.eval(s, &shifted)?;
                        match (a, b) {
                            (StatePoint::Product { z: z1, .. }, StatePoint::Product { z: z2, .. }) => Ok((z1 - z2).abs()),
                            _ => Err(Error::KindMismatch { system: "product".into(), state: a.to_string() }),
                        }
                    })
                    .collect()
            })
            .collect()
    });
    let res: Vec<Vec<Vec<f64>>> = per_path.into_iter().collect::<Result<_>>()?;
    let random = fold_shift_residuals(&res, ensemble, taus, &sample.shifts);
    let certificate = check_rap(desc, section, epsilon, tau_set, ensemble, sample)?;

    let mut violations = Vec::new();
    for (k, &(tau, d)) in deterministic.iter().enumerate() {
        if d >= half {
            violations.push(Violation { tau, factor: Factor::Deterministic, value: d, bound: half });
        }
        let r = res.iter().flat_map(|p| p[k].iter().copied()).fold(0.0, f64::max);
        if r >= half {
            violations.push(Violation { tau, factor: Factor::Random, value: r, bound: half });
        }
        let c = certificate.per_tau[k].1;
        if c >= epsilon {
            violations.push(Violation { tau, factor: Factor::Combined, value: c, bound: epsilon });
        }
    }
    let passed = violations.is_empty() && certificate.passed;
    Ok(Thm43Report { epsilon, deterministic, deterministic_sup, random, certificate, violations, passed })
}
