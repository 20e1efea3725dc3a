//! Verb implementations. Each verb resolves its whole configuration first,
//! then computes, then writes its files, so every header is complete.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use randap_core::diophantine::{
    almost_periods, almost_periods_two_frequency, looks_rational, rotation_deviation, verify_relative_density,
    AlmostPeriodSet,
};
use randap_core::measures::{
    bl_distance, bootstrap_band, check_ap_measure, lambda_points, push_forward_paired, rho_uniform, ApMeasureConfig,
    BLConfig, EmpiricalMeasure,
};
use randap_core::noise::{NoiseEnsemble, TimeGrid};
use randap_core::sde::{euler_maruyama, state_vector, strong_error_slope, SdeSpec};
use randap_core::systems::{
    apply_cocycle, constant_initial, product_cocycle, reference_section_with, stationary_initial, RadialConvention,
    SolutionSection, SystemDescriptor, SystemKind, TorusFlow, DEFAULT_TOL,
};
use randap_core::verify::{
    check_cocycle, check_random_periodic, check_rap, check_stationary, check_thm43, check_thm45_condition,
    SampleMatrix,
};
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Time units of noise kept before the earliest evaluated time, for pullback integrals.
pub const PAST: f64 = 64.0;
/// Default step `base · 2^-DEFAULT_LEVEL`.
pub const DEFAULT_LEVEL: u32 = 10;
/// Coarsest level a defaulted step is reduced to when the run exceeds the
/// budget; the default sample times are multiples of `base/8`.
pub const MIN_AUTO_LEVEL: u32 = 3;
/// Total noise samples (paths × grid points) a defaulted step may produce.
pub const SAMPLE_BUDGET: f64 = 268_435_456.0;
pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_SEED: u64 = 1;
/// Added to the master seed for the independent ensemble of a push-forward.
pub const FRESH_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Result of one verb: whether its check passed and which files it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Files collected during a verb and written together at the end.
struct Output {
    command: String,
    files: Vec<(String, String)>,
}

impl Output {
    fn new(command: &str) -> Self {
        Self { command: command.to_string(), files: Vec::new() }
    }

    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn finish(self, cfg: &mut RunConfig, passed: bool, summary: String) -> Result<Outcome> {
        let dir = PathBuf::from(cfg.str_or("output_dir", "out"));
        let header = cfg.header(&self.command);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files = Vec::new();
        for (name, body) in self.files {
            let path = dir.join(name);
            std::fs::write(&path, format!("{header}{body}")).with_context(|| format!("writing {}", path.display()))?;
            files.push(path);
        }
        Ok(Outcome { passed, files, summary })
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

/// System descriptor from `system`, `gamma`, `t1`, `t2`, `x0`, `tol`.
pub fn descriptor(cfg: &mut RunConfig, default_system: &str) -> Result<SystemDescriptor> {
    let system = cfg.str_or("system", default_system);
    let tol = cfg.positive_or("tol", DEFAULT_TOL)?;
    let desc = match system.as_str() {
        "ou" => SystemDescriptor::ou(),
        "pitchfork" => SystemDescriptor::pitchfork(),
        "cylinder" => SystemDescriptor::cylinder(0.0, 1.0)?,
        "torus" => {
            let gamma = cfg.positive_or("gamma", SQRT_2)?;
            SystemDescriptor::torus(gamma, 1.0, 0.0, 0.0)?
        }
        "product-ou" | "product-pitchfork" => {
            let t1 = cfg.positive_or("t1", 1.0)?;
            let t2 = cfg.positive_or("t2", SQRT_2)?;
            let inner = if system == "product-ou" { SystemDescriptor::ou() } else { SystemDescriptor::pitchfork() };
            product_cocycle(TorusFlow::new(t1, t2)?, &inner)?
        }
        other => bail!("unknown system {other:?}; expected ou, pitchfork, cylinder, torus, product-ou or product-pitchfork"),
    };
    let mut desc = desc.with_tol(tol)?;
    match cfg.list_opt("x0")? {
        Some(x0) => {
            let x = desc.initial.with_components(&x0)?;
            desc = desc.with_initial(x)?;
        }
        None => cfg.set("x0", fmt_list(&desc.initial.components())),
    }
    for w in &desc.warnings {
        eprintln!("warning: {w}");
    }
    Ok(desc)
}

fn convention(cfg: &mut RunConfig) -> Result<RadialConvention> {
    match cfg.str_or("convention", "factor-two").as_str() {
        "factor-two" => Ok(RadialConvention::FactorTwo),
        "unscaled" => Ok(RadialConvention::Unscaled),
        other => bail!("unknown convention {other:?}; expected factor-two or unscaled"),
    }
}

fn section(cfg: &mut RunConfig, desc: &SystemDescriptor) -> Result<SolutionSection> {
    Ok(reference_section_with(desc, convention(cfg)?))
}

/// Grid from `h` and `T`. A defaulted `h` is `base · 2^-10`, coarsened while
/// `n` paths would exceed the sample budget; `T` defaults to the horizon plus
/// [`PAST`] and is rounded up to a grid multiple.
pub fn grid(cfg: &mut RunConfig, desc: &SystemDescriptor, horizon: f64, n: usize) -> Result<TimeGrid> {
    let base = desc.base_period();
    let half = cfg.positive_or("T", horizon + PAST)?;
    let step = match cfg.get("h") {
        Some(_) => cfg.positive_or("h", 1.0)?,
        None => {
            let mut level = DEFAULT_LEVEL;
            while level > MIN_AUTO_LEVEL && n as f64 * 2.0 * half * (level as f64).exp2() / base > SAMPLE_BUDGET {
                level -= 1;
            }
            let h = base * (-(level as f64)).exp2();
            cfg.set("h", h.to_string());
            h
        }
    };
    let rounded = (half / step).ceil() * step;
    if rounded != half {
        cfg.set("T", rounded.to_string());
    }
    TimeGrid::with_base(base, step, rounded).context("h must be a dyadic fraction base·2^-k of the base period")
}

fn ensemble(cfg: &mut RunConfig, desc: &SystemDescriptor, horizon: f64) -> Result<NoiseEnsemble> {
    let seed: u64 = cfg.value_or("seed", DEFAULT_SEED)?;
    let n: usize = cfg.value_or("N", DEFAULT_N)?;
    if n == 0 {
        bail!("N must be at least 1");
    }
    let g = grid(cfg, desc, horizon, n)?;
    Ok(NoiseEnsemble::new(seed, n, g)?)
}

fn fresh_ensemble(cfg: &mut RunConfig, like: &NoiseEnsemble) -> Result<NoiseEnsemble> {
    let default = like.master_seed().wrapping_add(FRESH_SALT);
    let seed: u64 = cfg.value_or("fresh_seed", default)?;
    Ok(NoiseEnsemble::new(seed, like.len(), *like.grid())?)
}

/// Output times `0, Δ, 2Δ, …, t_end` with `Δ = output_step`.
fn output_times(cfg: &mut RunConfig, desc: &SystemDescriptor, t_end: f64) -> Result<Vec<f64>> {
    let step = cfg.positive_or("output_step", desc.base_period() / 16.0)?;
    let n = (t_end / step + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if ts.last().is_some_and(|&t| t < t_end) {
        ts.push(t_end);
    }
    Ok(ts)
}

fn default_threshold(desc: &SystemDescriptor) -> f64 {
    if matches!(desc.kind, SystemKind::Ou) {
        1e-9
    } else {
        1e-3
    }
}

pub fn simulate(cfg: &mut RunConfig) -> Result<Outcome> {
    let desc = descriptor(cfg, "ou")?;
    let sec = section(cfg, &desc)?;
    let t_end = cfg.f64_or("t_end", 2.0 * desc.base_period())?;
    if t_end < 0.0 {
        bail!("t_end must be non-negative");
    }
    let times = output_times(cfg, &desc, t_end)?;
    let e = ensemble(cfg, &desc, t_end)?;
    let x0 = desc.initial;
    let rows = e.map(|i, path| -> randap_core::Result<(String, String)> {
        let mut traj = String::new();
        let mut held = String::new();
        for &t in &times {
            let x = apply_cocycle(&desc, t, path, &x0)?;
            let h = sec.eval(t, path)?;
            let _ = writeln!(traj, "{i},{},{t},{}", path.seed(), fmt_list(&x.components()));
            let _ = writeln!(held, "{i},{},{t},{}", path.seed(), fmt_list(&h.components()));
        }
        Ok((traj, held))
    });
    let names = desc.kind.component_names().join(",");
    let mut traj = format!("path,seed,t,{names}\n");
    let mut held = format!("path,seed,t,{names}\n");
    for r in rows {
        let (a, b) = r?;
        traj.push_str(&a);
        held.push_str(&b);
    }
    let mut manifest = String::from("index,seed\n");
    for (i, s) in e.seeds().iter().enumerate() {
        let _ = writeln!(manifest, "{i},{s}");
    }
    let mut out = Output::new("simulate");
    out.add("trajectories.csv", traj);
    out.add("section.csv", held);
    out.add("manifest.csv", manifest);
    let summary = format!("simulated {} paths of {} to t={t_end}", e.len(), desc.name());
    out.finish(cfg, true, summary)
}

/// τ set from an explicit `taus` list or by scanning for the system's frequencies.
fn tau_set(cfg: &mut RunConfig, desc: &SystemDescriptor, epsilon: f64, window_default: f64) -> Result<AlmostPeriodSet> {
    let window = cfg.positive_or("window", window_default)?;
    let dev = deviation_law(desc);
    if let Some(taus) = cfg.list_opt("taus")? {
        return Ok(AlmostPeriodSet::from_taus(epsilon, window, taus, dev));
    }
    Ok(match &desc.kind {
        SystemKind::Torus { gamma } => almost_periods(*gamma, epsilon, window)?,
        SystemKind::Product { flow, .. } => {
            let step = cfg.positive_or("step", 1.0)?;
            almost_periods_two_frequency(flow.t1, flow.t2, epsilon, window, step)?
        }
        _ => {
            let gamma = cfg.positive_or("gamma", SQRT_2)?;
            almost_periods(gamma, epsilon, window)?
        }
    })
}

/// Closed-form deterministic deviation of a shift, where one exists.
fn deviation_law(desc: &SystemDescriptor) -> Box<dyn Fn(f64) -> f64> {
    match &desc.kind {
        SystemKind::Torus { gamma } => {
            let g = *gamma;
            Box::new(move |t| rotation_deviation(g, t))
        }
        SystemKind::Product { flow, .. } => {
            let f = *flow;
            Box::new(move |t| f.deviation(t))
        }
        _ => Box::new(|_| 0.0),
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

pub fn verify(cfg: &mut RunConfig, check: &str) -> Result<Outcome> {
    let mut out = Output::new(&format!("verify {check}"));
    let (passed, report) = match check {
        "cocycle" => {
            let desc = descriptor(cfg, "ou")?;
            let threshold = cfg.positive_or("threshold", default_threshold(&desc))?;
            let sample = SampleMatrix::default_for(&desc);
            let e = ensemble(cfg, &desc, max_of(&sample.times) + max_of(&sample.shifts))?;
            let r = check_cocycle(&desc, &e, &sample)?;
            (r.sup_residual < threshold, r.to_text(""))
        }
        "stationary" => {
            let desc = descriptor(cfg, "ou")?;
            let sec = section(cfg, &desc)?;
            let threshold = cfg.positive_or("threshold", default_threshold(&desc))?;
            let sample = SampleMatrix::default_for(&desc);
            let e = ensemble(cfg, &desc, max_of(&sample.times))?;
            let r = check_stationary(&desc, &sec, &e, &sample.times)?;
            (r.sup_residual < threshold, r.to_text(""))
        }
        "periodic" => {
            let desc = descriptor(cfg, "cylinder")?;
            let sec = section(cfg, &desc)?;
            let tau = cfg.positive_or("tau", desc.base_period())?;
            let threshold = cfg.positive_or("threshold", 1e-6)?;
            let sample = SampleMatrix::default_for(&desc);
            let e = ensemble(cfg, &desc, tau + max_of(&sample.times) + max_of(&sample.shifts))?;
            let r = check_random_periodic(&desc, &sec, tau, &e, &sample)?;
            let text = format!("tau: {}\n{}{}", r.tau, r.flow.to_text("flow."), r.shift.to_text("shift."));
            (r.shift.sup_residual < threshold && r.flow.sup_residual < threshold, text)
        }
        "rap" => {
            let desc = descriptor(cfg, "torus")?;
            let sec = section(cfg, &desc)?;
            let eps = cfg.positive_or("epsilon", 0.05)?;
            let set = tau_set(cfg, &desc, eps, randap_core::diophantine::DEFAULT_WINDOW)?;
            let sample = SampleMatrix::default_for(&desc);
            let last = set.taus.last().copied().unwrap_or(0.0);
            let e = ensemble(cfg, &desc, last + max_of(&sample.times) + max_of(&sample.shifts))?;
            let cert = check_rap(&desc, &sec, eps, &set, &e, &sample)?;
            let law = deviation_law(&desc);
            let mut csv = String::from("tau,deviation,closed_form\n");
            for &(tau, d) in &cert.per_tau {
                let _ = writeln!(csv, "{tau},{d},{}", law(tau));
            }
            out.add("taus.csv", csv);
            let text = format!("{}members: {}\n", cert.to_text(), fmt_list(&set.taus));
            (cert.passed, text)
        }
        "thm43" => {
            let desc = descriptor(cfg, "product-ou")?;
            let sec = section(cfg, &desc)?;
            let eps = cfg.positive_or("epsilon", 0.05)?;
            let set = tau_set(cfg, &desc, eps / SQRT_2, 200.0)?;
            let sample = SampleMatrix::default_for(&desc);
            let last = set.taus.last().copied().unwrap_or(0.0);
            let e = ensemble(cfg, &desc, last + max_of(&sample.times) + max_of(&sample.shifts))?;
            let rep = check_thm43(&desc, &sec, eps, &set, &e, &sample)?;
            let mut csv = String::from("tau,factor,value,bound\n");
            for v in &rep.violations {
                let _ = writeln!(csv, "{},{},{},{}", v.tau, v.factor, v.value, v.bound);
            }
            out.add("violations.csv", csv);
            let cert: String = rep.certificate.to_text().lines().map(|l| format!("certificate.{l}\n")).collect();
            (rep.passed, format!("{}{cert}", rep.to_text()))
        }
        "thm45" => {
            let desc = descriptor(cfg, "ou")?;
            let eps = cfg.positive_or("epsilon", 0.05)?;
            let h0 = match cfg.str_or("initial", "stationary").as_str() {
                "stationary" => stationary_initial(&desc),
                "constant" => constant_initial(desc.initial),
                other => bail!("unknown initial {other:?}; expected stationary or constant"),
            };
            let set = tau_set(cfg, &desc, eps, 200.0)?;
            let sample = SampleMatrix::default_for(&desc);
            let last = set.taus.last().copied().unwrap_or(0.0);
            let e = ensemble(cfg, &desc, last + max_of(&sample.times) + max_of(&sample.shifts))?;
            let rep = check_thm45_condition(&desc, h0, &set, eps, &e, &sample)?;
            (rep.passed(), rep.to_text())
        }
        other => bail!("unknown check {other:?}; expected cocycle, stationary, periodic, rap, thm43 or thm45"),
    };
    let report = if report.starts_with("passed:") {
        format!("check: {check}\n{report}")
    } else {
        format!("check: {check}\npassed: {passed}\n{report}")
    };
    out.add(&format!("verify_{check}.txt"), report.clone());
    out.finish(cfg, passed, report)
}

pub fn almost_periods_cmd(cfg: &mut RunConfig) -> Result<Outcome> {
    let eps = cfg.positive_or("epsilon", 0.05)?;
    let window = cfg.positive_or("window", randap_core::diophantine::DEFAULT_WINDOW)?;
    let (set, law, label): (AlmostPeriodSet, Box<dyn Fn(f64) -> f64>, String) = if cfg.contains("t2") {
        let t1 = cfg.positive_or("t1", 1.0)?;
        let t2 = cfg.positive_or("t2", SQRT_2)?;
        let step = cfg.positive_or("step", 1.0)?;
        let flow = TorusFlow::new(t1, t2)?;
        (almost_periods_two_frequency(t1, t2, eps, window, step)?, Box::new(move |t| flow.deviation(t)), format!("t1={t1} t2={t2}"))
    } else {
        let gamma = cfg.positive_or("gamma", SQRT_2)?;
        if looks_rational(gamma, 16) {
            eprintln!("warning: gamma={gamma} looks rational; almost periods may be exact periods");
        }
        (almost_periods(gamma, eps, window)?, Box::new(move |t| rotation_deviation(gamma, t)), format!("gamma={gamma}"))
    };
    let mut csv = String::from("tau,deviation\n");
    for &tau in &set.taus {
        let _ = writeln!(csv, "{tau},{}", law(tau));
    }
    let mut report = String::new();
    let _ = writeln!(report, "frequencies: {label}");
    let _ = writeln!(report, "epsilon: {eps}");
    let _ = writeln!(report, "window: {window}");
    let _ = writeln!(report, "members: {}", set.len());
    let _ = writeln!(report, "max_deviation: {}", set.max_deviation());
    let density = verify_relative_density(&set);
    match &density {
        Ok(l) => {
            let _ = writeln!(report, "inclusion_length: {l}");
        }
        Err(f) => {
            let _ = writeln!(report, "density_failure: {f}");
        }
    }
    let mut out = Output::new("almost-periods");
    out.add("almost_periods.csv", csv);
    out.add("almost_periods.txt", report.clone());
    out.finish(cfg, density.is_ok(), report)
}

fn bl_config(cfg: &mut RunConfig, lip_key: &str) -> Result<BLConfig> {
    let sup = cfg.positive_or("sup_bound", 1.0)?;
    let lip = cfg.positive_or(lip_key, 1.0)?;
    Ok(BLConfig::new(sup, lip)?)
}

pub fn measure(cfg: &mut RunConfig, check: &str) -> Result<Outcome> {
    let mut out = Output::new(&format!("measure {check}"));
    let (passed, report) = match check {
        "lambda" => {
            let desc = descriptor(cfg, "pitchfork")?;
            let sec = section(cfg, &desc)?;
            let t = cfg.f64_or("t", 0.0)?;
            let e = ensemble(cfg, &desc, t.abs())?;
            let pts = lambda_points(&sec, t, &e)?;
            let m = EmpiricalMeasure::uniform(pts)?;
            let mut body = Vec::new();
            m.write_csv(&mut body, &[])?;
            out.add("lambda.csv", String::from_utf8(body)?);
            let mut report = String::new();
            for (k, name) in desc.kind.component_names().iter().enumerate() {
                let _ = writeln!(report, "{name}: mean={} variance={}", m.mean(k), m.variance(k));
            }
            (true, report)
        }
        "push-forward" => {
            let desc = descriptor(cfg, "pitchfork")?;
            let sec = section(cfg, &desc)?;
            let t = cfg.positive_or("t", 1.0)?;
            let s = cfg.f64_or("s", 0.0)?;
            let eps = cfg.positive_or("epsilon", 0.05)?;
            let bl = bl_config(cfg, "c2")?;
            let resamples: usize = cfg.value_or("resamples", 200)?;
            let boot_seed: u64 = cfg.value_or("bootstrap_seed", 0x5eed)?;
            let e = ensemble(cfg, &desc, (t + s).abs().max(s.abs()))?;
            let fresh = fresh_ensemble(cfg, &e)?;
            let lam_s = EmpiricalMeasure::uniform(lambda_points(&sec, s, &e)?)?.with_provenance(e.master_seed());
            let pushed = push_forward_paired(&desc, t, &lam_s, &fresh)?;
            let target = lambda_points(&sec, t + s, &e)?;
            let band = bootstrap_band(pushed.support(), &target, |a, b| rho_uniform(a, b, &bl), resamples, boot_seed)?;
            let passed = band.estimate < eps && band.hi < 2.0 * eps;
            out.add(
                "push_forward.csv",
                format!("t,s,rho,lo,hi,resamples\n{t},{s},{},{},{},{}\n", band.estimate, band.lo, band.hi, band.resamples),
            );
            let report = format!(
                "rho: {}\nband: [{}, {}]\nresamples: {}\nn: {}\n",
                band.estimate,
                band.lo,
                band.hi,
                band.resamples,
                e.len()
            );
            (passed, report)
        }
        "ap-certificate" => {
            let desc = descriptor(cfg, "torus")?;
            let sec = section(cfg, &desc)?;
            let eps = cfg.positive_or("epsilon", 0.05)?;
            let set = tau_set(cfg, &desc, eps, 200.0)?;
            let times = cfg.list_or("times", &[1.0])?;
            let shifts = cfg.list_or("shifts", &[0.0, 1.0, 2.0])?;
            let mut ap = ApMeasureConfig::new(eps, times.clone(), shifts.clone());
            ap.bl_x = bl_config(cfg, "c2")?;
            ap.bl_omega = bl_config(cfg, "c1")?;
            ap.resamples = cfg.value_or("resamples", 200)?;
            ap.bootstrap_seed = cfg.value_or("bootstrap_seed", 0x5eed)?;
            let last = set.taus.last().copied().unwrap_or(0.0);
            let horizon = last + max_of(&shifts) + max_of(&times);
            let e = ensemble(cfg, &desc, horizon)?;
            let fresh = fresh_ensemble(cfg, &e)?;
            let cert = check_ap_measure(&desc, &sec, &set, &e, &fresh, &ap)?;
            out.add("ap_certificate.csv", cert.to_csv());
            (cert.passed, cert.to_text())
        }
        other => bail!("unknown measure check {other:?}; expected lambda, push-forward or ap-certificate"),
    };
    let report = if report.starts_with("passed:") {
        format!("check: {check}\n{report}")
    } else {
        format!("check: {check}\npassed: {passed}\n{report}")
    };
    out.add(&format!("measure_{}.txt", check.replace('-', "_")), report.clone());
    out.finish(cfg, passed, report)
}

fn read_measure(path: &Path) -> Result<EmpiricalMeasure> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    EmpiricalMeasure::read_csv(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn bl_distance_cmd(cfg: &mut RunConfig, a: &Path, b: &Path) -> Result<Outcome> {
    cfg.set("measure_a", a.display().to_string());
    cfg.set("measure_b", b.display().to_string());
    let bl = bl_config(cfg, "lip_constant")?;
    let (mu, nu) = (read_measure(a)?, read_measure(b)?);
    let r = bl_distance(&mu, &nu, &bl)?;
    let mut witness = String::from("point,g\n");
    for (p, g) in r.support.iter().zip(&r.optimizer_values) {
        let _ = writeln!(witness, "\"{p}\",{g}");
    }
    let report = format!("distance: {}\nsolver: {:?}\nstatus: {:?}\n", r.distance, r.solver, r.lp_status);
    let mut out = Output::new("bl-distance");
    out.add("bl_witness.csv", witness);
    out.add("bl_distance.txt", report.clone());
    out.finish(cfg, true, report)
}

pub fn sde(cfg: &mut RunConfig, action: &str) -> Result<Outcome> {
    let desc = descriptor(cfg, "ou")?;
    let spec = SdeSpec::for_system(&desc)?;
    let mut out = Output::new(&format!("sde {action}"));
    let report = match action {
        "integrate" => {
            let t_end = cfg.positive_or("t_end", 2.0 * desc.base_period())?;
            let m: usize = cfg.value_or("substeps", 1)?;
            if m == 0 {
                bail!("substeps must be at least 1");
            }
            let times = output_times(cfg, &desc, t_end)?;
            let e = ensemble(cfg, &desc, t_end)?;
            let x0 = desc.initial;
            let v0 = state_vector(&x0);
            let rows = e.map(|i, path| -> randap_core::Result<String> {
                let traj = euler_maruyama(&spec, &v0, path, t_end, m)?;
                let mut s = String::new();
                for &t in &times {
                    let k = path.grid().index_of(t).ok_or(randap_core::Error::NotOnGrid { t, h: path.step() })?;
                    let em = x0.with_components(&traj.states[k as usize])?;
                    let exact = apply_cocycle(&desc, t, path, &x0)?;
                    let _ = writeln!(s, "{i},{},{t},{},{}", path.seed(), fmt_list(&em.components()), fmt_list(&exact.components()));
                }
                Ok(s)
            });
            let names = desc.kind.component_names();
            let em: Vec<String> = names.iter().map(|n| format!("em_{n}")).collect();
            let ex: Vec<String> = names.iter().map(|n| format!("exact_{n}")).collect();
            let mut body = csv_line(&[String::from("path,seed,t"), em.join(","), ex.join(",")]);
            for r in rows {
                body.push_str(&r?);
            }
            out.add("em_trajectories.csv", body);
            format!("integrated {} paths of {} to t={t_end} with {m} substeps\n", e.len(), desc.name())
        }
        "slope" => {
            let t_end = cfg.positive_or("t_end", desc.base_period())?;
            let levels: Vec<u32> = cfg.list_or("levels", &[4, 5, 6, 7, 8])?;
            let e = ensemble(cfg, &desc, t_end)?;
            let r = strong_error_slope(&desc, &spec, &desc.initial, &levels, &e, t_end)?;
            let mut csv = String::from("h,mean_abs_error\n");
            for (h, err) in &r.errors {
                let _ = writeln!(csv, "{h},{err}");
            }
            out.add("em_errors.csv", csv);
            r.to_text()
        }
        other => bail!("unknown sde action {other:?}; expected integrate or slope"),
    };
    out.add(&format!("sde_{action}.txt"), report.clone());
    out.finish(cfg, true, report)
}
