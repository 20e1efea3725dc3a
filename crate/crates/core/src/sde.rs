//! Euler–Maruyama integration of the catalog SDEs on the same Brownian paths
//! the closed-form cocycles use, as an independent oracle.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{BrownianPath, NoiseEnsemble};
use crate::systems::{apply_cocycle, frac_nearest, StatePoint, SystemDescriptor, SystemKind};

/// States beyond this magnitude count as a blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e12;
/// Step of the central difference used when `(Dσ)σ` is not supplied.
const FD_STEP: f64 = 1e-6;

pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Ito,
    Stratonovich,
}

/// `dX = b(X) dt + σ(X) ∘/· dB` driven by one scalar Brownian motion.
#[derive(Clone)]
pub struct SdeSpec {
    pub name: String,
    pub dim: usize,
    pub convention: Convention,
    drift: VectorField,
    diffusion: VectorField,
    /// `(Dσ)σ`, the directional derivative of σ along itself.
    correction: Option<VectorField>,
    /// Coefficients when the SDE is scalar with polynomial coefficients.
    poly: Option<ScalarPoly>,
}

/// Scalar SDE with polynomial drift and diffusion, coefficients lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPoly {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(a: &[f64]) -> Vec<f64> {
    a.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

impl ScalarPoly {
    /// `σσ′`.
    pub fn correction(&self) -> Vec<f64> {
        poly_mul(&self.diffusion, &poly_derivative(&self.diffusion))
    }

    fn shifted(&self, sign: f64) -> Self {
        let corr = self.correction();
        let n = self.drift.len().max(corr.len());
        let mut drift = vec![0.0; n];
        for (k, d) in drift.iter_mut().enumerate() {
            let a = self.drift.get(k).copied().unwrap_or(0.0);
            let c = corr.get(k).copied().unwrap_or(0.0);
            *d = a + sign * 0.5 * c;
        }
        while drift.len() > 1 && drift.last() == Some(&0.0) {
            drift.pop();
        }
        Self { drift, diffusion: self.diffusion.clone() }
    }
}

impl std::fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("convention", &self.convention)
            .finish()
    }
}

fn field(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> VectorField {
    Arc::new(f)
}

impl SdeSpec {
    pub fn new(
        name: &str,
        dim: usize,
        convention: Convention,
        drift: VectorField,
        diffusion: VectorField,
        correction: Option<VectorField>,
    ) -> Self {
        Self { name: name.into(), dim, convention, drift, diffusion, correction, poly: None }
    }

    /// Scalar SDE from polynomial coefficients.
    pub fn polynomial(name: &str, convention: Convention, poly: ScalarPoly) -> Self {
        let (d, s, c) = (poly.drift.clone(), poly.diffusion.clone(), poly.correction());
        Self {
            name: name.into(),
            dim: 1,
            convention,
            drift: field(move |x| vec![poly_eval(&d, x[0])]),
            diffusion: field(move |x| vec![poly_eval(&s, x[0])]),
            correction: Some(field(move |x| vec![poly_eval(&c, x[0])])),
            poly: Some(poly),
        }
    }

    pub fn poly(&self) -> Option<&ScalarPoly> {
        self.poly.as_ref()
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        (self.diffusion)(x)
    }

    /// `(Dσ)σ` at `x`, analytic if supplied, else by central differences.
    pub fn correction(&self, x: &[f64]) -> Vec<f64> {
        if let Some(c) = &self.correction {
            return c(x);
        }
        let s = self.diffusion(x);
        let plus: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + FD_STEP * b).collect();
        let minus: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a - FD_STEP * b).collect();
        let (sp, sm) = (self.diffusion(&plus), self.diffusion(&minus));
        sp.iter().zip(&sm).map(|(a, b)| (a - b) / (2.0 * FD_STEP)).collect()
    }

    /// `dX = −X dt + dB`.
    pub fn ou() -> Self {
        Self::polynomial("ou", Convention::Ito, ScalarPoly { drift: vec![0.0, -1.0], diffusion: vec![1.0] })
    }

    /// `dX = (3/2 X − X³) dt + X dB` (Itô).
    pub fn pitchfork_ito() -> Self {
        Self::polynomial(
            "pitchfork",
            Convention::Ito,
            ScalarPoly { drift: vec![0.0, 1.5, 0.0, -1.0], diffusion: vec![0.0, 1.0] },
        )
    }

    /// `dρ = (ρ − ρ³) dt + ρ ∘ dB` (Stratonovich).
    pub fn pitchfork_stratonovich() -> Self {
        Self::polynomial(
            "pitchfork-stratonovich",
            Convention::Stratonovich,
            ScalarPoly { drift: vec![0.0, 1.0, 0.0, -1.0], diffusion: vec![0.0, 1.0] },
        )
    }

    /// Cylinder in polar form, state `(α, ρ)`: `dα = dt/2π`, `dρ = (ρ − ρ³)dt + ρ ∘ dB`.
    pub fn cylinder_polar() -> Self {
        Self::new(
            "cylinder",
            2,
            Convention::Stratonovich,
            field(|x| vec![1.0 / TAU, x[1] - x[1].powi(3)]),
            field(|x| vec![0.0, x[1]]),
            Some(field(|x| vec![0.0, x[1]])),
        )
    }

    /// Cylinder in Cartesian form, state `(x, y)`, Stratonovich noise `(x, y) ∘ dB`.
    pub fn cylinder_cartesian() -> Self {
        Self::new(
            "cylinder-cartesian",
            2,
            Convention::Stratonovich,
            field(|p| {
                let (x, y) = (p[0], p[1]);
                let q = x * x + y * y;
                vec![x - y - x * q, x + y - y * q]
            }),
            field(|p| vec![p[0], p[1]]),
            Some(field(|p| vec![p[0], p[1]])),
        )
    }

    /// Torus in polar form, state `(r, α, z)`: `dr = (3/2 r − r³)dt + r dB`, `dα = dt`, `dz = γ dt`.
    pub fn torus_polar(gamma: f64) -> Self {
        Self::new(
            "torus",
            3,
            Convention::Ito,
            field(move |x| vec![1.5 * x[0] - x[0].powi(3), 1.0, gamma]),
            field(|x| vec![x[0], 0.0, 0.0]),
            Some(field(|x| vec![x[0], 0.0, 0.0])),
        )
    }

    /// The SDE behind a catalog system, with state layout matching [`StatePoint::components`].
    pub fn for_system(desc: &SystemDescriptor) -> Result<Self> {
        Ok(match &desc.kind {
            SystemKind::Ou => Self::ou(),
            SystemKind::Pitchfork => Self::pitchfork_ito(),
            SystemKind::Cylinder => Self::cylinder_polar(),
            SystemKind::Torus { gamma } => Self::torus_polar(*gamma),
            SystemKind::Product { flow, inner } => {
                let inner = match **inner {
                    SystemKind::Ou => Self::ou(),
                    SystemKind::Pitchfork => Self::pitchfork_ito(),
                    _ => return Err(Error::Config("product random factor must be scalar".into())),
                };
                let (a, b) = (1.0 / flow.t1, 1.0 / flow.t2);
                let (d, s, c) = (inner.drift.clone(), inner.diffusion.clone(), inner.correction.clone());
                Self::new(
                    "product",
                    3,
                    Convention::Ito,
                    field(move |x| vec![a, b, d(&x[2..])[0]]),
                    field(move |x| vec![0.0, 0.0, s(&x[2..])[0]]),
                    c.map(|c| field(move |x: &[f64]| vec![0.0, 0.0, c(&x[2..])[0]])),
                )
            }
        })
    }
}

fn shift_drift(spec: &SdeSpec, sign: f64, convention: Convention) -> SdeSpec {
    if let Some(p) = &spec.poly {
        return SdeSpec::polynomial(&spec.name, convention, p.shifted(sign));
    }
    let base = spec.clone();
    let drift = field(move |x| {
        let b = base.drift(x);
        let c = base.correction(x);
        b.iter().zip(&c).map(|(u, v)| u + sign * 0.5 * v).collect()
    });
    SdeSpec { drift, convention, ..spec.clone() }
}

/// Itô form: `b + ½(Dσ)σ` for a Stratonovich spec; Itô specs are returned as is.
pub fn stratonovich_to_ito(spec: &SdeSpec) -> SdeSpec {
    match spec.convention {
        Convention::Ito => spec.clone(),
        Convention::Stratonovich => shift_drift(spec, 1.0, Convention::Ito),
    }
}

/// Stratonovich form: `b − ½(Dσ)σ` for an Itô spec.
pub fn ito_to_stratonovich(spec: &SdeSpec) -> SdeSpec {
    match spec.convention {
        Convention::Stratonovich => spec.clone(),
        Convention::Ito => shift_drift(spec, -1.0, Convention::Stratonovich),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub substeps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }

    pub fn to_csv(&self, names: &[&str], comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "t,{}", names.join(","));
        for (t, x) in self.times.iter().zip(&self.states) {
            let cs: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{t},{}", cs.join(","));
        }
        s
    }
}

/// `x_{k+1} = x_k + b(x_k)Δ + σ(x_k)ΔB` with `m` substeps per grid step.
/// Substep increments split each grid increment evenly (linear interpolation).
pub fn euler_maruyama(spec: &SdeSpec, x0: &[f64], path: &BrownianPath, t_end: f64, m: usize) -> Result<Trajectory> {
    if m == 0 {
        return Err(Error::Config("substep factor must be at least 1".into()));
    }
    if x0.len() != spec.dim {
        return Err(Error::Config(format!("initial state has {} components, expected {}", x0.len(), spec.dim)));
    }
    if t_end < 0.0 {
        return Err(Error::NegativeTime(t_end));
    }
    let ito = stratonovich_to_ito(spec);
    let steps = path.grid_index(t_end)?;
    let h = path.step();
    let dt = h / m as f64;
    let mut x = x0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for k in 0..steps {
        let db = path.increment(k) / m as f64;
        for _ in 0..m {
            let b = ito.drift(&x);
            let s = ito.diffusion(&x);
            for i in 0..x.len() {
                x[i] += b[i] * dt + s[i] * db;
            }
            let mag = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !(mag <= DIVERGENCE_BOUND) {
                return Err(Error::Divergence { step: k as usize, magnitude: mag });
            }
        }
        times.push((k + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states, substeps: m })
}

/// Raw state vector of a phase point (circle coordinates as stored).
pub fn state_vector(x: &StatePoint) -> Vec<f64> {
    x.components()
}

/// Phase point from an integrated state, reducing circle coordinates.
pub fn state_point(template: &StatePoint, v: &[f64]) -> Result<StatePoint> {
    template.with_components(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    /// `(h, E|X_EM − X_closed|)`, coarsest first.
    pub errors: Vec<(f64, f64)>,
    pub slope: f64,
    pub warnings: Vec<String>,
}

impl SlopeReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "slope: {}", self.slope);
        for (h, e) in &self.errors {
            let _ = writeln!(s, "error: h={h} mean_abs={e:e}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Least-squares slope of `log2(y)` against `log2(x)`.
pub fn log2_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Strong error of EM at `t_end` against the closed-form cocycle, for each
/// dyadic step `base·2^-level`. The closed form is evaluated on the
/// ensemble's own (finest) grid; EM runs on the path subsampled to each level.
pub fn strong_error_slope(
    desc: &SystemDescriptor,
    spec: &SdeSpec,
    x0: &StatePoint,
    levels: &[u32],
    ensemble: &NoiseEnsemble,
    t_end: f64,
) -> Result<SlopeReport> {
    if levels.len() < 4 {
        return Err(Error::Config("need at least 4 step sizes".into()));
    }
    let fine = ensemble.grid().level();
    if let Some(&l) = levels.iter().find(|&&l| l > fine) {
        return Err(Error::Config(format!("level {l} is finer than the ensemble grid level {fine}")));
    }
    let v0 = state_vector(x0);
    let per_path = ensemble.map(|_, path| -> Result<Vec<f64>> {
        let exact = apply_cocycle(desc, t_end, path, x0)?;
        levels
            .iter()
            .map(|&l| {
                let coarse = path.coarsen(fine - l)?;
                let traj = euler_maruyama(spec, &v0, &coarse, t_end, 1)?;
                let approx = state_point(x0, traj.last())?;
                approx.distance(&exact)
            })
            .collect()
    });
    let per_path: Vec<Vec<f64>> = per_path.into_iter().collect::<Result<_>>()?;
    let n = per_path.len() as f64;
    let base = ensemble.grid().base();
    let errors: Vec<(f64, f64)> = levels
        .iter()
        .enumerate()
        .map(|(i, &l)| (base * (-(l as f64)).exp2(), per_path.iter().map(|e| e[i]).sum::<f64>() / n))
        .collect();
    let mut warnings = Vec::new();
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    if sorted.windows(2).any(|w| w[1].1 >= w[0].1) {
        warnings.push("error does not decrease monotonically with h".into());
    }
    Ok(SlopeReport { slope: log2_slope(&errors), errors, warnings })
}

/// Number of paths on which an EM trajectory started at `x0 > 0` reaches `x ≤ 0`
/// in its first component.
pub fn count_sign_crossings(spec: &SdeSpec, x0: f64, ensemble: &NoiseEnsemble, t_end: f64) -> Result<usize> {
    let hits = ensemble.map(|_, path| -> Result<bool> {
        let traj = euler_maruyama(spec, &[x0], path, t_end, 1)?;
        Ok(traj.states.iter().any(|x| x[0] <= 0.0))
    });
    let mut n = 0;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n)
}

/// Cartesian integration of the cylinder system, compared with the polar
/// cocycle after `(x, y) ↦ (atan2(y, x)/2π, |(x, y)|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianProbe {
    pub rho_error: f64,
    pub alpha_error: f64,
}

pub fn cylinder_cartesian_probe(path: &BrownianPath, alpha0: f64, rho0: f64, t_end: f64, m: usize) -> Result<CartesianProbe> {
    let desc = SystemDescriptor::cylinder(alpha0, rho0)?;
    let exact = apply_cocycle(&desc, t_end, path, &desc.initial)?;
    let StatePoint::Cylinder { alpha, rho } = exact else { unreachable!("cylinder cocycle") };
    let a0 = TAU * alpha0;
    let traj = euler_maruyama(&SdeSpec::cylinder_cartesian(), &[rho0 * a0.cos(), rho0 * a0.sin()], path, t_end, m)?;
    let end = traj.last();
    let r = end[0].hypot(end[1]);
    let a = end[1].atan2(end[0]) / TAU;
    Ok(CartesianProbe { rho_error: (r - rho).abs(), alpha_error: frac_nearest(a - alpha).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::TimeGrid;

    #[test]
    fn ou_hand_iteration() {
        let path = BrownianPath::zero(TimeGrid::new(0.5, 2.0).unwrap());
        let traj = euler_maruyama(&SdeSpec::ou(), &[1.0], &path, 1.0, 1).unwrap();
        assert_eq!(traj.states, vec![vec![1.0], vec![0.5], vec![0.25]]);
    }

    #[test]
    fn zero_diffusion_is_explicit_euler() {
        let spec = SdeSpec::new("ode", 1, Convention::Ito, field(|x| vec![x[0]]), field(|_| vec![0.0]), None);
        let path = BrownianPath::sample(4, TimeGrid::new(0.25, 1.0).unwrap());
        let traj = euler_maruyama(&spec, &[1.0], &path, 1.0, 1).unwrap();
        assert!((traj.last()[0] - 1.25f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn stratonovich_pitchfork_maps_to_ito_pitchfork() {
        let ito = stratonovich_to_ito(&SdeSpec::pitchfork_stratonovich());
        let target = SdeSpec::pitchfork_ito();
        assert_eq!(ito.poly(), target.poly());
        for x in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert_eq!(ito.drift(&[x]), target.drift(&[x]));
        }
        assert_eq!(ito.convention, Convention::Ito);
        // already Itô: untouched
        assert_eq!(stratonovich_to_ito(&ito).drift(&[0.7]), ito.drift(&[0.7]));
    }

    #[test]
    fn conversion_round_trip_and_constant_noise() {
        let s = SdeSpec::new(
            "fd",
            1,
            Convention::Stratonovich,
            field(|x| vec![x[0] - x[0].powi(3)]),
            field(|x| vec![x[0].sin()]),
            None,
        );
        let ito = stratonovich_to_ito(&s);
        let x = 0.4f64;
        assert!((ito.drift(&[x])[0] - (x - x.powi(3) + 0.5 * x.sin() * x.cos())).abs() < 1e-9);
        let back = ito_to_stratonovich(&stratonovich_to_ito(&s));
        for x in [-1.5, 0.2, 1.1] {
            assert!((back.drift(&[x])[0] - s.drift(&[x])[0]).abs() < 1e-12);
        }
        let ou = ito_to_stratonovich(&SdeSpec::ou());
        assert_eq!(ou.drift(&[0.3]), SdeSpec::ou().drift(&[0.3]));
    }

    #[test]
    fn divergence_is_reported() {
        let spec = SdeSpec::new("blow", 1, Convention::Ito, field(|x| vec![x[0] * x[0]]), field(|_| vec![0.0]), None);
        let path = BrownianPath::zero(TimeGrid::new(0.25, 8.0).unwrap());
        assert!(matches!(euler_maruyama(&spec, &[10.0], &path, 8.0, 1), Err(Error::Divergence { .. })));
    }

    #[test]
    fn slope_fit_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = (4..10).map(|k| {
            let h = (-(k as f64)).exp2();
            (h, 3.0 * h)
        }).collect();
        assert!((log2_slope(&pts) - 1.0).abs() < 1e-12);
    }
}
