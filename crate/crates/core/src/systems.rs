//! Closed-form random cocycles, their reference solution sections, the
//! product with a deterministic two-frequency torus flow, and phase metrics.
//!
//! Radial components of the pitchfork, cylinder and torus systems share one
//! cocycle, `x·e^{t+B_t} / (1 + 2x²∫_0^t e^{2s+2B_s} ds)^{1/2}`, and one
//! stationary value, `(2∫_{-∞}^0 e^{2s+2B_s} ds)^{-1/2}`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use crate::diophantine::looks_rational;
use crate::error::{Error, Result};
use crate::noise::{exp_integral, ito_integral, pullback_exp_integral, pullback_ito_integral, BrownianPath};

/// Default relative tolerance of the pullback truncation.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Continued-fraction depth used for the rationality warning.
const RATIONALITY_DEPTH: usize = 16;

/// Representative of `x mod 1` in `(−1/2, 1/2]`.
pub fn frac_nearest(x: f64) -> f64 {
    x - (x - 0.5).ceil()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePoint {
    Real(f64),
    Cylinder { alpha: f64, rho: f64 },
    Torus { r: f64, alpha: f64, z: f64 },
    /// Torus-flow angles `(x, y)` and the scalar random component `z`.
    Product { x: f64, y: f64, z: f64 },
}

impl StatePoint {
    pub fn cylinder(alpha: f64, rho: f64) -> Self {
        StatePoint::Cylinder { alpha: frac_nearest(alpha), rho }
    }

    pub fn torus(r: f64, alpha: f64, z: f64) -> Self {
        StatePoint::Torus { r, alpha: frac_nearest(alpha), z: frac_nearest(z) }
    }

    pub fn product(x: f64, y: f64, z: f64) -> Self {
        StatePoint::Product { x: frac_nearest(x), y: frac_nearest(y), z }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StatePoint::Real(_) => "real",
            StatePoint::Cylinder { .. } => "cylinder",
            StatePoint::Torus { .. } => "torus",
            StatePoint::Product { .. } => "product",
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match *self {
            StatePoint::Real(x) => vec![x],
            StatePoint::Cylinder { alpha, rho } => vec![alpha, rho],
            StatePoint::Torus { r, alpha, z } => vec![r, alpha, z],
            StatePoint::Product { x, y, z } => vec![x, y, z],
        }
    }

    /// Rebuild a point of the same kind as `self` from raw components.
    pub fn with_components(&self, c: &[f64]) -> Result<Self> {
        let want = self.components().len();
        if c.len() != want {
            return Err(Error::Parse(format!("expected {want} components, got {}", c.len())));
        }
        Ok(match self {
            StatePoint::Real(_) => StatePoint::Real(c[0]),
            StatePoint::Cylinder { .. } => StatePoint::cylinder(c[0], c[1]),
            StatePoint::Torus { .. } => StatePoint::torus(c[0], c[1], c[2]),
            StatePoint::Product { .. } => StatePoint::product(c[0], c[1], c[2]),
        })
    }

    /// Metric of the point's own phase space; circle differences use `{·}`.
    pub fn distance(&self, other: &StatePoint) -> Result<f64> {
        use StatePoint::*;
        Ok(match (*self, *other) {
            (Real(a), Real(b)) => (a - b).abs(),
            (Cylinder { alpha: a1, rho: r1 }, Cylinder { alpha: a2, rho: r2 }) => {
                frac_nearest(a1 - a2).hypot(r1 - r2)
            }
            (Torus { r: r1, alpha: a1, z: z1 }, Torus { r: r2, alpha: a2, z: z2 }) => {
                let (dr, da, dz) = (r1 - r2, frac_nearest(a1 - a2), frac_nearest(z1 - z2));
                (dr * dr + da * da + dz * dz).sqrt()
            }
            (Product { x: x1, y: y1, z: z1 }, Product { x: x2, y: y2, z: z2 }) => {
                let (dx, dy, dz) = (frac_nearest(x1 - x2), frac_nearest(y1 - y2), z1 - z2);
                (dx * dx + dy * dy + dz * dz).sqrt()
            }
            _ => {
                return Err(Error::KindMismatch {
                    system: self.kind_name().into(),
                    state: other.kind_name().into(),
                })
            }
        })
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.components();
        let parts: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
        write!(f, "{}({})", self.kind_name(), parts.join(", "))
    }
}

/// Deterministic flow `(x, y) ↦ (x + t/t1, y + t/t2) mod ℤ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusFlow {
    pub t1: f64,
    pub t2: f64,
}

impl TorusFlow {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 > 0.0 && t2 > 0.0 && t1.is_finite() && t2.is_finite()) {
            return Err(Error::Config(format!("torus flow periods must be positive, got ({t1}, {t2})")));
        }
        Ok(Self { t1, t2 })
    }

    pub fn advance(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        (frac_nearest(x + t / self.t1), frac_nearest(y + t / self.t2))
    }

    /// `[{τ/t1}² + {τ/t2}²]^{1/2}`.
    pub fn deviation(&self, tau: f64) -> f64 {
        frac_nearest(tau / self.t1).hypot(frac_nearest(tau / self.t2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Ou,
    Pitchfork,
    Cylinder,
    Torus { gamma: f64 },
    Product { flow: TorusFlow, inner: Box<SystemKind> },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Ou => "ou",
            SystemKind::Pitchfork => "pitchfork",
            SystemKind::Cylinder => "cylinder",
            SystemKind::Torus { .. } => "torus",
            SystemKind::Product { .. } => "product",
        }
    }

    /// Base period whose dyadic fractions make the natural shifts grid-exact.
    pub fn base_period(&self) -> f64 {
        match self {
            SystemKind::Cylinder => TAU,
            _ => 1.0,
        }
    }

    pub fn component_names(&self) -> &'static [&'static str] {
        match self {
            SystemKind::Ou | SystemKind::Pitchfork => &["x"],
            SystemKind::Cylinder => &["alpha", "rho"],
            SystemKind::Torus { .. } => &["r", "alpha", "z"],
            SystemKind::Product { .. } => &["x", "y", "z"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDescriptor {
    pub kind: SystemKind,
    /// Initial phase; circle components stored reduced.
    pub initial: StatePoint,
    /// Pullback truncation tolerance.
    pub tol: f64,
    pub warnings: Vec<String>,
}

impl SystemDescriptor {
    pub fn ou() -> Self {
        Self { kind: SystemKind::Ou, initial: StatePoint::Real(0.0), tol: DEFAULT_TOL, warnings: Vec::new() }
    }

    pub fn pitchfork() -> Self {
        Self { kind: SystemKind::Pitchfork, initial: StatePoint::Real(1.0), tol: DEFAULT_TOL, warnings: Vec::new() }
    }

    pub fn cylinder(alpha0: f64, rho0: f64) -> Result<Self> {
        check_radial(rho0)?;
        Ok(Self {
            kind: SystemKind::Cylinder,
            initial: StatePoint::cylinder(alpha0, rho0),
            tol: DEFAULT_TOL,
            warnings: Vec::new(),
        })
    }

    pub fn torus(gamma: f64, r0: f64, alpha0: f64, z0: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be finite, got {gamma}")));
        }
        check_radial(r0)?;
        let mut warnings = Vec::new();
        if looks_rational(gamma, RATIONALITY_DEPTH) {
            warnings.push(format!("gamma = {gamma} looks rational; almost periods may be exact periods"));
        }
        Ok(Self {
            kind: SystemKind::Torus { gamma },
            initial: StatePoint::torus(r0, alpha0, z0),
            tol: DEFAULT_TOL,
            warnings,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn with_initial(mut self, x: StatePoint) -> Result<Self> {
        check_state(&self.kind, &x)?;
        self.initial = x;
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn base_period(&self) -> f64 {
        self.kind.base_period()
    }
}

/// Product of a deterministic torus flow with a scalar random cocycle.
pub fn product_cocycle(flow: TorusFlow, g: &SystemDescriptor) -> Result<SystemDescriptor> {
    let z0 = match (&g.kind, g.initial) {
        (SystemKind::Ou | SystemKind::Pitchfork, StatePoint::Real(z)) => z,
        _ => {
            return Err(Error::Config(format!(
                "product random factor must be a scalar system, got {}",
                g.name()
            )))
        }
    };
    let mut warnings = g.warnings.clone();
    if looks_rational(flow.t1 / flow.t2, RATIONALITY_DEPTH) {
        warnings.push(format!(
            "t1/t2 = {} looks rational; the torus flow may be periodic",
            flow.t1 / flow.t2
        ));
    }
    Ok(SystemDescriptor {
        kind: SystemKind::Product { flow, inner: Box::new(g.kind.clone()) },
        initial: StatePoint::product(0.0, 0.0, z0),
        tol: g.tol,
        warnings,
    })
}

fn check_radial(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("radial component must be positive, got {r}")))
    }
}

fn mismatch(kind: &SystemKind, x: &StatePoint) -> Error {
    Error::KindMismatch { system: kind.name().into(), state: x.to_string() }
}

fn check_state(kind: &SystemKind, x: &StatePoint) -> Result<()> {
    let ok = match (kind, x) {
        (SystemKind::Ou | SystemKind::Pitchfork, StatePoint::Real(v)) => v.is_finite(),
        (SystemKind::Cylinder, StatePoint::Cylinder { rho, .. }) => *rho > 0.0,
        (SystemKind::Torus { .. }, StatePoint::Torus { r, .. }) => *r > 0.0,
        (SystemKind::Product { .. }, StatePoint::Product { z, .. }) => z.is_finite(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(mismatch(kind, x))
    }
}

/// Metric on the phase space of `desc`; both points must belong to it.
pub fn phase_metric(desc: &SystemDescriptor, a: &StatePoint, b: &StatePoint) -> Result<f64> {
    for p in [a, b] {
        if !same_kind(&desc.kind, p) {
            return Err(mismatch(&desc.kind, p));
        }
    }
    a.distance(b)
}

fn same_kind(kind: &SystemKind, x: &StatePoint) -> bool {
    matches!(
        (kind, x),
        (SystemKind::Ou | SystemKind::Pitchfork, StatePoint::Real(_))
            | (SystemKind::Cylinder, StatePoint::Cylinder { .. })
            | (SystemKind::Torus { .. }, StatePoint::Torus { .. })
            | (SystemKind::Product { .. }, StatePoint::Product { .. })
    )
}

/// `Φ(t, ω)x` for `t ≥ 0`.
pub fn apply_cocycle(desc: &SystemDescriptor, t: f64, path: &BrownianPath, x: &StatePoint) -> Result<StatePoint> {
    cocycle(&desc.kind, t, path, x)
}

fn cocycle(kind: &SystemKind, t: f64, path: &BrownianPath, x: &StatePoint) -> Result<StatePoint> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    check_state(kind, x)?;
    path.grid_index(t)?;
    if t == 0.0 {
        return Ok(*x);
    }
    Ok(match (kind, *x) {
        (SystemKind::Ou, StatePoint::Real(v)) => StatePoint::Real(ou_flow(t, path, v)?),
        (SystemKind::Pitchfork, StatePoint::Real(v)) => StatePoint::Real(radial_flow(t, path, v)?),
        (SystemKind::Cylinder, StatePoint::Cylinder { alpha, rho }) => StatePoint::Cylinder {
            alpha: frac_nearest(alpha + t / TAU),
            rho: radial_flow(t, path, rho)?,
        },
        (SystemKind::Torus { gamma }, StatePoint::Torus { r, alpha, z }) => StatePoint::Torus {
            r: radial_flow(t, path, r)?,
            alpha: frac_nearest(alpha + t),
            z: frac_nearest(z + gamma * t),
        },
        (SystemKind::Product { flow, inner }, StatePoint::Product { x, y, z }) => {
            let (x, y) = flow.advance(t, x, y);
            let StatePoint::Real(z) = cocycle(inner, t, path, &StatePoint::Real(z))? else {
                unreachable!("scalar cocycle returns a real state")
            };
            StatePoint::Product { x, y, z }
        }
        _ => return Err(mismatch(kind, x)),
    })
}

/// `e^{-t}x + ∫_0^t e^{-(t-s)} dB_s`.
fn ou_flow(t: f64, path: &BrownianPath, x: f64) -> Result<f64> {
    Ok((-t).exp() * x + ito_integral(path, |s| (s - t).exp(), 0.0, t)?)
}

/// `x e^{t+B_t} / (1 + 2x²∫_0^t e^{2s+2B_s} ds)^{1/2}`.
fn radial_flow(t: f64, path: &BrownianPath, x: f64) -> Result<f64> {
    let bt = path.value_at(path.grid_index(t)?);
    let j = exp_integral(path, 2.0, 2.0, 0.0, t)?;
    Ok(x * (t + bt).exp() / (1.0 + 2.0 * x * x * j).sqrt())
}

/// How the stationary radial value is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialConvention {
    /// `(2∫_{-∞}^0 e^{2s+2B_s} ds)^{-1/2}`; invariant under the radial cocycle.
    FactorTwo,
    /// `(∫_{-∞}^0 e^{2s+2B_s} ds)^{-1/2}`; kept only as a regression guard.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectionLabel {
    Stationary,
    RandomPeriodic(f64),
    RandomAlmostPeriodic,
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectionLabel::Stationary => write!(f, "stationary"),
            SectionLabel::RandomPeriodic(tau) => write!(f, "random_periodic({tau})"),
            SectionLabel::RandomAlmostPeriodic => write!(f, "random_almost_periodic"),
        }
    }
}

pub type Evaluator = Arc<dyn Fn(f64, &BrownianPath) -> Result<StatePoint> + Send + Sync>;
pub type InitialMap = Arc<dyn Fn(&BrownianPath) -> Result<StatePoint> + Send + Sync>;

/// A random section `H(t, ω)`.
#[derive(Clone)]
pub struct SolutionSection {
    pub descriptor: SystemDescriptor,
    pub label: SectionLabel,
    evaluator: Evaluator,
}

impl fmt::Debug for SolutionSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolutionSection")
            .field("system", &self.descriptor.name())
            .field("label", &self.label)
            .finish()
    }
}

impl SolutionSection {
    pub fn new(descriptor: SystemDescriptor, label: SectionLabel, evaluator: Evaluator) -> Self {
        Self { descriptor, label, evaluator }
    }

    pub fn eval(&self, t: f64, path: &BrownianPath) -> Result<StatePoint> {
        (self.evaluator)(t, path)
    }
}

fn label_for(kind: &SystemKind) -> SectionLabel {
    match kind {
        SystemKind::Ou | SystemKind::Pitchfork => SectionLabel::Stationary,
        SystemKind::Cylinder => SectionLabel::RandomPeriodic(TAU),
        SystemKind::Torus { .. } | SystemKind::Product { .. } => SectionLabel::RandomAlmostPeriodic,
    }
}

/// The closed-form solution section of a catalog system.
pub fn reference_section(desc: &SystemDescriptor) -> SolutionSection {
    reference_section_with(desc, RadialConvention::FactorTwo)
}

pub fn reference_section_with(desc: &SystemDescriptor, convention: RadialConvention) -> SolutionSection {
    let d = desc.clone();
    let evaluator: Evaluator = Arc::new(move |t, path| {
        let shifted = path.wiener_shift(t)?;
        reference_value(&d.kind, &d.initial, d.tol, convention, t, &shifted)
    });
    SolutionSection::new(desc.clone(), label_for(&desc.kind), evaluator)
}

/// Section value at time `t`, given the already shifted path `θ_t ω`.
fn reference_value(
    kind: &SystemKind,
    initial: &StatePoint,
    tol: f64,
    convention: RadialConvention,
    t: f64,
    shifted: &BrownianPath,
) -> Result<StatePoint> {
    let radial = || -> Result<f64> {
        let i = pullback_exp_integral(shifted, 2.0, 2.0, tol)?;
        Ok(match convention {
            RadialConvention::FactorTwo => (2.0 * i).sqrt().recip(),
            RadialConvention::Unscaled => i.sqrt().recip(),
        })
    };
    Ok(match (kind, *initial) {
        (SystemKind::Ou, _) => StatePoint::Real(pullback_ito_integral(shifted, 1.0, tol)?),
        (SystemKind::Pitchfork, _) => StatePoint::Real(radial()?),
        (SystemKind::Cylinder, StatePoint::Cylinder { alpha, .. }) => {
            StatePoint::Cylinder { alpha: frac_nearest(alpha + t / TAU), rho: radial()? }
        }
        (SystemKind::Torus { gamma }, StatePoint::Torus { alpha, z, .. }) => StatePoint::Torus {
            r: radial()?,
            alpha: frac_nearest(alpha + t),
            z: frac_nearest(z + gamma * t),
        },
        (SystemKind::Product { flow, inner }, StatePoint::Product { x, y, .. }) => {
            let (x, y) = flow.advance(t, x, y);
            let StatePoint::Real(z) = reference_value(inner, &StatePoint::Real(0.0), tol, convention, t, shifted)?
            else {
                unreachable!("scalar section returns a real state")
            };
            StatePoint::Product { x, y, z }
        }
        _ => return Err(mismatch(kind, initial)),
    })
}

/// `H0(ω)` = the reference section at time 0.
pub fn stationary_initial(desc: &SystemDescriptor) -> InitialMap {
    let section = reference_section(desc);
    Arc::new(move |path| section.eval(0.0, path))
}

/// A constant initial value.
pub fn constant_initial(x: StatePoint) -> InitialMap {
    Arc::new(move |_| Ok(x))
}

/// `H(t, ω) = Φ(t, ω) H0(ω)` for `t ≥ 0`.
pub fn section_from_initial(desc: &SystemDescriptor, h0: InitialMap) -> SolutionSection {
    let d = desc.clone();
    let evaluator: Evaluator = Arc::new(move |t, path| {
        let x = h0(path)?;
        apply_cocycle(&d, t, path, &x)
    });
    SolutionSection::new(desc.clone(), label_for(&desc.kind), evaluator)
}
