//! Flow-invariant probability measures on the unit cotangent bundle, their
//! base projections, and the measure-side functionals: infima of ∫a dμ over
//! invariant measures and over quantum-limit candidates, plus the inverse
//! problem of recovering limits from eigenfunction sequences.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basequad::{liouville_average, nodes, QuadSpec};
use crate::birkhoff::birkhoff_average;
use crate::error::{Error, Result};
use crate::flow::{FlowSettings, GeodesicFlow, PeriodicOrbit};
use crate::observable::Observable;
use crate::quad::golden_min;
use crate::region::Region;
use crate::report::{Certificate, Direction, FunctionalReport};
use crate::spectral::{eigenbasis, mass_matrices, min_eigenpair, BasisLabel, Parity, SpectrumTable};
use crate::surface::{cross, norm, PhasePoint, State, SurfaceKind, SurfaceModel, Vec3};

/// Density factor 1 + amplitude·cos(m·x + phase) of a torus direction measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub m: [i64; 2],
    pub amplitude: f64,
    pub phase: f64,
}

impl Modulation {
    fn density(&self, p: &Vec3) -> f64 {
        1.0 + self.amplitude * (self.m[0] as f64 * p[0] + self.m[1] as f64 * p[1] + self.phase).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    /// Uniform measure along a periodic orbit over one period.
    DiracPeriodicOrbit {
        start: PhasePoint,
        period: f64,
    },
    Liouville,
    /// Base measure (1/4π²)ρ(x)dx with all velocities equal to (cos θ, sin θ).
    TorusDirection {
        angle: f64,
        modulation: Option<Modulation>,
    },
    /// Nonnegative combination; the weights need not sum to one.
    Mixture {
        weights: Vec<f64>,
        components: Vec<InvariantMeasure>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasure {
    pub model: SurfaceModel,
    #[serde(flatten)]
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSettings {
    pub nodes_per_unit_time: usize,
    pub spec: QuadSpec,
    /// Directions per base node for Liouville averages of non-pullbacks.
    pub directions: usize,
    pub flow: FlowSettings,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        Self { nodes_per_unit_time: 64, spec: QuadSpec::default(), directions: 64, flow: FlowSettings::default() }
    }
}

const ORBIT_SAMPLES: usize = 256;
const ORBIT_TOL: f64 = 1e-6;

impl InvariantMeasure {
    /// Dirac along the orbit of z; rejects starts that do not close up after `period`.
    pub fn dirac(model: SurfaceModel, start: PhasePoint, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::Precondition("period must be positive".into()));
        }
        let flow = GeodesicFlow::new(model);
        let z = model.to_state(&start);
        let end = flow.flow_state(&z, period)?;
        let defect = flow.defect(&z, &end);
        if defect > 1e-6 {
            return Err(Error::Precondition(format!("orbit does not close after T = {period} (defect {defect:.2e})")));
        }
        Ok(Self { model, variant: Variant::DiracPeriodicOrbit { start, period } })
    }

    pub fn from_orbit(model: SurfaceModel, orbit: &PeriodicOrbit) -> Result<Self> {
        Self::dirac(model, orbit.start, orbit.period)
    }

    pub fn liouville(model: SurfaceModel) -> Self {
        Self { model, variant: Variant::Liouville }
    }

    pub fn torus_direction(angle: f64, modulation: Option<Modulation>) -> Result<Self> {
        if let Some(md) = modulation {
            let v = [angle.cos(), angle.sin()];
            let mv = md.m[0] as f64 * v[0] + md.m[1] as f64 * v[1];
            if mv.abs() > 1e-9 {
                return Err(Error::Precondition("modulation must be constant along the direction".into()));
            }
            if (md.m[0] + md.m[1]).rem_euclid(2) != 0 {
                return Err(Error::Precondition("modulation frequency must have m₁ ≡ m₂ mod 2".into()));
            }
            if !(0.0..=1.0).contains(&md.amplitude) {
                return Err(Error::Precondition("modulation amplitude must lie in [0, 1]".into()));
            }
        }
        Ok(Self { model: SurfaceModel::torus(), variant: Variant::TorusDirection { angle, modulation } })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<InvariantMeasure>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::Precondition("one weight per component".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Precondition("mixture weights must be nonnegative".into()));
        }
        let model = components.first().map(|c| c.model).unwrap_or(SurfaceModel::sphere());
        if components.iter().any(|c| c.model != model) {
            return Err(Error::Precondition("mixture components live on different surfaces".into()));
        }
        Ok(Self { model, variant: Variant::Mixture { weights, components } })
    }

    /// The zero measure on a surface.
    pub fn zero(model: SurfaceModel) -> Self {
        Self { model, variant: Variant::Mixture { weights: Vec::new(), components: Vec::new() } }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.variant {
            Variant::Mixture { weights, components } => {
                weights.iter().zip(components).map(|(w, c)| w * c.total_mass()).sum()
            }
            _ => 1.0,
        }
    }

    pub fn describe(&self) -> String {
        match &self.variant {
            Variant::DiracPeriodicOrbit { start, period } => format!(
                "dirac(x=({:.6},{:.6}),xi=({:.6},{:.6}),T={:.6})",
                start.x[0], start.x[1], start.xi[0], start.xi[1], period
            ),
            Variant::Liouville => "liouville".into(),
            Variant::TorusDirection { angle, modulation: None } => format!("direction({angle:.6})"),
            Variant::TorusDirection { angle, modulation: Some(m) } => {
                format!("direction({angle:.6},m=({},{}),amp={},phase={:.6})", m.m[0], m.m[1], m.amplitude, m.phase)
            }
            Variant::Mixture { weights, components } => {
                let parts: Vec<String> =
                    weights.iter().zip(components).map(|(w, c)| format!("{w}*{}", c.describe())).collect();
                format!("mixture({})", parts.join(","))
            }
        }
    }

    /// Base measure of a region.
    pub fn region_mass(&self, region: &Region, settings: &MeasureSettings) -> Result<f64> {
        measure_eval(self, &Observable::indicator(region), settings)
    }

    /// |μ(a∘φ_s) − μ(a)|.
    pub fn invariance_defect(&self, a: &Observable, s: f64, settings: &MeasureSettings) -> Result<f64> {
        let flow = GeodesicFlow::with_settings(self.model, settings.flow);
        Ok((measure_eval(self, &a.shifted(&flow, s), settings)? - measure_eval(self, a, settings)?).abs())
    }
}

/// ∫ a dμ.
pub fn measure_eval(mu: &InvariantMeasure, a: &Observable, settings: &MeasureSettings) -> Result<f64> {
    let model = mu.model;
    match &mu.variant {
        Variant::DiracPeriodicOrbit { start, period } => birkhoff_average(
            &GeodesicFlow::with_settings(model, settings.flow),
            a,
            start,
            *period,
            settings.nodes_per_unit_time,
        ),
        Variant::Liouville => Ok(liouville_average(&model, a, &settings.spec, settings.directions)),
        Variant::TorusDirection { angle, modulation } => {
            let spec = match modulation {
                Some(m) => QuadSpec {
                    degree: settings.spec.degree.max(2 * m.m[0].unsigned_abs().max(m.m[1].unsigned_abs()) as usize),
                    ..settings.spec
                },
                None => settings.spec,
            };
            let ns = nodes(&model, a, &spec);
            let v = [angle.cos(), angle.sin(), 0.0];
            let total = ns.integrate(|p| {
                let rho = modulation.map_or(1.0, |m| m.density(p));
                rho * a.eval_state(&State { p: *p, v })
            });
            Ok(total / model.total_area())
        }
        Variant::Mixture { weights, components } => {
            let mut s = 0.0;
            for (w, c) in weights.iter().zip(components) {
                if *w != 0.0 {
                    s += w * measure_eval(c, a, settings)?;
                }
            }
            Ok(s)
        }
    }
}

/// Base projection π_*μ, evaluated on pullback observables.
#[derive(Debug, Clone, Copy)]
pub struct Pushforward<'a> {
    pub source: &'a InvariantMeasure,
}

pub fn pushforward(mu: &InvariantMeasure) -> Pushforward<'_> {
    Pushforward { source: mu }
}

impl Pushforward<'_> {
    pub fn eval(&self, f: &Observable, settings: &MeasureSettings) -> Result<f64> {
        if !f.is_pullback() {
            return Err(Error::Precondition("pushforwards act on functions of the base point".into()));
        }
        measure_eval(self.source, f, settings)
    }

    pub fn region(&self, region: &Region, settings: &MeasureSettings) -> Result<f64> {
        self.eval(&Observable::indicator(region), settings)
    }

    pub fn total(&self, settings: &MeasureSettings) -> Result<f64> {
        self.eval(&Observable::Constant(1.0), settings)
    }
}

fn orbit_samples(flow: &GeodesicFlow, start: &PhasePoint, period: f64) -> Result<Vec<State>> {
    let z = flow.model.to_state(start);
    let orbit = flow.orbit(&z, period)?;
    Ok((0..ORBIT_SAMPLES).map(|i| orbit.at(period * i as f64 / ORBIT_SAMPLES as f64)).collect())
}

/// One-sided Hausdorff distance from samples of A to the continuous orbit B.
fn directed_gap(flow: &GeodesicFlow, a: &[State], b_start: &PhasePoint, b_period: f64) -> Result<f64> {
    let zb = flow.model.to_state(b_start);
    let orbit = flow.orbit(&zb, b_period)?;
    let h = b_period / ORBIT_SAMPLES as f64;
    let bs: Vec<State> = (0..ORBIT_SAMPLES).map(|i| orbit.at(h * i as f64)).collect();
    let mut worst: f64 = 0.0;
    for sa in a {
        let (j, d0) =
            bs.iter().enumerate().map(|(j, sb)| (j, flow.defect(sa, sb))).min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        let mut d = d0;
        if d0 < 0.5 {
            let t0 = h * j as f64;
            let (_, dm) = golden_min(|t| flow.defect(sa, &orbit.at(t.rem_euclid(b_period))), t0 - h, t0 + h, 1e-12);
            d = d.min(dm);
        }
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Whether two periodic orbits trace the same set in phase space.
pub fn same_orbit(model: SurfaceModel, a: (&PhasePoint, f64), b: (&PhasePoint, f64)) -> Result<bool> {
    let flow = GeodesicFlow::new(model);
    let sa = orbit_samples(&flow, a.0, a.1)?;
    if directed_gap(&flow, &sa, b.0, b.1)? > ORBIT_TOL {
        return Ok(false);
    }
    let sb = orbit_samples(&flow, b.0, b.1)?;
    Ok(directed_gap(&flow, &sb, a.0, a.1)? <= ORBIT_TOL)
}

/// Splits μ = μ₁ + a·δ_γ where a is the weight μ puts on the orbit γ itself.
pub fn decompose_along(mu: &InvariantMeasure, orbit: &PeriodicOrbit) -> Result<(InvariantMeasure, f64)> {
    match &mu.variant {
        Variant::DiracPeriodicOrbit { start, period } => {
            if same_orbit(mu.model, (start, *period), (&orbit.start, orbit.period))? {
                Ok((InvariantMeasure::zero(mu.model), 1.0))
            } else {
                Ok((mu.clone(), 0.0))
            }
        }
        // Absolutely continuous across orbits: no atom on a single orbit.
        Variant::Liouville | Variant::TorusDirection { .. } => Ok((mu.clone(), 0.0)),
        Variant::Mixture { weights, components } => {
            let mut a = 0.0;
            let mut rest_w = Vec::new();
            let mut rest_c = Vec::new();
            for (w, c) in weights.iter().zip(components) {
                let (rest, ac) = decompose_along(c, orbit)?;
                a += w * ac;
                if rest.total_mass() > 0.0 {
                    rest_w.push(*w);
                    rest_c.push(rest);
                }
            }
            Ok((
                InvariantMeasure { model: mu.model, variant: Variant::Mixture { weights: rest_w, components: rest_c } },
                a,
            ))
        }
    }
}

/// Grid resolution of the built-in measure families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySettings {
    /// Sphere: step of the great-circle normal's polar angle, in degrees.
    pub inclination_step_deg: f64,
    /// Sphere: step of the normal's longitude, in degrees.
    pub azimuth_step_deg: f64,
    /// Torus: largest |p|, |q| of rational directions (p, q).
    pub torus_height: i64,
    /// Torus: parallel closed geodesics per rational direction.
    pub torus_offsets: usize,
    /// Torus: largest |mᵢ| of direction-measure modulations.
    pub torus_modulation: i64,
    /// Revolution: launch angles and longitudes from the widest parallel.
    pub revolution_angles: usize,
    pub revolution_longitudes: usize,
}

impl Default for FamilySettings {
    fn default() -> Self {
        Self {
            inclination_step_deg: 1.0,
            azimuth_step_deg: 5.0,
            torus_height: 3,
            torus_offsets: 64,
            torus_modulation: 4,
            revolution_angles: 72,
            revolution_longitudes: 36,
        }
    }
}

fn split_top(text: &str, sep: char) -> Vec<&str> {
    let (mut depth, mut start, mut out) = (0i32, 0, Vec::new());
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

fn measure_atom(model: SurfaceModel, text: &str) -> Result<InvariantMeasure> {
    let bad = |msg: &str| Error::Parse { pos: 0, msg: format!("{msg} in `{text}`") };
    if text == "liouville" {
        return Ok(InvariantMeasure::liouville(model));
    }
    let open = text.find('(').ok_or_else(|| bad("expected `name(args)`"))?;
    let body = text[open + 1..].strip_suffix(')').ok_or_else(|| bad("expected `)`"))?;
    let args: Vec<f64> = body
        .split(',')
        .map(|a| crate::region::parse_number(a.trim()).map_err(|_| bad("expected numbers")))
        .collect::<Result<_>>()?;
    match (&text[..open], args.as_slice()) {
        ("great_circle", &[a, b, c]) if model.is_sphere() => great_circle([a, b, c]),
        ("torus_direction", &[angle]) if model.is_torus() => InvariantMeasure::torus_direction(angle, None),
        ("torus_orbit", &[x1, x2, p, q]) if model.is_torus() => {
            if p.fract() != 0.0 || q.fract() != 0.0 || (p == 0.0 && q == 0.0) {
                return Err(bad("torus_orbit needs integer (p, q) ≠ 0"));
            }
            let start = model.phase_point(0, [x1, x2], [p, q])?;
            InvariantMeasure::dirac(model, start, TAU * p.hypot(q))
        }
        (name, _) => {
            Err(bad(&format!("`{name}` with {} arguments is not a measure on the {}", args.len(), model.name())))
        }
    }
}

/// Parses `liouville`, `great_circle(a,b,c)` (sphere), `torus_direction(θ)`,
/// `torus_orbit(x₁,x₂,p,q)` (torus) or a sum `w₁*M₁ + w₂*M₂ + …`.
pub fn parse_measure(model: SurfaceModel, text: &str) -> Result<InvariantMeasure> {
    let terms = split_top(text, '+');
    if terms.len() == 1 && !terms[0].contains('*') {
        return measure_atom(model, terms[0].trim());
    }
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for t in terms {
        let t = t.trim();
        let (w, m) = match t.split_once('*') {
            Some((w, m)) if !w.contains('(') => (crate::region::parse_number(w.trim())?, m.trim()),
            _ => (1.0, t),
        };
        weights.push(w);
        comps.push(measure_atom(model, m)?);
    }
    InvariantMeasure::mixture(weights, comps)
}

/// Dirac along the great circle with unit normal n.
pub fn great_circle(n: Vec3) -> Result<InvariantMeasure> {
    let model = SurfaceModel::sphere();
    let nn = norm(&n);
    if !(nn > 0.0) {
        return Err(Error::Precondition("normal must be nonzero".into()));
    }
    let n = [n[0] / nn, n[1] / nn, n[2] / nn];
    let helper = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let p = cross(&helper, &n);
    let pn = norm(&p);
    let p = [p[0] / pn, p[1] / pn, p[2] / pn];
    let v = cross(&n, &p);
    let start = model.from_state(&State { p, v });
    InvariantMeasure::dirac(model, start, TAU)
}

fn coprime_directions(height: i64) -> Vec<[i64; 2]> {
    let gcd = |mut a: i64, mut b: i64| {
        a = a.abs();
        b = b.abs();
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let mut v = Vec::new();
    for p in -height..=height {
        for q in -height..=height {
            if (p, q) != (0, 0) && gcd(p, q) == 1 {
                v.push([p, q]);
            }
        }
    }
    v
}

fn torus_direction_family(settings: &FamilySettings) -> Result<Vec<InvariantMeasure>> {
    let mut out = Vec::new();
    let dirs = coprime_directions(settings.torus_height.max(settings.torus_modulation));
    for d in &dirs {
        let angle = (d[1] as f64).atan2(d[0] as f64);
        out.push(InvariantMeasure::torus_direction(angle, None)?);
        // Modulations constant along d: integer multiples of d⊥ with even coordinate sum.
        for t in 1..=settings.torus_modulation {
            let m = [-d[1] * t, d[0] * t];
            if m[0].abs().max(m[1].abs()) > settings.torus_modulation || (m[0] + m[1]).rem_euclid(2) != 0 {
                continue;
            }
            out.push(InvariantMeasure::torus_direction(angle, Some(Modulation { m, amplitude: 1.0, phase: 0.0 }))?);
        }
    }
    Ok(out)
}

fn widest_parallel(model: &SurfaceModel) -> f64 {
    let SurfaceKind::Revolution { profile } = model.kind else { return PI / 2.0 };
    golden_min(|s| -profile.eval(s).0, 0.0, profile.length(), 1e-12).0
}

/// Invariant measures over which infima of ∫a dμ are taken.
pub fn invariant_family(model: SurfaceModel, settings: &FamilySettings) -> Result<Vec<InvariantMeasure>> {
    let mut out = vec![InvariantMeasure::liouville(model)];
    match model.kind {
        SurfaceKind::Sphere => {
            let ni = (180.0 / settings.inclination_step_deg).round() as usize;
            let na = (360.0 / settings.azimuth_step_deg).round() as usize;
            for i in 0..=ni {
                let inc = PI * i as f64 / ni as f64;
                let naz = if i == 0 || i == ni { 1 } else { na };
                for j in 0..naz {
                    let az = TAU * j as f64 / na as f64;
                    out.push(great_circle([inc.sin() * az.cos(), inc.sin() * az.sin(), inc.cos()])?);
                }
            }
        }
        SurfaceKind::Torus => {
            for d in coprime_directions(settings.torus_height) {
                let len = ((d[0] * d[0] + d[1] * d[1]) as f64).sqrt();
                let (u, nrm) = ([d[0] as f64 / len, d[1] as f64 / len], [-d[1] as f64 / len, d[0] as f64 / len]);
                let spacing = TAU / len;
                for j in 0..settings.torus_offsets {
                    let o = spacing * j as f64 / settings.torus_offsets as f64;
                    let start =
                        model.phase_point(0, [(o * nrm[0]).rem_euclid(TAU), (o * nrm[1]).rem_euclid(TAU)], u)?;
                    out.push(InvariantMeasure::dirac(model, start, TAU * len)?);
                }
            }
            out.extend(torus_direction_family(settings)?);
        }
        SurfaceKind::Revolution { .. } => {
            let s0 = widest_parallel(&model);
            let flow = GeodesicFlow::new(model);
            for j in 0..settings.revolution_longitudes {
                let lon = TAU * j as f64 / settings.revolution_longitudes as f64;
                for i in 0..settings.revolution_angles {
                    // Quarter-step offset keeps launches off the meridians, which run into the poles.
                    let ang = TAU * (i as f64 + 0.25) / settings.revolution_angles as f64;
                    let z = model.phase_point_angle(0, [s0, lon], ang)?;
                    // Every geodesic of the demo surface closes at 2π; check rather than assume.
                    match flow.detect_period(&z, 2.2 * PI, 1e-6)? {
                        Some(po) => out.push(InvariantMeasure::from_orbit(model, &po)?),
                        None => {
                            return Err(Error::Numeric(format!("no closed orbit from angle {ang} at longitude {lon}")))
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// An eigenfunction density φ² dx recorded as an empirical limit candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCandidate {
    pub label: BasisLabel,
    pub lambda: f64,
    /// Mean region moments of its cluster over the dictionary.
    pub moments: Vec<f64>,
    /// Eigenvalues of the cluster members.
    pub subsequence: Vec<f64>,
}

/// Quantum-limit candidates: analytic invariant measures and empirical densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLCandidateFamily {
    pub model: SurfaceModel,
    pub analytic: Vec<InvariantMeasure>,
    pub empirical: Vec<EmpiricalCandidate>,
    /// Whether the analytic members exhaust the invariant measures.
    pub analytic_is_complete: bool,
}

/// Known limit candidates. On the sphere every invariant measure is a limit, so
/// the family is the full invariant family; on the torus it is Liouville plus
/// direction measures with two-mode modulations; elsewhere only Liouville.
pub fn ql_family(model: SurfaceModel, settings: &FamilySettings) -> Result<QLCandidateFamily> {
    let (analytic, complete) = match model.kind {
        SurfaceKind::Sphere => (invariant_family(model, settings)?, true),
        SurfaceKind::Torus => {
            let mut v = vec![InvariantMeasure::liouville(model)];
            v.extend(torus_direction_family(settings)?);
            (v, false)
        }
        SurfaceKind::Revolution { .. } => (vec![InvariantMeasure::liouville(model)], false),
    };
    Ok(QLCandidateFamily { model, analytic, empirical: Vec::new(), analytic_is_complete: complete })
}

/// ∫ a dμ with the modulation phase of a direction measure chosen to minimize it.
fn eval_min_phase(
    mu: &InvariantMeasure,
    a: &Observable,
    settings: &MeasureSettings,
) -> Result<(f64, InvariantMeasure)> {
    if let Variant::TorusDirection { angle, modulation: Some(md) } = &mu.variant {
        // ∫a(1 + A cos(m·x + φ)) = c₀ + A(c cos φ − s sin φ), minimized at φ = π + atan2(−s, c).
        let with = |phase: f64, amp: f64| InvariantMeasure {
            model: mu.model,
            variant: Variant::TorusDirection {
                angle: *angle,
                modulation: Some(Modulation { amplitude: amp, phase, ..*md }),
            },
        };
        let c0 = measure_eval(&with(0.0, 0.0), a, settings)?;
        let c = measure_eval(&with(0.0, 1.0), a, settings)? - c0;
        let s = -(measure_eval(&with(PI / 2.0, 1.0), a, settings)? - c0);
        let phase = PI + (-s).atan2(c);
        let best = with(phase, md.amplitude);
        return Ok((c0 - md.amplitude * c.hypot(s), best));
    }
    Ok((measure_eval(mu, a, settings)?, mu.clone()))
}

fn family_infimum(
    family: &[InvariantMeasure],
    a: &Observable,
    settings: &MeasureSettings,
) -> Result<Option<(usize, f64, InvariantMeasure)>> {
    let vals: Vec<Result<(f64, InvariantMeasure)>> =
        family.par_iter().map(|mu| eval_min_phase(mu, a, settings)).collect();
    let mut best: Option<(usize, f64, InvariantMeasure)> = None;
    for (i, r) in vals.into_iter().enumerate() {
        let (v, m) = r?;
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((i, v, m));
        }
    }
    Ok(best)
}

/// inf over the family of ∫ a dμ; an upper bound of the infimum over all invariant measures.
pub fn g1_second(a: &Observable, family: &[InvariantMeasure], settings: &MeasureSettings) -> Result<FunctionalReport> {
    let Some((i, v, m)) = family_infimum(family, a, settings)? else {
        return Err(Error::Precondition("measure family is empty".into()));
    };
    let mut r = FunctionalReport::new("g1_second", m.model.name(), &a.describe(), v, Direction::UpperBound);
    r.certificate = Certificate::Measure { index: i, description: m.describe() };
    Ok(r)
}

/// inf of π_*ν(a) over the limit candidates.
pub fn g1_prime(a: &Observable, family: &QLCandidateFamily, settings: &MeasureSettings) -> Result<FunctionalReport> {
    let analytic = family_infimum(&family.analytic, a, settings)?;
    let mut best = analytic.map(|(i, v, m)| (v, Certificate::Measure { index: i, description: m.describe() }));
    if !family.empirical.is_empty() {
        if !a.is_pullback() {
            return Err(Error::Precondition(
                "empirical candidates are base densities; the observable must be a pullback".into(),
            ));
        }
        for (j, e) in family.empirical.iter().enumerate() {
            let v = empirical_mass(family.model, e, a, &settings.spec)?;
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((
                    v,
                    Certificate::Measure {
                        index: family.analytic.len() + j,
                        description: format!("empirical({:?})", e.label),
                    },
                ));
            }
        }
    }
    let Some((v, cert)) = best else {
        return Err(Error::Precondition("candidate family is empty".into()));
    };
    let mut r = FunctionalReport::new("g1_prime", family.model.name(), &a.describe(), v, Direction::UpperBound);
    r.certificate = cert;
    if !family.analytic_is_complete {
        r.warnings.push("infimum over known candidates only".into());
    }
    Ok(r)
}

fn basis_index(table: &SpectrumTable, label: &BasisLabel) -> Result<usize> {
    table
        .basis
        .iter()
        .position(|b| b == label)
        .ok_or_else(|| Error::Precondition(format!("{label:?} is not in the table")))
}

/// ∫ a φ² dx for an empirical candidate.
pub fn empirical_mass(model: SurfaceModel, e: &EmpiricalCandidate, a: &Observable, spec: &QuadSpec) -> Result<f64> {
    let lmax = match e.label {
        BasisLabel::Harmonic { l, .. } => l as f64,
        BasisLabel::Lattice { k, .. } => ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt(),
    };
    let table = eigenbasis(&model, lmax)?;
    let idx = basis_index(&table, &e.label)?;
    Ok(moments(&table, &[idx], std::slice::from_ref(a), spec)[0][0])
}

/// ∫ a_r φ_i² for each basis index i and each weight a_r.
fn moments(table: &SpectrumTable, idx: &[usize], weights: &[Observable], spec: &QuadSpec) -> Vec<Vec<f64>> {
    let spec = QuadSpec { degree: spec.degree.max(table.quad_spec().degree), ..*spec };
    let per_region: Vec<Vec<f64>> = weights
        .par_iter()
        .map(|w| {
            let ns = nodes(&table.model, w, &spec);
            let mut acc = vec![0.0; idx.len()];
            let sparse = 8 * idx.len() < table.len();
            let (mut vals, mut scratch) = (Vec::new(), Vec::new());
            for (p, wt) in ns.points.iter().zip(&ns.weights) {
                let a = w.eval_base(p) * wt;
                if a == 0.0 {
                    continue;
                }
                if sparse {
                    for (s, &i) in acc.iter_mut().zip(idx) {
                        *s += a * table.eval_one(p, i).powi(2);
                    }
                } else {
                    table.eval_all(p, &mut vals, &mut scratch);
                    for (s, &i) in acc.iter_mut().zip(idx) {
                        *s += a * vals[i] * vals[i];
                    }
                }
            }
            acc
        })
        .collect();
    (0..idx.len()).map(|j| per_region.iter().map(|r| r[j]).collect()).collect()
}

/// Which eigenfunction sequence to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sphere: zonal harmonics p̄_l0.
    Zonal,
    /// Sphere: highest-weight harmonics √2 p̄_ll cos(lλ).
    Sectoral,
    /// Torus: cos(n x₁).
    AxisModes,
    /// Torus: cos(n(x₁ + x₂)).
    DiagonalModes,
}

/// The fixed twelve-region dictionary used to compare densities.
pub fn region_dictionary(model: SurfaceModel) -> Result<Vec<Region>> {
    let texts: &[&str] = match model.kind {
        SurfaceKind::Torus => &[
            "strip(0,1)",
            "strip(0,2)",
            "strip(1,3)",
            "strip(0,pi)",
            "strip(0,1,x2)",
            "strip(0,2,x2)",
            "strip(1,3,x2)",
            "strip(0,pi,x2)",
            "tube(torus_diag,0.3)",
            "tube(torus_diag,0.8)",
            "tube(torus_h,0.5)",
            "tube(torus_v,0.5)",
        ],
        _ => &[
            "cap(lat>=0)",
            "cap(lat>=pi/6)",
            "cap(lat>=pi/3)",
            "cap(lat<=-pi/4)",
            "cap(lat>=-pi/6)",
            "band(|lat|<=pi/12)",
            "band(|lat|<=pi/6)",
            "band(|lat|<=pi/4)",
            "band(|lat|<=pi/3)",
            "tube(meridian,0.3)",
            "tube(meridian,0.8)",
            "tube(equator,0.1)",
        ],
    };
    texts.iter().map(|t| Region::parse(model, t)).collect()
}

/// Result of following an eigenfunction sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLimits {
    pub candidates: Vec<EmpiricalCandidate>,
    /// Moment vector of every followed eigenfunction, in sequence order.
    pub trajectory: Vec<(f64, Vec<f64>)>,
    pub diagnostic: String,
}

const CLUSTER_DIAMETER: f64 = 1e-2;
const MIN_CLUSTER: usize = 3;

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Complete-linkage agglomerative clustering with a diameter cap.
fn cluster(points: &[Vec<f64>], diameter: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let link = |a: &[usize], b: &[usize]| {
        a.iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| linf(&points[i], &points[j]))
            .fold(0.0, f64::max)
    };
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = link(&clusters[i], &clusters[j]);
                if d <= diameter && best.is_none_or(|b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let b = clusters.remove(j);
        clusters[i].extend(b);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters
}

/// Follows an eigenfunction sequence through the table, records the dictionary
/// moments of each density and clusters the upper half of the sequence.
pub fn ql_from_sequence(table: &SpectrumTable, strategy: Strategy) -> Result<SequenceLimits> {
    let model = table.model;
    let labels: Vec<BasisLabel> = match (model.kind, strategy) {
        (SurfaceKind::Sphere, Strategy::Zonal) => table
            .basis
            .iter()
            .copied()
            .filter(|b| matches!(b, BasisLabel::Harmonic { m: 0, l, .. } if *l > 0))
            .collect(),
        (SurfaceKind::Sphere, Strategy::Sectoral) => table
            .basis
            .iter()
            .copied()
            .filter(|b| matches!(b, BasisLabel::Harmonic { l, m, parity: Parity::Cos } if l == m))
            .collect(),
        (SurfaceKind::Torus, Strategy::AxisModes) => table
            .basis
            .iter()
            .copied()
            .filter(|b| matches!(b, BasisLabel::Lattice { k: [n, 0], parity: Parity::Cos } if *n > 0))
            .collect(),
        (SurfaceKind::Torus, Strategy::DiagonalModes) => table
            .basis
            .iter()
            .copied()
            .filter(|b| matches!(b, BasisLabel::Lattice { k: [n, m], parity: Parity::Cos } if *n > 0 && n == m))
            .collect(),
        _ => return Err(Error::Unsupported(format!("{strategy:?} does not apply to {}", model.name()))),
    };
    if labels.len() < 2 * MIN_CLUSTER {
        return Err(Error::Precondition("spectral cutoff too small for the sequence".into()));
    }
    let idx: Vec<usize> = labels.iter().map(|l| basis_index(table, l)).collect::<Result<_>>()?;
    let lambdas = table.basis_lambdas();
    let dict: Vec<Observable> = region_dictionary(model)?.iter().map(Observable::indicator).collect();
    let mom = moments(table, &idx, &dict, &QuadSpec::default());
    let trajectory: Vec<(f64, Vec<f64>)> = idx.iter().zip(&mom).map(|(&i, m)| (lambdas[i], m.clone())).collect();

    let tail = labels.len() / 2;
    let tail_pts: Vec<Vec<f64>> = mom[tail..].to_vec();
    let mut candidates = Vec::new();
    for c in cluster(&tail_pts, CLUSTER_DIAMETER) {
        if c.len() < MIN_CLUSTER {
            continue;
        }
        let mut mean = vec![0.0; dict.len()];
        for &i in &c {
            for (s, v) in mean.iter_mut().zip(&tail_pts[i]) {
                *s += v / c.len() as f64;
            }
        }
        let last = *c.last().unwrap() + tail;
        candidates.push(EmpiricalCandidate {
            label: labels[last],
            lambda: lambdas[idx[last]],
            moments: mean,
            subsequence: c.iter().map(|&i| lambdas[idx[i + tail]]).collect(),
        });
    }
    let diagnostic = if candidates.is_empty() {
        format!(
            "no stable cluster: {} tail densities, none with {MIN_CLUSTER} members within diameter {CLUSTER_DIAMETER}",
            tail_pts.len()
        )
    } else {
        format!("{} stable cluster(s) among {} tail densities", candidates.len(), tail_pts.len())
    };
    Ok(SequenceLimits { candidates, trajectory, diagnostic })
}

/// inf over eigenfunctions with λ ≤ Λ of ∫ w φ² for a pullback weight w, from
/// the smallest eigenvalue of each eigenspace's mass matrix.
pub fn g1(weight: &Observable, table: &SpectrumTable) -> Result<FunctionalReport> {
    if !weight.is_pullback() {
        return Err(Error::Precondition("g1 needs a region or a function of the base point".into()));
    }
    let all: Vec<usize> = (0..table.spaces.len()).collect();
    let mats = mass_matrices(table, &all, weight, &table.quad_spec());
    let mut r =
        FunctionalReport::new("g1", table.model.name(), &weight.describe(), f64::INFINITY, Direction::UpperBound);
    let mut cert = (0.0, Vec::new());
    for m in &mats {
        let (v, vec) = min_eigenpair(&m.matrix);
        r.trace.push((m.lambda, v));
        if v < r.value {
            r.value = v;
            cert = (m.lambda, vec);
        }
    }
    r.certificate = Certificate::Eigenvector { lambda: cert.0, coefficients: cert.1 };
    r.truncation = Some(table.lambda_max);
    Ok(r)
}
