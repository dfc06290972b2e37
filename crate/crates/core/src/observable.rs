//! Bounded observables on the unit cotangent bundle: constants, indicators,
//! distance mollifiers, smooth pullbacks and symbols, linear combinations and
//! compositions with the flow.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::GeodesicFlow;
use crate::region::{Region, Symmetry, Topology};
use crate::surface::{cross, PhasePoint, State, SurfaceKind, SurfaceModel};

pub type SmoothFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;

/// A smooth function with known range.
#[derive(Clone)]
pub struct Smooth {
    pub name: String,
    pub f: SmoothFn,
    pub min: f64,
    pub max: f64,
    /// Depends on the base point only.
    pub pullback: bool,
    pub symmetry: Symmetry,
}

impl fmt::Debug for Smooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Smooth({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum Observable {
    Constant(f64),
    Indicator(Region),
    /// Distance mollifier h_k of an open or closed region.
    Mollified {
        region: Region,
        k: f64,
    },
    Smooth(Smooth),
    /// Σ wᵢ aᵢ + offset.
    Composite {
        terms: Vec<(f64, Observable)>,
        offset: f64,
    },
    /// a∘φ_s.
    Shifted {
        inner: Box<Observable>,
        s: f64,
        flow: GeodesicFlow,
    },
}

impl Observable {
    pub fn indicator(region: &Region) -> Self {
        Observable::Indicator(region.clone())
    }

    /// h_k(x) = min(1, k d(x, ωᶜ)) for open ω and max(0, 1 − k d(x, ω)) for closed ω.
    pub fn mollifier(region: &Region, k: f64) -> Result<Self> {
        if region.topology() == Topology::Other {
            return Err(Error::Unsupported(format!("mollifier needs an open or closed region; `{region}` is neither")));
        }
        if !(k > 0.0) {
            return Err(Error::Precondition(format!("mollifier index {k} must be positive")));
        }
        Ok(Observable::Mollified { region: region.clone(), k })
    }

    pub fn base<F: Fn(&State) -> f64 + Send + Sync + 'static>(
        name: &str,
        f: F,
        min: f64,
        max: f64,
        symmetry: Symmetry,
    ) -> Self {
        Observable::Smooth(Smooth { name: name.into(), f: Arc::new(f), min, max, pullback: true, symmetry })
    }

    pub fn symbol<F: Fn(&State) -> f64 + Send + Sync + 'static>(name: &str, f: F, min: f64, max: f64) -> Self {
        Observable::Smooth(Smooth {
            name: name.into(),
            f: Arc::new(f),
            min,
            max,
            pullback: false,
            symmetry: Symmetry::None,
        })
    }

    pub fn shifted(&self, flow: &GeodesicFlow, s: f64) -> Self {
        Observable::Shifted { inner: Box::new(self.clone()), s, flow: *flow }
    }

    pub fn eval_state(&self, st: &State) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Indicator(r) => f64::from(u8::from(r.contains(&st.p))),
            Observable::Mollified { region, k } => mollify(region.topology(), region.sdist(&st.p), *k),
            Observable::Smooth(s) => (s.f)(st),
            Observable::Composite { terms, offset } => {
                terms.iter().map(|(w, a)| w * a.eval_state(st)).sum::<f64>() + offset
            }
            Observable::Shifted { inner, s, flow } => match flow.flow_state(st, *s) {
                Ok(moved) => inner.eval_state(&moved),
                Err(_) => f64::NAN,
            },
        }
    }

    pub fn eval(&self, model: &SurfaceModel, z: &PhasePoint) -> f64 {
        self.eval_state(&model.to_state(z))
    }

    /// Value of a pullback at a base point.
    pub fn eval_base(&self, p: &crate::surface::Vec3) -> f64 {
        self.eval_state(&State { p: *p, v: [0.0; 3] })
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Observable::Constant(c) => (*c, *c),
            Observable::Indicator(_) | Observable::Mollified { .. } => (0.0, 1.0),
            Observable::Smooth(s) => (s.min, s.max),
            Observable::Composite { terms, offset } => terms.iter().fold((*offset, *offset), |(lo, hi), (w, a)| {
                let (a0, a1) = a.bounds();
                if *w >= 0.0 {
                    (lo + w * a0, hi + w * a1)
                } else {
                    (lo + w * a1, hi + w * a0)
                }
            }),
            Observable::Shifted { inner, .. } => inner.bounds(),
        }
    }

    pub fn is_pullback(&self) -> bool {
        match self {
            Observable::Constant(_) | Observable::Indicator(_) | Observable::Mollified { .. } => true,
            Observable::Smooth(s) => s.pullback,
            Observable::Composite { terms, .. } => terms.iter().all(|(_, a)| a.is_pullback()),
            Observable::Shifted { .. } => false,
        }
    }

    /// Constant between crossings of its switch functions.
    pub fn is_piecewise_constant(&self) -> bool {
        match self {
            Observable::Constant(_) | Observable::Indicator(_) => true,
            Observable::Composite { terms, .. } => terms.iter().all(|(_, a)| a.is_piecewise_constant()),
            Observable::Shifted { inner, .. } => inner.is_piecewise_constant(),
            _ => false,
        }
    }

    /// Appends the values whose sign changes mark jumps or kinks of the observable.
    pub fn switches(&self, st: &State, out: &mut Vec<f64>) {
        match self {
            Observable::Constant(_) | Observable::Smooth(_) => {}
            Observable::Indicator(r) => out.push(r.sdist(&st.p)),
            Observable::Mollified { region, k } => {
                let s = region.sdist(&st.p);
                out.push(s);
                if region.topology().is_closed() && region.topology() != Topology::Clopen {
                    out.push(s - 1.0 / k);
                } else {
                    out.push(s + 1.0 / k);
                }
            }
            Observable::Composite { terms, .. } => {
                for (_, a) in terms {
                    a.switches(st, out);
                }
            }
            Observable::Shifted { inner, s, flow } => {
                if let Ok(moved) = flow.flow_state(st, *s) {
                    inner.switches(&moved, out);
                }
            }
        }
    }

    pub fn has_switches(&self) -> bool {
        let mut v = Vec::new();
        let probe = State { p: [1.0, 0.0, 0.0], v: [0.0, 1.0, 0.0] };
        self.switches(&probe, &mut v);
        !v.is_empty()
    }

    pub fn symmetry(&self) -> Symmetry {
        match self {
            Observable::Constant(_) => Symmetry::Any,
            Observable::Indicator(r) | Observable::Mollified { region: r, .. } => r.symmetry(),
            Observable::Smooth(s) => s.symmetry,
            Observable::Composite { terms, .. } => {
                terms.iter().fold(Symmetry::Any, |acc, (_, a)| acc.combine(a.symmetry()))
            }
            Observable::Shifted { .. } => Symmetry::None,
        }
    }

    /// The region behind an indicator or mollifier.
    pub fn region(&self) -> Option<&Region> {
        match self {
            Observable::Indicator(r) | Observable::Mollified { region: r, .. } => Some(r),
            _ => None,
        }
    }

    /// Mollified surrogate used for descent: indicators become h_k.
    pub fn surrogate(&self, k: f64) -> Observable {
        match self {
            Observable::Indicator(r) if r.topology() != Topology::Other => {
                Observable::Mollified { region: r.clone(), k }
            }
            Observable::Composite { terms, offset } => Observable::Composite {
                terms: terms.iter().map(|(w, a)| (*w, a.surrogate(k))).collect(),
                offset: *offset,
            },
            other => other.clone(),
        }
    }

    /// Parses `const(c)`, `indicator(R)`, `mollifier(R,k)` or `smooth(name)`.
    pub fn parse(model: SurfaceModel, text: &str) -> Result<Self> {
        let t = text.trim();
        let lead = text.len() - text.trim_start().len();
        let open = t.find('(').ok_or(Error::Parse { pos: lead, msg: "expected `(`".into() })?;
        if !t.ends_with(')') {
            return Err(Error::Parse { pos: lead + t.len(), msg: "expected `)`".into() });
        }
        let head = &t[..open];
        let body = &t[open + 1..t.len() - 1];
        let shift = |e: Error| match e {
            Error::Parse { pos, msg } => Error::Parse { pos: pos + lead + open + 1, msg },
            e => e,
        };
        match head.trim() {
            "const" => body
                .trim()
                .parse::<f64>()
                .map(Observable::Constant)
                .map_err(|_| Error::Parse { pos: lead + open + 1, msg: "expected a number".into() }),
            "indicator" => Ok(Observable::Indicator(Region::parse(model, body).map_err(shift)?)),
            "mollifier" => {
                let comma =
                    body.rfind(',').ok_or(Error::Parse { pos: lead + open + 1, msg: "expected `region,k`".into() })?;
                let region = Region::parse(model, &body[..comma]).map_err(shift)?;
                let k: f64 = body[comma + 1..].trim().parse().map_err(|_| Error::Parse {
                    pos: lead + open + 2 + comma,
                    msg: "expected the mollifier index".into(),
                })?;
                Observable::mollifier(&region, k)
            }
            "smooth" => smooth_by_name(model, body.trim()),
            other => Err(Error::Parse { pos: lead, msg: format!("unknown observable `{other}`") }),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Observable::Constant(c) => format!("const({c})"),
            Observable::Indicator(r) => format!("indicator({r})"),
            Observable::Mollified { region, k } => format!("mollifier({region},{k})"),
            Observable::Smooth(s) => format!("smooth({})", s.name),
            Observable::Composite { terms, offset } => {
                let mut s = String::from("sum(");
                for (w, a) in terms {
                    s.push_str(&format!("{w}*{},", a.describe()));
                }
                s.push_str(&format!("{offset})"));
                s
            }
            Observable::Shifted { inner, s, .. } => format!("shift({},{s})", inner.describe()),
        }
    }
}

/// h_k as a function of the signed distance.
pub fn mollify(topology: Topology, sdist: f64, k: f64) -> f64 {
    match topology {
        Topology::Closed => (1.0 - k * sdist).clamp(0.0, 1.0),
        _ => (-k * sdist).clamp(0.0, 1.0),
    }
}

const EZ: [f64; 3] = [0.0, 0.0, 1.0];

/// Named smooth observables.
///
/// Sphere: `z`, `z2`, `neg_z2`, `x2_minus_z2`, `one_plus_xy`, `lz2`, `lz2_half_z`, `vz2`.
/// Torus: `cos_x1`, `cos_x1_plus_cos_x2`, `sin2_x2_cos_x1`, `xi1_sq`, `xi1_sq_cos_x1`.
pub fn smooth_by_name(model: SurfaceModel, name: &str) -> Result<Observable> {
    let zonal = Symmetry::Zonal { axis: EZ };
    let o = match (model.kind, name) {
        (SurfaceKind::Sphere, "z") => Observable::base(name, |s| s.p[2], -1.0, 1.0, zonal),
        (SurfaceKind::Sphere, "z2") => Observable::base(name, |s| s.p[2] * s.p[2], 0.0, 1.0, zonal),
        (SurfaceKind::Sphere, "neg_z2") => Observable::base(name, |s| -s.p[2] * s.p[2], -1.0, 0.0, zonal),
        (SurfaceKind::Sphere, "x2_minus_z2") => {
            Observable::base(name, |s| s.p[0] * s.p[0] - s.p[2] * s.p[2], -1.0, 1.0, Symmetry::None)
        }
        (SurfaceKind::Sphere, "one_plus_xy") => {
            Observable::base(name, |s| 1.0 + s.p[0] * s.p[1], 0.5, 1.5, Symmetry::None)
        }
        // Angular momentum about the polar axis; invariant under the flow.
        (SurfaceKind::Sphere, "lz2") => Observable::symbol(name, |s| cross(&s.p, &s.v)[2].powi(2), 0.0, 1.0),
        (SurfaceKind::Sphere, "lz2_half_z") => {
            Observable::symbol(name, |s| cross(&s.p, &s.v)[2].powi(2) + 0.5 * s.p[2], -0.5, 1.5)
        }
        (SurfaceKind::Sphere, "vz2") => Observable::symbol(name, |s| s.v[2] * s.v[2], 0.0, 1.0),
        (SurfaceKind::Torus, "cos_x1") => {
            Observable::base(name, |s| 0.5 * (1.0 + s.p[0].cos()), 0.0, 1.0, Symmetry::Axis(0))
        }
        (SurfaceKind::Torus, "cos_x1_plus_cos_x2") => {
            Observable::base(name, |s| s.p[0].cos() + s.p[1].cos(), -2.0, 2.0, Symmetry::None)
        }
        (SurfaceKind::Torus, "sin2_x2_cos_x1") => {
            Observable::base(name, |s| s.p[1].sin().powi(2) + 0.3 * s.p[0].cos(), -0.3, 1.3, Symmetry::None)
        }
        (SurfaceKind::Torus, "xi1_sq") => Observable::symbol(name, |s| s.v[0] * s.v[0], 0.0, 1.0),
        (SurfaceKind::Torus, "xi1_sq_cos_x1") => {
            Observable::symbol(name, |s| s.v[0] * s.v[0] + 0.5 * s.p[0].cos(), -0.5, 1.5)
        }
        _ => return Err(Error::Input(format!("no smooth observable `{name}` on {}", model.name()))),
    };
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sphere_pt(lat: f64, lon: f64) -> State {
        State { p: [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()], v: [0.0, 0.0, 0.0] }
    }

    #[test]
    fn mollifier_examples() {
        let s = SurfaceModel::sphere();
        let open = Region::parse(s, "cap(lat>0)").unwrap();
        let h = Observable::mollifier(&open, 10.0).unwrap();
        assert_abs_diff_eq!(h.eval_state(&sphere_pt(0.05, 0.0)), 0.5, epsilon = 1e-12);
        assert_eq!(h.eval_state(&sphere_pt(0.2, 0.0)), 1.0);
        let closed = open.closure();
        let h = Observable::mollifier(&closed, 10.0).unwrap();
        assert_eq!(h.eval_state(&sphere_pt(0.01, 0.0)), 1.0);
        assert_abs_diff_eq!(h.eval_state(&sphere_pt(-0.05, 0.0)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mollifier_rejects_mixed_topology() {
        let s = SurfaceModel::sphere();
        let r = Region::parse(s, "union(cap(lat>0.5),band(|lat|<=0.1))").unwrap();
        assert!(matches!(Observable::mollifier(&r, 4.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pullback_ignores_covector() {
        let s = SurfaceModel::sphere();
        let a = smooth_by_name(s, "one_plus_xy").unwrap();
        let z1 = s.phase_point_angle(0, [0.3, 0.4], 0.1).unwrap();
        let z2 = s.phase_point_angle(0, [0.3, 0.4], 2.1).unwrap();
        assert_eq!(a.eval(&s, &z1), a.eval(&s, &z2));
        assert!(a.is_pullback());
        assert!(!smooth_by_name(s, "lz2").unwrap().is_pullback());
    }

    #[test]
    fn parse_observables() {
        let t = SurfaceModel::torus();
        let a = Observable::parse(t, "mollifier(strip(0,1),4)").unwrap();
        assert_eq!(a.describe(), "mollifier(strip(0,1),4)");
        let a = Observable::parse(t, "const(0.25)").unwrap();
        assert_eq!(a.bounds(), (0.25, 0.25));
        match Observable::parse(t, "indicator(strip(0,1)") {
            Err(Error::Parse { .. }) => {}
            other => panic!("{other:?}"),
        }
        match Observable::parse(t, "indicator(strap(0,1))") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn composite_bounds() {
        let t = SurfaceModel::torus();
        let a = Observable::Composite {
            terms: vec![(2.0, smooth_by_name(t, "cos_x1").unwrap()), (-1.0, Observable::Constant(0.5))],
            offset: 1.0,
        };
        assert_eq!(a.bounds(), (0.5, 2.5));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mollifiers_are_monotone_in_k(d in -2.0f64..2.0, k in 0.5f64..64.0) {
            let (o1, o2) = (mollify(Topology::Open, d, k), mollify(Topology::Open, d, 2.0 * k));
            let chi_open = if d < 0.0 { 1.0 } else { 0.0 };
            prop_assert!(0.0 <= o1 && o1 <= o2 && o2 <= chi_open);
            let (c1, c2) = (mollify(Topology::Closed, d, k), mollify(Topology::Closed, d, 2.0 * k));
            let chi_closed = if d <= 0.0 { 1.0 } else { 0.0 };
            prop_assert!(c1 >= c2 && c2 >= chi_closed && c1 <= 1.0);
        }
    }
}
