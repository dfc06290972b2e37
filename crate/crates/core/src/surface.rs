//! Closed-form model surfaces: the unit sphere, the flat torus [0,2π)² and
//! surfaces of revolution ds² + f(s)²dθ² with meridian length π.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Reduce an angle to [0, 2π).
pub fn wrap_tau(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduce an angle difference to [-π, π).
pub fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Meridian profile of a surface of revolution, parametrized by arc length s ∈ (0, π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    /// f(s) = sin s, the round sphere in geodesic polar coordinates.
    Round,
    /// Zoll metric (1 + h(cos r))²dr² + sin²r dθ² with h(u) = ε u (1 − u²),
    /// rewritten in arc length s = r + ε sin³r / 3.
    ZollDemo { eps: f64 },
}

impl Profile {
    fn radial(&self, s: f64) -> f64 {
        match *self {
            Profile::Round => s,
            Profile::ZollDemo { eps } => {
                // s(r) is strictly increasing for |ε| < 2.5; Newton from r = s.
                let mut r = s;
                for _ in 0..50 {
                    let (sr, cr) = r.sin_cos();
                    let g = r + eps * sr * sr * sr / 3.0 - s;
                    let dg = 1.0 + eps * sr * sr * cr;
                    let step = g / dg;
                    r -= step;
                    if step.abs() < 1e-16 {
                        break;
                    }
                }
                r
            }
        }
    }

    /// Returns (f(s), f'(s)).
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            Profile::Round => (s.sin(), s.cos()),
            Profile::ZollDemo { eps } => {
                let r = self.radial(s);
                let (sr, cr) = r.sin_cos();
                (sr, cr / (1.0 + eps * sr * sr * cr))
            }
        }
    }

    pub fn length(&self) -> f64 {
        PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    Sphere,
    Torus,
    Revolution { profile: Profile },
}

/// A closed surface with exact metric data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
}

/// A base point in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: u8,
    pub x: [f64; 2],
}

/// A point of the unit cotangent bundle in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub chart: u8,
    pub x: [f64; 2],
    pub xi: [f64; 2],
}

/// Working coordinates for the flow and for observables.
///
/// Sphere: `p` a unit vector of R³, `v` the unit velocity.
/// Torus: `p = (x₁, x₂, 0)` unreduced, `v = (ξ₁, ξ₂, 0)`.
/// Revolution: `p = (s, θ, 0)`, `v = (ξ_s, ξ_θ, 0)` as a covector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub p: Vec3,
    pub v: Vec3,
}

const CHART_SWITCH: f64 = 0.9;

fn latlon_point(lat: f64, lon: f64) -> Vec3 {
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    [cl * co, cl * so, sl]
}

fn latlon_frame(lat: f64, lon: f64) -> (Vec3, Vec3) {
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    ([-sl * co, -sl * so, cl], [-so, co, 0.0])
}

// Chart 1 reads latitude/longitude after the cyclic relabelling (x, y, z) -> (y, z, x),
// so its equator passes through both poles of chart 0.
fn to_chart1(p: &Vec3) -> Vec3 {
    [p[1], p[2], p[0]]
}

fn from_chart1(q: &Vec3) -> Vec3 {
    [q[2], q[0], q[1]]
}

impl SurfaceModel {
    pub fn sphere() -> Self {
        Self { kind: SurfaceKind::Sphere }
    }

    pub fn torus() -> Self {
        Self { kind: SurfaceKind::Torus }
    }

    pub fn revolution(profile: Profile) -> Self {
        Self { kind: SurfaceKind::Revolution { profile } }
    }

    /// Named built-ins: `sphere`, `torus`, `zoll_revolution_demo`, `round_revolution`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "sphere" => Ok(Self::sphere()),
            "torus" => Ok(Self::torus()),
            "zoll_revolution_demo" => Ok(Self::revolution(Profile::ZollDemo { eps: 0.3 })),
            "round_revolution" => Ok(Self::revolution(Profile::Round)),
            other => Err(Error::Input(format!("unknown model `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SurfaceKind::Sphere => "sphere",
            SurfaceKind::Torus => "torus",
            SurfaceKind::Revolution { profile: Profile::Round } => "round_revolution",
            SurfaceKind::Revolution { .. } => "zoll_revolution_demo",
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, SurfaceKind::Sphere)
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, SurfaceKind::Torus)
    }

    /// Every geodesic is closed with common period 2π (sphere, Zoll demo).
    pub fn all_geodesics_periodic(&self) -> bool {
        !self.is_torus()
    }

    pub fn total_area(&self) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => 4.0 * PI,
            SurfaceKind::Torus => TAU * TAU,
            SurfaceKind::Revolution { .. } => self.integrate_smooth(|_| 1.0, 64),
        }
    }

    fn check_chart(&self, c: &ChartPoint) -> Result<()> {
        let bad = |detail: String| Err(Error::Domain { chart: c.chart, detail });
        if !c.x[0].is_finite() || !c.x[1].is_finite() {
            return bad("non-finite coordinate".into());
        }
        match self.kind {
            SurfaceKind::Sphere => {
                if c.chart > 1 {
                    return bad("sphere has charts 0 and 1".into());
                }
                if c.x[0].abs() >= FRAC_PI_2 {
                    return bad(format!("latitude {} outside (-π/2, π/2)", c.x[0]));
                }
            }
            SurfaceKind::Torus => {
                if c.chart != 0 {
                    return bad("torus has a single chart".into());
                }
            }
            SurfaceKind::Revolution { profile } => {
                if c.chart != 0 {
                    return bad("surface of revolution has a single chart".into());
                }
                if c.x[0] <= 0.0 || c.x[0] >= profile.length() {
                    return bad(format!("s = {} outside (0, L); poles are excluded", c.x[0]));
                }
            }
        }
        Ok(())
    }

    /// g*_x(ξ, ξ).
    pub fn cometric_eval(&self, x: &ChartPoint, xi: [f64; 2]) -> Result<f64> {
        self.check_chart(x)?;
        Ok(match self.kind {
            SurfaceKind::Sphere => {
                let c = x.x[0].cos();
                xi[0] * xi[0] + xi[1] * xi[1] / (c * c)
            }
            SurfaceKind::Torus => xi[0] * xi[0] + xi[1] * xi[1],
            SurfaceKind::Revolution { profile } => {
                let (f, _) = profile.eval(x.x[0]);
                xi[0] * xi[0] + xi[1] * xi[1] / (f * f)
            }
        })
    }

    /// Builds a phase point, rescaling ξ onto the unit cometric sphere.
    pub fn phase_point(&self, chart: u8, x: [f64; 2], xi: [f64; 2]) -> Result<PhasePoint> {
        let cp = ChartPoint { chart, x };
        let g = self.cometric_eval(&cp, xi)?;
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::Input("covector must be nonzero".into()));
        }
        let s = g.sqrt();
        Ok(PhasePoint { chart, x, xi: [xi[0] / s, xi[1] / s] })
    }

    /// Phase point whose velocity makes angle `angle` with the first coordinate
    /// direction in an orthonormal frame.
    pub fn phase_point_angle(&self, chart: u8, x: [f64; 2], angle: f64) -> Result<PhasePoint> {
        let cp = ChartPoint { chart, x };
        self.check_chart(&cp)?;
        let (sa, ca) = angle.sin_cos();
        let xi = match self.kind {
            SurfaceKind::Sphere => [ca, x[0].cos() * sa],
            SurfaceKind::Torus => [ca, sa],
            SurfaceKind::Revolution { profile } => [ca, profile.eval(x[0]).0 * sa],
        };
        Ok(PhasePoint { chart, x, xi })
    }

    pub fn project(&self, z: &PhasePoint) -> ChartPoint {
        ChartPoint { chart: z.chart, x: z.x }
    }

    /// Working-coordinate base point of a chart point.
    pub fn base(&self, c: &ChartPoint) -> Vec3 {
        match self.kind {
            SurfaceKind::Sphere => {
                let q = latlon_point(c.x[0], c.x[1]);
                if c.chart == 1 {
                    from_chart1(&q)
                } else {
                    q
                }
            }
            _ => [c.x[0], c.x[1], 0.0],
        }
    }

    pub fn to_state(&self, z: &PhasePoint) -> State {
        match self.kind {
            SurfaceKind::Sphere => {
                let (lat, lon) = (z.x[0], z.x[1]);
                let q = latlon_point(lat, lon);
                let (el, eo) = latlon_frame(lat, lon);
                let a = z.xi[0];
                let b = z.xi[1] / lat.cos();
                let vq = [a * el[0] + b * eo[0], a * el[1] + b * eo[1], a * el[2] + b * eo[2]];
                if z.chart == 1 {
                    State { p: from_chart1(&q), v: from_chart1(&vq) }
                } else {
                    State { p: q, v: vq }
                }
            }
            _ => State { p: [z.x[0], z.x[1], 0.0], v: [z.xi[0], z.xi[1], 0.0] },
        }
    }

    pub fn from_state(&self, s: &State) -> PhasePoint {
        match self.kind {
            SurfaceKind::Sphere => {
                let chart = if s.p[2].abs() <= CHART_SWITCH { 0 } else { 1 };
                let (q, vq) = if chart == 0 { (s.p, s.v) } else { (to_chart1(&s.p), to_chart1(&s.v)) };
                let lat = q[2].clamp(-1.0, 1.0).asin();
                let lon = wrap_tau(q[1].atan2(q[0]));
                let (el, eo) = latlon_frame(lat, lon);
                PhasePoint { chart, x: [lat, lon], xi: [dot(&vq, &el), lat.cos() * dot(&vq, &eo)] }
            }
            SurfaceKind::Torus => {
                PhasePoint { chart: 0, x: [wrap_tau(s.p[0]), wrap_tau(s.p[1])], xi: [s.v[0], s.v[1]] }
            }
            SurfaceKind::Revolution { .. } => {
                PhasePoint { chart: 0, x: [s.p[0], wrap_tau(s.p[1])], xi: [s.v[0], s.v[1]] }
            }
        }
    }

    /// Chart point for a working base point.
    pub fn chart_point(&self, p: &Vec3) -> ChartPoint {
        match self.kind {
            SurfaceKind::Sphere => {
                let chart = if p[2].abs() <= CHART_SWITCH { 0 } else { 1 };
                let q = if chart == 0 { *p } else { to_chart1(p) };
                ChartPoint { chart, x: [q[2].clamp(-1.0, 1.0).asin(), wrap_tau(q[1].atan2(q[0]))] }
            }
            SurfaceKind::Torus => ChartPoint { chart: 0, x: [wrap_tau(p[0]), wrap_tau(p[1])] },
            SurfaceKind::Revolution { .. } => ChartPoint { chart: 0, x: [p[0], wrap_tau(p[1])] },
        }
    }

    /// Latitude-like coordinate: geodesic latitude on the sphere, π/2 − s on
    /// surfaces of revolution. Not defined on the torus.
    pub fn latitude(&self, p: &Vec3) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => p[2].clamp(-1.0, 1.0).asin(),
            SurfaceKind::Revolution { .. } => FRAC_PI_2 - p[0],
            SurfaceKind::Torus => f64::NAN,
        }
    }

    /// Geodesic distance between working base points.
    pub fn distance_base(&self, a: &Vec3, b: &Vec3) -> Result<f64> {
        match self.kind {
            SurfaceKind::Sphere => Ok(norm(&cross(a, b)).atan2(dot(a, b))),
            SurfaceKind::Torus => {
                let d0 = wrap_pi(a[0] - b[0]);
                let d1 = wrap_pi(a[1] - b[1]);
                Ok(d0.hypot(d1))
            }
            SurfaceKind::Revolution { .. } => {
                Err(Error::Unsupported("point-to-point distance on a surface of revolution has no closed form".into()))
            }
        }
    }

    pub fn distance(&self, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
        self.check_chart(x)?;
        self.check_chart(y)?;
        self.distance_base(&self.base(x), &self.base(y))
    }

    /// Integrates a smooth function of the base point with a tensor rule of
    /// order `n` (Gauss–Legendre in z or s, trapezoid in the periodic angles).
    pub fn integrate_smooth<F: Fn(&Vec3) -> f64>(&self, f: F, n: usize) -> f64 {
        let n = n.max(2);
        let m = 2 * n;
        let h = TAU / m as f64;
        match self.kind {
            SurfaceKind::Sphere => {
                let gl = quad::gauss_legendre(n);
                let mut acc = 0.0;
                for (z, w) in gl.scaled(-1.0, 1.0) {
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let mut row = 0.0;
                    for j in 0..m {
                        let (s, c) = (j as f64 * h).sin_cos();
                        row += f(&[r * c, r * s, z]);
                    }
                    acc += w * row * h;
                }
                acc
            }
            SurfaceKind::Torus => {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += f(&[i as f64 * h, j as f64 * h, 0.0]);
                    }
                }
                acc * h * h
            }
            SurfaceKind::Revolution { profile } => {
                let gl = quad::gauss_legendre(n);
                let mut acc = 0.0;
                for (s, w) in gl.scaled(0.0, profile.length()) {
                    let (fs, _) = profile.eval(s);
                    let mut row = 0.0;
                    for j in 0..m {
                        row += f(&[s, j as f64 * h, 0.0]);
                    }
                    acc += w * fs * row * h;
                }
                acc
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cometric_examples() {
        let s = SurfaceModel::sphere();
        let eq = ChartPoint { chart: 0, x: [0.0, 1.0] };
        assert_abs_diff_eq!(s.cometric_eval(&eq, [0.6, 0.8]).unwrap(), 1.0, epsilon = 1e-15);
        let t = SurfaceModel::torus();
        let any = ChartPoint { chart: 0, x: [0.3, 5.0] };
        assert_abs_diff_eq!(t.cometric_eval(&any, [3.0, 4.0]).unwrap(), 25.0, epsilon = 1e-15);
        let r = SurfaceModel::revolution(Profile::Round);
        let mid = ChartPoint { chart: 0, x: [FRAC_PI_2, 0.0] };
        assert_abs_diff_eq!(r.cometric_eval(&mid, [0.0, 1.0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cometric_domain_errors() {
        let s = SurfaceModel::sphere();
        let pole = ChartPoint { chart: 0, x: [FRAC_PI_2, 0.0] };
        assert!(matches!(s.cometric_eval(&pole, [1.0, 0.0]), Err(Error::Domain { .. })));
        let r = SurfaceModel::revolution(Profile::Round);
        let pole = ChartPoint { chart: 0, x: [0.0, 0.0] };
        assert!(r.cometric_eval(&pole, [1.0, 0.0]).is_err());
    }

    #[test]
    fn distance_examples() {
        let s = SurfaceModel::sphere();
        let north = s.chart_point(&[0.0, 0.0, 1.0]);
        let south = s.chart_point(&[0.0, 0.0, -1.0]);
        assert_abs_diff_eq!(s.distance(&north, &south).unwrap(), PI, epsilon = 1e-12);
        let a = ChartPoint { chart: 0, x: [0.0, 0.0] };
        let b = ChartPoint { chart: 0, x: [0.0, FRAC_PI_2] };
        assert_abs_diff_eq!(s.distance(&a, &b).unwrap(), FRAC_PI_2, epsilon = 1e-12);
        let t = SurfaceModel::torus();
        let a = ChartPoint { chart: 0, x: [0.0, 0.0] };
        let b = ChartPoint { chart: 0, x: [TAU - 0.1, 0.0] };
        assert_abs_diff_eq!(t.distance(&a, &b).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn project_keeps_base() {
        let t = SurfaceModel::torus();
        let z = t.phase_point(0, [0.1, 0.2], [3.0, -1.0]).unwrap();
        assert_eq!(t.project(&z).x, [0.1, 0.2]);
        let s = SurfaceModel::sphere();
        let north = s.chart_point(&[0.0, 0.0, 1.0]);
        let z = s.phase_point_angle(north.chart, north.x, 0.7).unwrap();
        let p = s.base(&s.project(&z));
        assert_abs_diff_eq!(p[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn state_roundtrip_both_charts() {
        let s = SurfaceModel::sphere();
        for chart in 0..2u8 {
            let z = s.phase_point(chart, [0.4, 2.0], [0.3, -0.5]).unwrap();
            let st = s.to_state(&z);
            assert_abs_diff_eq!(norm(&st.p), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(norm(&st.v), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(dot(&st.p, &st.v), 0.0, epsilon = 1e-14);
            let back = s.to_state(&s.from_state(&st));
            for i in 0..3 {
                assert_abs_diff_eq!(back.p[i], st.p[i], epsilon = 1e-13);
                assert_abs_diff_eq!(back.v[i], st.v[i], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn areas() {
        let s = SurfaceModel::sphere();
        let a = s.integrate_smooth(|_| 1.0, 16);
        assert!((a / (4.0 * PI) - 1.0).abs() < 1e-10);
        let t = SurfaceModel::torus();
        let a = t.integrate_smooth(|_| 1.0, 16);
        assert!((a / (TAU * TAU) - 1.0).abs() < 1e-10);
        // Both revolution profiles enclose area 4π.
        for p in [Profile::Round, Profile::ZollDemo { eps: 0.3 }] {
            let r = SurfaceModel::revolution(p);
            assert!((r.total_area() / (4.0 * PI) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zoll_profile_derivative_matches_difference_quotient() {
        let p = Profile::ZollDemo { eps: 0.3 };
        for &s in &[0.3, 1.0, 2.0, 2.9] {
            let h = 1e-6;
            let fd = (p.eval(s + h).0 - p.eval(s - h).0) / (2.0 * h);
            assert_abs_diff_eq!(p.eval(s).1, fd, epsilon = 1e-8);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn sphere_pt(lat: f64, lon: f64) -> Vec3 {
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    proptest! {
        #[test]
        fn cometric_is_quadratic(lat in -1.4f64..1.4, lon in 0.0f64..TAU, a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.1f64..10.0) {
            for m in [SurfaceModel::sphere(), SurfaceModel::torus(), SurfaceModel::revolution(Profile::ZollDemo { eps: 0.3 })] {
                let x = if m.is_sphere() || m.is_torus() { ChartPoint { chart: 0, x: [lat, lon] } } else { ChartPoint { chart: 0, x: [lat + std::f64::consts::FRAC_PI_2, lon] } };
                let g = m.cometric_eval(&x, [a, b]).unwrap();
                let gc = m.cometric_eval(&x, [c * a, c * b]).unwrap();
                prop_assert!((gc - c * c * g).abs() <= 1e-12 * (1.0 + gc.abs()));
            }
        }

        #[test]
        fn sphere_distance_is_arccos(l1 in -1.5f64..1.5, o1 in 0.0f64..TAU, l2 in -1.5f64..1.5, o2 in 0.0f64..TAU) {
            let s = SurfaceModel::sphere();
            let (p, q) = (sphere_pt(l1, o1), sphere_pt(l2, o2));
            let d = s.distance_base(&p, &q).unwrap();
            prop_assert!((d - dot(&p, &q).clamp(-1.0, 1.0).acos()).abs() <= 1e-12);
        }

        #[test]
        fn metric_axioms(pts in proptest::collection::vec((-1.5f64..1.5, 0.0f64..TAU), 3)) {
            for m in [SurfaceModel::sphere(), SurfaceModel::torus()] {
                let v: Vec<Vec3> = pts
                    .iter()
                    .map(|&(a, b)| if m.is_sphere() { sphere_pt(a, b) } else { m.base(&ChartPoint { chart: 0, x: [a + 1.5, b] }) })
                    .collect();
                let d = |i: usize, j: usize| m.distance_base(&v[i], &v[j]).unwrap();
                prop_assert!(d(0, 0).abs() <= 1e-9);
                prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-12);
                prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
            }
        }
    }
}
