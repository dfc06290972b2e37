//! Quadrature over the base surface adapted to an observable's jumps and kinks.
//!
//! Zonal structures (sphere caps, bands, equatorial tubes) integrate with
//! Gauss–Legendre cells in the axial coordinate split at the breakpoints and
//! the trapezoid rule around the axis; torus structures depending on one
//! coordinate do the same along that axis. Everything else uses Gauss–Legendre
//! rows whose crossings are located exactly, graded towards tangencies.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::observable::Observable;
use crate::quad::{gauss_legendre, illinois};
use crate::region::{Region, Symmetry};
use crate::surface::{cross, norm, PhasePoint, State, SurfaceKind, SurfaceModel, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Harmonic degree the rule must resolve (products of two degree-L modes).
    pub degree: usize,
    /// Mesh refinement level; each level halves the cells.
    pub level: usize,
    /// Levels of geometric grading towards tangencies (general case).
    pub max_depth: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { degree: 20, level: 0, max_depth: 6 }
    }
}

impl QuadSpec {
    pub fn with_degree(degree: usize) -> Self {
        Self { degree, ..Self::default() }
    }

    pub fn finer(&self) -> Self {
        Self { level: self.level + 1, ..*self }
    }
}

/// Base points with area weights.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    fn push(&mut self, p: Vec3, w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// An integral with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn frame(axis: &Vec3) -> (Vec3, Vec3) {
    let seed = if axis[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let e1 = cross(&seed, axis);
    let n1 = norm(&e1);
    let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = cross(axis, &e1);
    (e1, e2)
}

fn sphere_point(axis: &Vec3, e1: &Vec3, e2: &Vec3, u: f64, lam: f64) -> Vec3 {
    let r = (1.0 - u * u).max(0.0).sqrt();
    let (s, c) = lam.sin_cos();
    let mut p = [0.0; 3];
    for i in 0..3 {
        p[i] = r * c * e1[i] + r * s * e2[i] + u * axis[i];
    }
    p
}

/// Sign changes of the switch functions along a 1D family of base points.
pub fn breakpoints_1d<F: Fn(f64) -> Vec3>(a: &Observable, map: F, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let sw = |x: f64, buf: &mut Vec<f64>| {
        buf.clear();
        a.switches(&State { p: map(x), v: [0.0; 3] }, buf);
    };
    let mut prev = Vec::new();
    let mut cur = Vec::new();
    let mut scratch = Vec::new();
    let mut out = Vec::new();
    sw(lo, &mut prev);
    if prev.is_empty() {
        return out;
    }
    for i in 1..=n {
        let x1 = lo + (hi - lo) * i as f64 / n as f64;
        let x0 = lo + (hi - lo) * (i - 1) as f64 / n as f64;
        sw(x1, &mut cur);
        for j in 0..cur.len() {
            let (f0, f1) = (prev[j], cur[j]);
            if f0.is_finite() && f1.is_finite() && (f0 < 0.0) != (f1 < 0.0) {
                let r = illinois(
                    |x| {
                        sw(x, &mut scratch);
                        scratch[j]
                    },
                    x0,
                    x1,
                    1e-15,
                );
                out.push(r);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    out
}

fn cells(lo: f64, hi: f64, breaks: &[f64], parts: usize) -> Vec<(f64, f64)> {
    let mut edges = vec![lo];
    edges.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    edges.push(hi);
    let mut out = Vec::new();
    for w in edges.windows(2) {
        for k in 0..parts {
            let a = w[0] + (w[1] - w[0]) * k as f64 / parts as f64;
            let b = w[0] + (w[1] - w[0]) * (k + 1) as f64 / parts as f64;
            if b > a {
                out.push((a, b));
            }
        }
    }
    out
}

fn zonal_sphere(structure: &Observable, axis: Vec3, spec: &QuadSpec) -> NodeSet {
    let (e1, e2) = frame(&axis);
    let l = spec.degree;
    // Breakpoints are located in the latitude angle about the axis.
    let br: Vec<f64> =
        breakpoints_1d(structure, |b| sphere_point(&axis, &e1, &e2, b.sin(), 0.0), -PI / 2.0, PI / 2.0, 4096)
            .into_iter()
            .map(f64::sin)
            .collect();
    let parts = 1 << spec.level;
    let q = l + 2 + 14;
    let nl = (2 * l + 2).max(64) << spec.level;
    let gl = gauss_legendre(q);
    let h = TAU / nl as f64;
    let mut ns = NodeSet::default();
    for (a, b) in cells(-1.0, 1.0, &br, parts) {
        for (u, w) in gl.scaled(a, b) {
            for j in 0..nl {
                ns.push(sphere_point(&axis, &e1, &e2, u, j as f64 * h), w * h);
            }
        }
    }
    ns
}

fn zonal_revolution(structure: &Observable, model: &SurfaceModel, spec: &QuadSpec) -> NodeSet {
    let SurfaceKind::Revolution { profile } = model.kind else { unreachable!() };
    let len = profile.length();
    let br = breakpoints_1d(structure, |s| [s, 0.0, 0.0], 1e-9, len - 1e-9, 4096);
    let parts = 1 << spec.level;
    let q = spec.degree + 16;
    let nl = (2 * spec.degree + 2).max(64) << spec.level;
    let gl = gauss_legendre(q);
    let h = TAU / nl as f64;
    let mut ns = NodeSet::default();
    for (a, b) in cells(0.0, len, &br, parts) {
        for (s, w) in gl.scaled(a, b) {
            let f = profile.eval(s).0;
            for j in 0..nl {
                ns.push([s, j as f64 * h, 0.0], w * f * h);
            }
        }
    }
    ns
}

fn axis_torus(structure: &Observable, axis: usize, spec: &QuadSpec) -> NodeSet {
    let other = 1 - axis;
    let point = |x: f64, y: f64| {
        let mut p = [0.0; 3];
        p[axis] = x;
        p[other] = y;
        p
    };
    let br = breakpoints_1d(structure, |x| point(x, 0.0), 0.0, TAU, 4096);
    let l = spec.degree as f64;
    let n_other = (2 * spec.degree + 2).max(64) << spec.level;
    let h = TAU / n_other as f64;
    let mut ns = NodeSet::default();
    if br.is_empty() {
        let n_axis = n_other;
        for i in 0..n_axis {
            for j in 0..n_other {
                ns.push(point(i as f64 * h, j as f64 * h), h * h);
            }
        }
        return ns;
    }
    for (a, b) in cells(0.0, TAU, &br, 1 << spec.level) {
        let q = (l * (b - a)).ceil() as usize + 20;
        let gl = gauss_legendre(q);
        for (x, w) in gl.scaled(a, b) {
            for j in 0..n_other {
                ns.push(point(x, j as f64 * h), w * h);
            }
        }
    }
    ns
}

/// Coordinates for 2D cells: (u, λ) on the sphere, (x₁, x₂) on the torus, (s, θ) on
/// surfaces of revolution.
struct Plane<'a> {
    model: &'a SurfaceModel,
}

impl Plane<'_> {
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self.model.kind {
            SurfaceKind::Sphere => ([-1.0, 1.0], [0.0, TAU]),
            SurfaceKind::Torus => ([0.0, TAU], [0.0, TAU]),
            SurfaceKind::Revolution { profile } => ([0.0, profile.length()], [0.0, TAU]),
        }
    }

    fn point(&self, x: f64, y: f64) -> Vec3 {
        match self.model.kind {
            SurfaceKind::Sphere => {
                let r = (1.0 - x * x).max(0.0).sqrt();
                [r * y.cos(), r * y.sin(), x]
            }
            _ => [x, y, 0.0],
        }
    }

    fn jacobian(&self, x: f64) -> f64 {
        match self.model.kind {
            SurfaceKind::Revolution { profile } => profile.eval(x).0,
            _ => 1.0,
        }
    }
}

fn crossings_along<F: Fn(f64) -> Vec3>(structure: &Observable, map: F, n: usize) -> Vec<f64> {
    let mut v = breakpoints_1d(structure, map, 0.0, TAU, n);
    v.retain(|y| *y > 0.0 && *y < TAU);
    v
}

/// Row-wise rule: Gauss–Legendre rows in the first coordinate, each row split
/// at its exact crossings. Rows are also split where the number of crossings
/// changes (tangencies), with geometric grading towards those points.
fn general(model: &SurfaceModel, structure: &Observable, spec: &QuadSpec) -> NodeSet {
    let plane = Plane { model };
    let (bx, _) = plane.bounds();
    let deg = spec.degree as f64;
    let scan = 256 << spec.level;
    let count = |x: f64| crossings_along(structure, |y| plane.point(x, y), scan).len();

    // Tangencies: where the crossing count changes between samples.
    let m = 512;
    let xs: Vec<f64> = (0..=m).map(|i| bx[0] + (bx[1] - bx[0]) * i as f64 / m as f64).collect();
    let counts: Vec<usize> = xs.iter().map(|x| count(*x)).collect();
    let mut tangencies = Vec::new();
    for i in 0..m {
        if counts[i] != counts[i + 1] {
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let ca = counts[i];
            for _ in 0..50 {
                let c = 0.5 * (a + b);
                if count(c) == ca {
                    a = c;
                } else {
                    b = c;
                }
            }
            tangencies.push(0.5 * (a + b));
        }
    }
    let nx = 16 << spec.level;
    let mut edges: Vec<f64> = (0..=nx).map(|i| bx[0] + (bx[1] - bx[0]) * i as f64 / nx as f64).collect();
    for &t in &tangencies {
        let i = edges.partition_point(|e| *e < t);
        let (lo, hi) = (edges[i.saturating_sub(1)], edges[i.min(edges.len() - 1)]);
        edges.push(t);
        // Geometric grading towards the tangency from both sides.
        for j in 1..=spec.max_depth {
            let r = 0.2f64.powi(j as i32);
            edges.push(t - (t - lo) * r);
            edges.push(t + (hi - t) * r);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut ns = NodeSet::default();
    let sphere = model.is_sphere();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let qx = if sphere { (0.5 * deg * (b - a)).ceil() as usize + 8 } else { (deg * (b - a)).ceil() as usize + 8 };
        for (x, wx) in gauss_legendre(qx).scaled(a, b) {
            let jac = plane.jacobian(x);
            let roots = crossings_along(structure, |y| plane.point(x, y), scan);
            let mut ys = vec![0.0];
            ys.extend(roots);
            ys.push(TAU);
            for seg in ys.windows(2) {
                let (c, d) = (seg[0], seg[1]);
                if !(d > c) {
                    continue;
                }
                let qy = (deg * (d - c)).ceil() as usize + 8;
                for (y, wy) in gauss_legendre(qy).scaled(c, d) {
                    ns.push(plane.point(x, y), wx * wy * jac);
                }
            }
        }
    }
    ns
}

/// Nodes whose cells never straddle a jump or kink of `structure`.
pub fn nodes(model: &SurfaceModel, structure: &Observable, spec: &QuadSpec) -> NodeSet {
    let sym = structure.symmetry();
    match (model.kind, sym) {
        (SurfaceKind::Sphere, Symmetry::Zonal { axis }) => zonal_sphere(structure, axis, spec),
        (SurfaceKind::Sphere, Symmetry::Any) => zonal_sphere(structure, [0.0, 0.0, 1.0], spec),
        (SurfaceKind::Revolution { .. }, Symmetry::Zonal { .. } | Symmetry::Any) => {
            zonal_revolution(structure, model, spec)
        }
        (SurfaceKind::Torus, Symmetry::Axis(i)) => axis_torus(structure, i, spec),
        (SurfaceKind::Torus, Symmetry::Any) => axis_torus(structure, 0, spec),
        _ => general(model, structure, spec),
    }
}

/// ∫_M a·g dx for a pullback observable a.
pub fn integrate<F: Fn(&Vec3) -> f64>(model: &SurfaceModel, a: &Observable, g: F, spec: &QuadSpec) -> f64 {
    nodes(model, a, spec).integrate(|p| a.eval_base(p) * g(p))
}

/// Integral at `spec` with error estimate ten times its change under one refinement.
pub fn integrate_est<F: Fn(&Vec3) -> f64>(model: &SurfaceModel, a: &Observable, g: F, spec: &QuadSpec) -> Integral {
    let coarse = integrate(model, a, &g, spec);
    let fine = integrate(model, a, &g, &spec.finer());
    Integral { value: coarse, error: 10.0 * (coarse - fine).abs() + 1e-15 * coarse.abs().max(1.0) }
}

/// Area of a region divided by the total area.
pub fn area_fraction(region: &Region) -> f64 {
    let a = Observable::indicator(region);
    integrate(&region.model, &a, |_| 1.0, &QuadSpec::with_degree(4)) / region.model.total_area()
}

/// Phase-space state over base point p with unit direction at `angle`.
pub fn state_at(model: &SurfaceModel, p: &Vec3, angle: f64) -> State {
    let c = model.chart_point(p);
    match model.phase_point_angle(c.chart, c.x, angle) {
        Ok(z) => model.to_state(&z),
        // Revolution poles: any direction, the set has measure zero.
        Err(_) => State { p: *p, v: [angle.cos(), 0.0, 0.0] },
    }
}

/// Liouville average ∫ a dμ_L (normalized to a probability measure).
pub fn liouville_average(model: &SurfaceModel, a: &Observable, spec: &QuadSpec, dirs: usize) -> f64 {
    let ns = nodes(model, a, spec);
    let area = model.total_area();
    if a.is_pullback() {
        return ns.integrate(|p| a.eval_base(p)) / area;
    }
    let h = 1.0 / dirs as f64;
    ns.integrate(|p| (0..dirs).map(|j| a.eval_state(&state_at(model, p, TAU * j as f64 * h))).sum::<f64>() * h) / area
}

/// Phase point for a base point and direction angle.
pub fn phase_at(model: &SurfaceModel, p: &Vec3, angle: f64) -> PhasePoint {
    model.from_state(&state_at(model, p, angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hemisphere_and_strip_fractions() {
        let s = SurfaceModel::sphere();
        assert_abs_diff_eq!(area_fraction(&Region::parse(s, "cap(lat>=0)").unwrap()), 0.5, epsilon = 1e-13);
        let t = SurfaceModel::torus();
        assert_abs_diff_eq!(area_fraction(&Region::parse(t, "strip(0,1)").unwrap()), 1.0 / TAU, epsilon = 1e-13);
    }

    #[test]
    fn thin_equatorial_tube_area() {
        let s = SurfaceModel::sphere();
        let r = Region::parse(s, "tube(equator,0.01)").unwrap();
        let area = area_fraction(&r) * 4.0 * PI;
        // Oracle: band area 4π sin ε.
        assert_abs_diff_eq!(area, 4.0 * PI * 0.01f64.sin(), epsilon = 1e-12);
        assert!((area / (4.0 * PI * 0.01) - 1.0).abs() < 0.01);
    }

    #[test]
    fn general_cells_for_meridian_tube_and_union() {
        let s = SurfaceModel::sphere();
        // Zonal about another axis: same area as the equatorial tube.
        let r = Region::parse(s, "tube(meridian,0.3)").unwrap();
        assert_abs_diff_eq!(area_fraction(&r), 0.3f64.sin(), epsilon = 1e-12);
        // Non-symmetric: two perpendicular tubes overlap in two lens-shaped squares.
        let u = Region::parse(s, "union(tube(equator,0.3),tube(meridian,0.3))").unwrap();
        let a = Observable::indicator(&u);
        let est = integrate_est(&s, &a, |_| 1.0, &QuadSpec::with_degree(4));
        // Oracle: inclusion–exclusion; the overlap is ∫ 4 asin(a/√(1−z²)) dz over
        // |z| ≤ a = sin 0.3, summed by composite Simpson.
        let a0 = 0.3f64.sin();
        let n = 200_000;
        let h = 2.0 * a0 / n as f64;
        let g = |z: f64| 4.0 * (a0 / (1.0 - z * z).sqrt()).min(1.0).asin();
        let mut inter = g(-a0) + g(a0);
        for i in 1..n {
            inter += if i % 2 == 1 { 4.0 } else { 2.0 } * g(-a0 + i as f64 * h);
        }
        inter *= h / 3.0;
        let expect = 2.0 * 4.0 * PI * a0 - inter;
        assert!((est.value - expect).abs() < 1e-7, "{} vs {}", est.value, expect);
        assert!(est.error < 1e-5);
    }

    #[test]
    fn torus_diag_tube_area() {
        let t = SurfaceModel::torus();
        let r = Region::parse(t, "tube(torus_diag,0.2)").unwrap();
        // The tube is a band of width 0.4 around a closed geodesic of length 2π√2.
        let expect = 0.4 * TAU * 2f64.sqrt() / (TAU * TAU);
        assert_abs_diff_eq!(area_fraction(&r), expect, epsilon = 1e-4);
    }

    #[test]
    fn liouville_of_band_and_symbol() {
        let s = SurfaceModel::sphere();
        let band = Observable::indicator(&Region::parse(s, "band(|lat|<=pi/6)").unwrap());
        assert_abs_diff_eq!(liouville_average(&s, &band, &QuadSpec::with_degree(4), 16), 0.5, epsilon = 1e-12);
        // Mean of v_z² over S*S²: by symmetry of v in the tangent plane it is ⟨1 − z²⟩/2 = 1/3.
        let vz2 = crate::observable::smooth_by_name(s, "vz2").unwrap();
        assert_abs_diff_eq!(liouville_average(&s, &vz2, &QuadSpec::with_degree(4), 16), 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn revolution_zonal_area() {
        let r = SurfaceModel::revolution(crate::surface::Profile::ZollDemo { eps: 0.3 });
        let cap = Region::parse(r, "cap(lat>=0)").unwrap();
        let frac = area_fraction(&cap);
        // Oracle: ∫₀^{π/2} f(s) ds / 2 by a fine midpoint sum.
        let SurfaceKind::Revolution { profile } = r.kind else { unreachable!() };
        let n = 200_000;
        let h = (PI / 2.0) / n as f64;
        let m: f64 = (0..n).map(|i| profile.eval((i as f64 + 0.5) * h).0 * h).sum();
        assert_abs_diff_eq!(frac, m / 2.0, epsilon = 1e-9);
    }
}
