//! Infima over the unit cotangent bundle of finite-horizon, doubled and
//! long-time geodesic averages, with the escape-set witness on the torus.

use std::f64::consts::{PI, TAU};

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birkhoff::running_averages;
use crate::error::{Error, Result};
use crate::flow::{FlowSettings, GeodesicFlow};
use crate::observable::Observable;
use crate::region::{Curve, Region, Shape};
use crate::report::{Certificate, Direction, FunctionalReport};
use crate::surface::{cross, dot, PhasePoint, State, SurfaceKind, SurfaceModel, Vec3};

/// Product sample of the unit cotangent bundle plus optional extra seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub model: SurfaceModel,
    pub base_points: usize,
    pub directions: usize,
    pub points: Vec<PhasePoint>,
    /// Appended after the product grid; indices continue from it.
    pub extra: Vec<PhasePoint>,
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

impl PhaseGrid {
    /// Sphere: Fibonacci lattice. Torus: a 6 × 8 (or near-square) lattice.
    /// Revolution: parallels at midpoints of equal s-cells times longitudes.
    pub fn new(model: SurfaceModel, base_points: usize, directions: usize) -> Result<Self> {
        if base_points == 0 || directions == 0 {
            return Err(Error::Precondition("grid needs base points and directions".into()));
        }
        let mut bases: Vec<[f64; 2]> = Vec::new();
        let mut chart_pts: Vec<(u8, [f64; 2])> = Vec::new();
        match model.kind {
            SurfaceKind::Sphere => {
                for i in 0..base_points {
                    let z = 1.0 - (2 * i + 1) as f64 / base_points as f64;
                    let lon = (i as f64 * GOLDEN_ANGLE).rem_euclid(TAU);
                    let p = [(1.0 - z * z).sqrt() * lon.cos(), (1.0 - z * z).sqrt() * lon.sin(), z];
                    let c = model.chart_point(&p);
                    chart_pts.push((c.chart, c.x));
                }
            }
            SurfaceKind::Torus | SurfaceKind::Revolution { .. } => {
                let (rows, cols) = near_square(base_points);
                for i in 0..rows {
                    for j in 0..cols {
                        let x0 = match model.kind {
                            SurfaceKind::Torus => TAU * i as f64 / rows as f64,
                            _ => PI * (i as f64 + 0.5) / rows as f64,
                        };
                        bases.push([x0, TAU * j as f64 / cols as f64]);
                    }
                }
                chart_pts = bases.iter().map(|x| (0, *x)).collect();
            }
        }
        let mut points = Vec::with_capacity(chart_pts.len() * directions);
        for (chart, x) in chart_pts {
            for d in 0..directions {
                points.push(model.phase_point_angle(chart, x, TAU * d as f64 / directions as f64)?);
            }
        }
        Ok(Self { model, base_points, directions, points, extra: Vec::new() })
    }

    pub fn default_for(model: SurfaceModel) -> Result<Self> {
        Self::new(model, 48, 64)
    }

    pub fn with_extra(mut self, extra: Vec<PhasePoint>) -> Self {
        self.extra = extra;
        self
    }

    pub fn all(&self) -> impl Iterator<Item = &PhasePoint> {
        self.points.iter().chain(&self.extra)
    }

    pub fn len(&self) -> usize {
        self.points.len() + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// rows × cols = n with rows ≤ cols as close as possible.
fn near_square(n: usize) -> (usize, usize) {
    let mut r = (n as f64).sqrt().floor() as usize;
    while r > 1 && n % r != 0 {
        r -= 1;
    }
    (r.max(1), n / r.max(1))
}

/// Local descent from the best grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineSettings {
    pub enabled: bool,
    pub seeds: usize,
    /// Mollifier index replacing indicators during descent.
    pub surrogate_k: f64,
    pub max_iters: u64,
    /// Initial simplex size (radians).
    pub step: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self { enabled: true, seeds: 8, surrogate_k: 10.0, max_iters: 150, step: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSettings {
    pub nodes_per_unit_time: usize,
    pub refine: RefineSettings,
    /// Fraction of the horizon list forming the liminf tail.
    pub tail_fraction: f64,
    /// Doubling stops once an increment falls below this (after the third horizon).
    pub increment_tol: f64,
    /// Longest horizon attempted.
    pub horizon_cap: f64,
    pub flow: FlowSettings,
}

impl Default for FunctionalSettings {
    fn default() -> Self {
        Self {
            nodes_per_unit_time: 64,
            refine: RefineSettings::default(),
            tail_fraction: 0.3,
            increment_tol: 1e-6,
            horizon_cap: 1e4,
            flow: FlowSettings::default(),
        }
    }
}

/// State near `seed`, displaced by (u, w) on the base and turned by θ.
fn local_state(model: &SurfaceModel, seed: &State, x: &[f64]) -> Option<State> {
    let (u, w, th) = (x[0], x[1], x[2]);
    let (sth, cth) = th.sin_cos();
    match model.kind {
        SurfaceKind::Sphere => {
            let n0 = cross(&seed.p, &seed.v);
            let q: Vec3 = std::array::from_fn(|i| seed.p[i] + u * seed.v[i] + w * n0[i]);
            let p = unit(q)?;
            let f1 = unit(std::array::from_fn(|i| seed.v[i] - dot(&seed.v, &p) * p[i]))?;
            let f2 = cross(&p, &f1);
            Some(State { p, v: std::array::from_fn(|i| cth * f1[i] + sth * f2[i]) })
        }
        SurfaceKind::Torus => {
            let v = [seed.v[0] * cth - seed.v[1] * sth, seed.v[0] * sth + seed.v[1] * cth, 0.0];
            Some(State { p: [seed.p[0] + u, seed.p[1] + w, 0.0], v })
        }
        SurfaceKind::Revolution { profile } => {
            let f0 = profile.eval(seed.p[0]).0;
            let a0 = (seed.v[1] / f0).atan2(seed.v[0]);
            let s = (seed.p[0] + u).clamp(0.02, profile.length() - 0.02);
            let z = model.phase_point_angle(0, [s, seed.p[1] + w], a0 + th).ok()?;
            Some(model.to_state(&z))
        }
    }
}

fn unit(v: Vec3) -> Option<Vec3> {
    let n = dot(&v, &v).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Averages of `a` from `st` at every horizon.
fn averages(flow: &GeodesicFlow, a: &Observable, st: &State, horizons: &[f64], npu: usize) -> Result<Vec<f64>> {
    let orbit = flow.orbit(st, *horizons.last().unwrap())?;
    running_averages(&orbit, a, horizons, npu)
}

/// How a vector of horizon averages collapses to one objective value.
#[derive(Debug, Clone, Copy)]
enum Reduce {
    At(usize),
    TailMin(usize),
}

impl Reduce {
    fn apply(self, v: &[f64]) -> f64 {
        match self {
            Reduce::At(i) => v[i],
            Reduce::TailMin(start) => v[start..].iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

struct Descent<'a> {
    flow: GeodesicFlow,
    a: &'a Observable,
    seed: State,
    horizons: &'a [f64],
    reduce: Reduce,
    npu: usize,
}

impl CostFunction for Descent<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let Some(st) = local_state(&self.flow.model, &self.seed, x) else { return Ok(f64::INFINITY) };
        Ok(averages(&self.flow, self.a, &st, self.horizons, self.npu)
            .map(|v| self.reduce.apply(&v))
            .unwrap_or(f64::INFINITY))
    }
}

struct Minimum {
    value: f64,
    point: PhasePoint,
    grid_index: Option<usize>,
}

/// Grid minimum of the reduced averages, then simplex descent on the
/// surrogate from the best cells and a final evaluation of `a` itself.
fn minimize(
    a: &Observable,
    grid: &PhaseGrid,
    horizons: &[f64],
    values: &[Vec<f64>],
    reduce: Reduce,
    settings: &FunctionalSettings,
) -> Result<Minimum> {
    let flow = GeodesicFlow::with_settings(grid.model, settings.flow);
    let pts: Vec<&PhasePoint> = grid.all().collect();
    let mut order: Vec<(f64, usize)> = values.iter().map(|v| reduce.apply(v)).zip(0..).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let (v0, i0) = order[0];
    let mut best = Minimum { value: v0, point: *pts[i0], grid_index: Some(i0) };
    let r = settings.refine;
    if !r.enabled || r.seeds == 0 {
        return Ok(best);
    }
    let surrogate = a.surrogate(r.surrogate_k);
    let found: Vec<Option<(f64, State)>> = order
        .iter()
        .take(r.seeds)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(_, i)| {
            let seed = grid.model.to_state(pts[i]);
            let problem = Descent { flow, a: &surrogate, seed, horizons, reduce, npu: settings.nodes_per_unit_time };
            let mut simplex = vec![vec![0.0; 3]];
            for k in 0..3 {
                let mut v = vec![0.0; 3];
                v[k] = r.step;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).ok()?;
            let res = Executor::new(problem, solver).configure(|s| s.max_iters(r.max_iters)).run().ok()?;
            let x = res.state.best_param.clone()?;
            let st = local_state(&grid.model, &seed, &x)?;
            let v = averages(&flow, a, &st, horizons, settings.nodes_per_unit_time).ok()?;
            Some((reduce.apply(&v), st))
        })
        .collect();
    for (v, st) in found.into_iter().flatten() {
        if v < best.value {
            best = Minimum { value: v, point: grid.model.from_state(&st), grid_index: None };
        }
    }
    Ok(best)
}

fn grid_values(
    a: &Observable,
    grid: &PhaseGrid,
    horizons: &[f64],
    settings: &FunctionalSettings,
) -> Result<Vec<Vec<f64>>> {
    let flow = GeodesicFlow::with_settings(grid.model, settings.flow);
    let npu = settings.nodes_per_unit_time;
    let pts: Vec<&PhasePoint> = grid.all().collect();
    pts.par_iter().map(|z| averages(&flow, a, &grid.model.to_state(z), horizons, npu)).collect()
}

fn report(name: &str, a: &Observable, grid: &PhaseGrid, m: &Minimum, dir: Direction) -> FunctionalReport {
    let mut r = FunctionalReport::new(name, grid.model.name(), &a.describe(), m.value, dir);
    r.certificate = Certificate::PhasePoint { point: m.point, grid_index: m.grid_index };
    r
}

/// inf over z of (1/T)∫₀ᵀ a∘φ_t(z)dt, estimated from above.
pub fn g2_t(a: &Observable, t: f64, grid: &PhaseGrid, settings: &FunctionalSettings) -> Result<FunctionalReport> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("horizon {t} must be positive")));
    }
    let hs = [t];
    let values = grid_values(a, grid, &hs, settings)?;
    let m = minimize(a, grid, &hs, &values, Reduce::At(0), settings)?;
    let mut r = report("g2T", a, grid, &m, Direction::UpperBound);
    r.horizon = Some(t);
    r.trace.push((t, m.value));
    Ok(r)
}

/// sup over the doubling horizons t0·2^k, k ≤ k_max, of the finite-horizon infimum.
pub fn g2(
    a: &Observable,
    t0: f64,
    k_max: usize,
    grid: &PhaseGrid,
    settings: &FunctionalSettings,
) -> Result<FunctionalReport> {
    if k_max < 2 {
        return Err(Error::Precondition("doubling needs at least two doublings".into()));
    }
    if !(t0 > 0.0) {
        return Err(Error::Precondition(format!("base horizon {t0} must be positive")));
    }
    let mut warnings = Vec::new();
    let mut horizons: Vec<f64> = (0..=k_max).map(|k| t0 * 2f64.powi(k as i32)).collect();
    if let Some(cut) = horizons.iter().position(|t| *t > settings.horizon_cap) {
        horizons.truncate(cut.max(1));
        warnings.push(format!("budget: horizons above {} skipped; trace is partial", settings.horizon_cap));
    }
    let values = grid_values(a, grid, &horizons, settings)?;
    let mut trace = Vec::new();
    let mut best: Option<Minimum> = None;
    for (k, t) in horizons.iter().enumerate() {
        let m = minimize(
            a,
            grid,
            &horizons[..=k],
            &values.iter().map(|v| v[..=k].to_vec()).collect::<Vec<_>>(),
            Reduce::At(k),
            settings,
        )?;
        trace.push((*t, m.value));
        let increment = k.checked_sub(1).map(|j| m.value - trace[j].1);
        if best.as_ref().is_none_or(|b| m.value > b.value) {
            best = Some(m);
        }
        if k >= 2 && increment.is_some_and(|d| d.abs() < settings.increment_tol) {
            break;
        }
    }
    let best = best.unwrap();
    let mut r = report("g2", a, grid, &best, Direction::UpperBound);
    r.horizon = trace.last().map(|p| p.0);
    r.trace = trace;
    if r.max_decrease() > 1e-3 {
        warnings.push(format!("doubling trace decreases by {:.2e}", r.max_decrease()));
    }
    r.warnings = warnings;
    Ok(r)
}

/// The default long-time horizons 8π, 10π, …, 32π.
pub fn default_horizons() -> Vec<f64> {
    (4..=16).map(|k| TAU * k as f64).collect()
}

/// inf over z of the liminf of the averages, each liminf replaced by the
/// minimum over the last ⌈tail_fraction⌉ of the horizons.
pub fn g2_prime(
    a: &Observable,
    grid: &PhaseGrid,
    horizons: &[f64],
    settings: &FunctionalSettings,
) -> Result<FunctionalReport> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= 0.0 {
        return Err(Error::Precondition("horizons must be positive and increasing".into()));
    }
    let tail = ((settings.tail_fraction * horizons.len() as f64).ceil() as usize).clamp(1, horizons.len());
    let start = horizons.len() - tail;
    let values = grid_values(a, grid, horizons, settings)?;
    let m = minimize(a, grid, horizons, &values, Reduce::TailMin(start), settings)?;
    let mut r = report("g2_prime", a, grid, &m, Direction::TwoSided);
    r.horizon = horizons.last().copied();
    let flow = GeodesicFlow::with_settings(grid.model, settings.flow);
    let at_best = averages(&flow, a, &grid.model.to_state(&m.point), horizons, settings.nodes_per_unit_time)?;
    r.trace = horizons.iter().copied().zip(at_best).collect();
    Ok(r)
}

/// Smallest horizon in [t_lo, t_hi] at which the finite-horizon infimum
/// reaches `target − tol`: a coarse scan followed by bisection.
pub fn stabilization_horizon(
    a: &Observable,
    target: f64,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
    grid: &PhaseGrid,
    settings: &FunctionalSettings,
) -> Result<Option<f64>> {
    let reached = |t: f64| -> Result<bool> { Ok(g2_t(a, t, grid, settings)?.value >= target - tol) };
    let n = 16;
    let mut prev = t_lo;
    for i in 1..=n {
        let t = t_lo + (t_hi - t_lo) * i as f64 / n as f64;
        if reached(t)? {
            let (mut lo, mut hi) = (prev, t);
            if i == 1 && reached(lo)? {
                return Ok(Some(lo));
            }
            for _ in 0..12 {
                let mid = 0.5 * (lo + hi);
                if reached(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        prev = t;
    }
    Ok(None)
}

/// Open set avoided by one ray along the segments γ([2^k, 2^k + k]), k ≤ K.
#[derive(Debug, Clone)]
pub struct EscapeWitness {
    pub region: Region,
    pub ray: PhasePoint,
    pub k_max: usize,
    pub tube_radius: f64,
    /// γ(2^k), from which the ray stays outside the set for time k.
    pub seeds: Vec<PhasePoint>,
}

/// Whether the direction (cos θ, sin θ) has a rational slope p/q with q ≤ 10⁴.
fn rational_slope(angle: f64) -> bool {
    let (s, c) = angle.sin_cos();
    if s.abs() < 1e-12 || c.abs() < 1e-12 {
        return true;
    }
    let r = s / c;
    (1..=10_000).any(|q| {
        let x = r * q as f64;
        (x - x.round()).abs() < 1e-9 * q as f64
    })
}

/// Complement of the closed tubes of radius r around γ([2^k, 2^k + k]), 1 ≤ k ≤ K,
/// for a torus ray γ of irrational slope.
pub fn build_escape_witness(ray: &PhasePoint, k_max: usize, tube_radius: f64) -> Result<EscapeWitness> {
    let model = SurfaceModel::torus();
    let angle = ray.xi[1].atan2(ray.xi[0]);
    if rational_slope(angle) {
        return Err(Error::Precondition("the ray is periodic; the witness needs an irrational slope".into()));
    }
    if !(tube_radius > 0.0) || k_max == 0 || k_max > 20 {
        return Err(Error::Precondition("need tube radius > 0 and 1 ≤ K ≤ 20".into()));
    }
    let (c, s) = (angle.cos(), angle.sin());
    let mut tubes = Vec::new();
    let mut seeds = Vec::new();
    for k in 1..=k_max {
        let t = 2f64.powi(k as i32);
        let x = [(ray.x[0] + t * c).rem_euclid(TAU), (ray.x[1] + t * s).rem_euclid(TAU)];
        tubes.push(Shape::Tube {
            curve: Curve::Segment { start: x, angle, len: k as f64 },
            r: tube_radius,
            closed: true,
        });
        seeds.push(model.phase_point(0, x, [c, s])?);
    }
    let region = Region::new(model, Shape::Complement(Box::new(Shape::Union(tubes))))?;
    Ok(EscapeWitness { region, ray: *ray, k_max, tube_radius, seeds })
}

impl EscapeWitness {
    /// (1/(t₁ − t₀))∫_{t₀}^{t₁} χ_ω(γ(t))dt.
    pub fn window_average(&self, t0: f64, t1: f64, npu: usize) -> Result<f64> {
        let flow = GeodesicFlow::new(SurfaceModel::torus());
        let a = Observable::indicator(&self.region);
        let orbit = flow.orbit(&flow.model.to_state(&self.ray), t1)?;
        let v = running_averages(&orbit, &a, &[t0, t1], npu)?;
        Ok((t1 * v[1] - t0 * v[0]) / (t1 - t0))
    }

    /// Average over the final dyadic block [2^(K−1), 2^K].
    pub fn tail_average(&self, npu: usize) -> Result<f64> {
        let t1 = 2f64.powi(self.k_max as i32);
        self.window_average(0.5 * t1, t1, npu)
    }

    /// Average over [0, 2^K] and its idealized value 1 − Σ_{k<K} k / 2^K.
    pub fn running_average(&self, npu: usize) -> Result<(f64, f64)> {
        let t1 = 2f64.powi(self.k_max as i32);
        let ideal = 1.0 - (1..self.k_max).sum::<usize>() as f64 / t1;
        let flow = GeodesicFlow::new(SurfaceModel::torus());
        let orbit = flow.orbit(&flow.model.to_state(&self.ray), t1)?;
        let v = running_averages(&orbit, &Observable::indicator(&self.region), &[t1], npu)?[0];
        Ok((v, ideal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::smooth_by_name;
    use approx::assert_abs_diff_eq;

    fn quick() -> FunctionalSettings {
        FunctionalSettings::default()
    }

    #[test]
    fn grid_points_are_unit() {
        for m in
            [SurfaceModel::sphere(), SurfaceModel::torus(), SurfaceModel::from_name("zoll_revolution_demo").unwrap()]
        {
            let g = PhaseGrid::default_for(m).unwrap();
            assert_eq!(g.len(), 48 * 64);
            for z in &g.points {
                let c = m.cometric_eval(&m.project(z), z.xi).unwrap();
                assert_abs_diff_eq!(c, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constants() {
        let g = PhaseGrid::new(SurfaceModel::torus(), 12, 8).unwrap();
        let a = Observable::Constant(0.4);
        assert_abs_diff_eq!(g2_t(&a, 3.0, &g, &quick()).unwrap().value, 0.4, epsilon = 1e-14);
        let r = g2(&a, 1.0, 3, &g, &quick()).unwrap();
        assert!(r.trace.iter().all(|p| (p.1 - 0.4).abs() < 1e-14));
        assert_abs_diff_eq!(g2_prime(&a, &g, &[5.0, 6.0, 7.0], &quick()).unwrap().value, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn band_closed_form_and_polar_minimizer() {
        let s = SurfaceModel::sphere();
        let band = Observable::indicator(&Region::parse(s, "band(|lat|<=pi/6)").unwrap());
        let g = PhaseGrid::default_for(s).unwrap();
        let r = g2_t(&band, TAU, &g, &quick()).unwrap();
        assert_abs_diff_eq!(r.value, 1.0 / 3.0, epsilon = 1e-3);
        let Certificate::PhasePoint { point, .. } = r.certificate else { panic!() };
        let st = s.to_state(&point);
        let inc = cross(&st.p, &st.v)[2].abs().acos();
        assert!((inc - PI / 2.0).abs() < 0.02, "inclination {inc}");
    }

    #[test]
    fn torus_strip_avoided() {
        let t = SurfaceModel::torus();
        let strip = Observable::indicator(&Region::parse(t, "strip(0,1)").unwrap());
        let g = PhaseGrid::default_for(t).unwrap();
        assert_abs_diff_eq!(g2_t(&strip, TAU, &g, &quick()).unwrap().value, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g2(&strip, TAU, 2, &g, &quick()).unwrap().value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zoll_doubling_is_flat() {
        let s = SurfaceModel::sphere();
        let band = Observable::indicator(&Region::parse(s, "band(|lat|<=pi/6)").unwrap());
        let g = PhaseGrid::new(s, 24, 16).unwrap();
        let set =
            FunctionalSettings { refine: RefineSettings { enabled: false, ..RefineSettings::default() }, ..quick() };
        let r = g2(&band, TAU, 2, &g, &set).unwrap();
        assert!(r.max_decrease() < 1e-12);
        assert!((r.trace[0].1 - r.trace[2].1).abs() < 1e-9);
    }

    #[test]
    fn equidistributed_smooth_average() {
        // Oracle: the spatial mean of (1 + cos x₁)/2 is 1/2.
        let t = SurfaceModel::torus();
        let a = smooth_by_name(t, "cos_x1").unwrap();
        let z = t.phase_point(0, [0.3, 0.1], [1.0, (5f64.sqrt() - 1.0) / 2.0]).unwrap();
        let g = PhaseGrid { extra: vec![z], points: vec![], base_points: 0, directions: 0, model: t };
        let r = g2_prime(&a, &g, &default_horizons(), &quick()).unwrap();
        assert_abs_diff_eq!(r.trace.last().unwrap().1, 0.5, epsilon = 1e-2);
    }

    #[test]
    fn fekete_superadditivity() {
        let t = SurfaceModel::torus();
        let a = smooth_by_name(t, "sin2_x2_cos_x1").unwrap();
        let g = PhaseGrid::new(t, 16, 16).unwrap();
        let v = |h: f64| h * g2_t(&a, h, &g, &quick()).unwrap().value;
        for (t1, t2) in [(1.0, 2.0), (1.5, 1.5), (0.7, 3.1)] {
            assert!(v(t1 + t2) >= v(t1) + v(t2) - 2e-3 * (t1 + t2), "{t1} {t2}");
        }
    }

    #[test]
    fn mollifiers_increase_to_open_indicator() {
        let s = SurfaceModel::sphere();
        // Two boundary crossings per great circle: the k = 32 deficit is about 1/(64π).
        let r = Region::parse(s, "cap(lat>-pi/6)").unwrap();
        let g = PhaseGrid::default_for(s).unwrap();
        let limit = g2_t(&Observable::indicator(&r), TAU, &g, &quick()).unwrap().value;
        let mut prev = f64::NEG_INFINITY;
        for k in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let v = g2_t(&Observable::mollifier(&r, k).unwrap(), TAU, &g, &quick()).unwrap().value;
            assert!(v >= prev - 1e-4 && v <= limit + 1e-4, "k = {k}: {v}");
            prev = v;
        }
        assert!(limit - prev < 5e-3, "{limit} {prev}");
    }

    #[test]
    fn escape_witness() {
        let t = SurfaceModel::torus();
        let ray = t.phase_point(0, [0.1, 0.2], [1.0, (5f64.sqrt() - 1.0) / 2.0]).unwrap();
        let w = build_escape_witness(&ray, 4, 0.01).unwrap();
        assert!(w.region.topology().is_open());
        let a = Observable::indicator(&w.region);
        let flow = GeodesicFlow::new(t);
        for (k, z) in w.seeds.iter().enumerate() {
            let kk = (k + 1) as f64;
            let v = averages(&flow, &a, &t.to_state(z), &[kk], 64).unwrap()[0];
            assert_eq!(v, 0.0);
        }
        let periodic = t.phase_point(0, [0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!(build_escape_witness(&periodic, 4, 0.01).is_err());
    }

    #[test]
    fn witness_averages_approach_ideal_as_tubes_shrink() {
        let t = SurfaceModel::torus();
        let ray = t.phase_point(0, [0.1, 0.2], [1.0, (5f64.sqrt() - 1.0) / 2.0]).unwrap();
        let mut gaps = Vec::new();
        for r in [0.04, 0.01, 0.0025] {
            let w = build_escape_witness(&ray, 6, r).unwrap();
            let (v, ideal) = w.running_average(64).unwrap();
            assert!(v <= ideal + 1e-12);
            gaps.push(ideal - v);
        }
        assert!(gaps[2] <= gaps[0] + 1e-12);
        assert!(gaps[2] < 0.05);
    }

    #[test]
    fn rational_slopes_detected() {
        assert!(rational_slope(0.0));
        assert!(rational_slope((2.0f64).atan2(3.0)));
        assert!(!rational_slope(((5f64.sqrt() - 1.0) / 2.0).atan()));
    }
}
