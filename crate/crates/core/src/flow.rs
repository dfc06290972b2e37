//! Geodesic flow on the unit cotangent bundle and periodic-orbit detection.
//!
//! Sphere and torus use closed forms. Surfaces of revolution are integrated
//! with a fourth-order Yoshida composition of the kinetic/potential splitting of
//! H = ½(ξ_s² + c²/f(s)²), where c = ξ_θ is the Clairaut constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::golden_min;
use crate::surface::{wrap_pi, PhasePoint, Profile, State, SurfaceKind, SurfaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    /// Integrator step for surfaces of revolution.
    pub step: f64,
    /// Quadrature nodes per unit time for Birkhoff averages.
    pub nodes_per_unit_time: usize,
    /// Closure-defect tolerance for period detection.
    pub period_tol: f64,
    /// Largest |t| accepted by `flow`.
    pub horizon_cap: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { step: 1e-3, nodes_per_unit_time: 64, period_tol: 1e-8, horizon_cap: 1e5 }
    }
}

/// Geodesic flow of a model surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicFlow {
    pub model: SurfaceModel,
    pub settings: FlowSettings,
}

/// A periodic orbit with its closure defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub start: PhasePoint,
    pub period: f64,
    pub residual: f64,
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_6;
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3;

fn kick(profile: &Profile, st: &mut State, h: f64) {
    let (f, df) = profile.eval(st.p[0]);
    let c = st.v[1];
    st.v[0] += h * c * c * df / (f * f * f);
    st.p[1] += h * c / (f * f);
}

fn strang(profile: &Profile, st: &mut State, h: f64) {
    kick(profile, st, 0.5 * h);
    st.p[0] += h * st.v[0];
    kick(profile, st, 0.5 * h);
}

fn yoshida(profile: &Profile, st: &mut State, h: f64) {
    strang(profile, st, YOSHIDA_W1 * h);
    strang(profile, st, YOSHIDA_W0 * h);
    strang(profile, st, YOSHIDA_W1 * h);
}

fn renormalize(profile: &Profile, st: &mut State) {
    let (f, _) = profile.eval(st.p[0]);
    let c = st.v[1];
    let rest = 1.0 - c * c / (f * f);
    // Near turning points the radial momentum is tiny and its sign carries the
    // dynamics; leave it to the integrator there.
    if rest > 0.01 {
        st.v[0] = st.v[0].signum() * rest.sqrt();
    }
}

fn check_inside(profile: &Profile, st: &State, t: f64) -> Result<()> {
    let s = st.p[0];
    let ok = s.is_finite() && s > 0.0 && s < profile.length() && profile.eval(s).0 > 1e-6;
    if ok {
        Ok(())
    } else {
        Err(Error::Integration { last_time: t, reason: "orbit reached a pole of the chart".into() })
    }
}

impl GeodesicFlow {
    pub fn new(model: SurfaceModel) -> Self {
        Self { model, settings: FlowSettings::default() }
    }

    pub fn with_settings(model: SurfaceModel, settings: FlowSettings) -> Self {
        Self { model, settings }
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self.model.kind, SurfaceKind::Revolution { .. })
    }

    fn integrate(&self, profile: &Profile, st: &State, t: f64) -> Result<State> {
        let h = self.settings.step;
        let n = (t.abs() / h).floor() as usize;
        let dir = t.signum();
        let mut cur = *st;
        for i in 0..n {
            yoshida(profile, &mut cur, dir * h);
            renormalize(profile, &mut cur);
            check_inside(profile, &cur, dir * (i as f64) * h)?;
        }
        let rest = t - dir * n as f64 * h;
        if rest != 0.0 {
            yoshida(profile, &mut cur, rest);
            renormalize(profile, &mut cur);
            check_inside(profile, &cur, dir * n as f64 * h)?;
        }
        Ok(cur)
    }

    /// φ_t in working coordinates.
    pub fn flow_state(&self, st: &State, t: f64) -> Result<State> {
        if !t.is_finite() || t.abs() > self.settings.horizon_cap {
            return Err(Error::Precondition(format!(
                "|t| = {t} exceeds the horizon cap {}",
                self.settings.horizon_cap
            )));
        }
        Ok(match self.model.kind {
            SurfaceKind::Sphere => {
                let (s, c) = t.sin_cos();
                let mut out = State { p: [0.0; 3], v: [0.0; 3] };
                for i in 0..3 {
                    out.p[i] = st.p[i] * c + st.v[i] * s;
                    out.v[i] = st.v[i] * c - st.p[i] * s;
                }
                out
            }
            SurfaceKind::Torus => State { p: [st.p[0] + t * st.v[0], st.p[1] + t * st.v[1], 0.0], v: st.v },
            SurfaceKind::Revolution { profile } => self.integrate(&profile, st, t)?,
        })
    }

    /// φ_t(z).
    pub fn flow(&self, z: &PhasePoint, t: f64) -> Result<PhasePoint> {
        let st = self.flow_state(&self.model.to_state(z), t)?;
        Ok(self.model.from_state(&st))
    }

    /// Precomputes the orbit of `st` on [0, t_end] for repeated evaluation.
    pub fn orbit(&self, st: &State, t_end: f64) -> Result<Orbit> {
        match self.model.kind {
            SurfaceKind::Revolution { profile } => {
                let h = self.settings.step;
                let n = (t_end / h).ceil() as usize + 1;
                let mut samples = Vec::with_capacity(n + 1);
                let mut cur = *st;
                samples.push(cur);
                for i in 0..n {
                    yoshida(&profile, &mut cur, h);
                    renormalize(&profile, &mut cur);
                    check_inside(&profile, &cur, i as f64 * h)?;
                    samples.push(cur);
                }
                Ok(Orbit { flow: *self, start: *st, samples, h })
            }
            _ => Ok(Orbit { flow: *self, start: *st, samples: Vec::new(), h: 0.0 }),
        }
    }

    /// Phase-space closure defect ‖φ_t(z) − z‖ in working coordinates.
    pub fn defect(&self, a: &State, b: &State) -> f64 {
        match self.model.kind {
            SurfaceKind::Sphere => {
                let mut s = 0.0;
                for i in 0..3 {
                    s += (a.p[i] - b.p[i]).powi(2) + (a.v[i] - b.v[i]).powi(2);
                }
                s.sqrt()
            }
            SurfaceKind::Torus => {
                let d0 = wrap_pi(a.p[0] - b.p[0]);
                let d1 = wrap_pi(a.p[1] - b.p[1]);
                (d0 * d0 + d1 * d1 + (a.v[0] - b.v[0]).powi(2) + (a.v[1] - b.v[1]).powi(2)).sqrt()
            }
            SurfaceKind::Revolution { .. } => {
                let d1 = wrap_pi(a.p[1] - b.p[1]);
                ((a.p[0] - b.p[0]).powi(2) + d1 * d1 + (a.v[0] - b.v[0]).powi(2) + (a.v[1] - b.v[1]).powi(2)).sqrt()
            }
        }
    }

    /// Smallest T ≤ t_max with ‖φ_T(z) − z‖ ≤ tol, or `None`.
    ///
    /// Scans the closure defect at step 0.01, polishes every local minimum
    /// below four scan steps by golden-section search and returns the first
    /// one that closes within `tol`.
    pub fn detect_period(&self, z: &PhasePoint, t_max: f64, tol: f64) -> Result<Option<PeriodicOrbit>> {
        if !(t_max > 0.0) {
            return Err(Error::Precondition("t_max must be positive".into()));
        }
        let st = self.model.to_state(z);
        let orbit = match self.orbit(&st, t_max + 0.02) {
            Ok(o) => o,
            Err(Error::Integration { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let dt = 0.01;
        let n = (t_max / dt).floor() as usize;
        let d = |t: f64| self.defect(&orbit.at(t), &st);
        let mut prev2 = f64::INFINITY;
        let mut prev = d(dt);
        for i in 2..=n + 1 {
            let t = i as f64 * dt;
            let cur = d(t);
            if prev <= prev2 && prev <= cur && prev < 4.0 * dt {
                let lo = (t - 2.0 * dt).max(0.5 * dt);
                let hi = t.min(t_max);
                let (tm, dm) = golden_min(d, lo, hi, 1e-13);
                if dm <= tol && tm <= t_max {
                    return Ok(Some(PeriodicOrbit { start: *z, period: tm, residual: dm }));
                }
            }
            prev2 = prev;
            prev = cur;
        }
        Ok(None)
    }
}

/// A trajectory that can be evaluated at any time in its range.
#[derive(Debug, Clone)]
pub struct Orbit {
    flow: GeodesicFlow,
    start: State,
    samples: Vec<State>,
    h: f64,
}

impl Orbit {
    pub fn start(&self) -> &State {
        &self.start
    }

    /// State at time t ≥ 0 (closed forms accept any t).
    pub fn at(&self, t: f64) -> State {
        if self.samples.is_empty() {
            return self.flow.flow_state(&self.start, t).expect("closed-form flow");
        }
        let SurfaceKind::Revolution { profile } = self.flow.model.kind else { unreachable!() };
        let i = ((t / self.h).floor().max(0.0) as usize).min(self.samples.len() - 1);
        let mut st = self.samples[i];
        let rest = t - i as f64 * self.h;
        if rest != 0.0 {
            yoshida(&profile, &mut st, rest);
            renormalize(&profile, &mut st);
        }
        st
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::dot;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn demo() -> GeodesicFlow {
        GeodesicFlow::new(SurfaceModel::revolution(Profile::ZollDemo { eps: 0.3 }))
    }

    #[test]
    fn sphere_equator_returns_after_two_pi() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let z = f.model.phase_point(0, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let w = f.flow(&z, TAU).unwrap();
        assert!(f.defect(&f.model.to_state(&w), &f.model.to_state(&z)) < 1e-9);
    }

    #[test]
    fn torus_straight_line() {
        let f = GeodesicFlow::new(SurfaceModel::torus());
        let z = f.model.phase_point(0, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let w = f.flow(&z, PI).unwrap();
        assert_abs_diff_eq!(w.x[0], PI, epsilon = 1e-15);
        assert_abs_diff_eq!(w.x[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn clairaut_and_energy_on_demo_surface() {
        let f = demo();
        let SurfaceKind::Revolution { profile } = f.model.kind else { unreachable!() };
        let z = f.model.phase_point_angle(0, [1.2, 0.4], 0.9).unwrap();
        let st = f.model.to_state(&z);
        let c0 = st.v[1];
        let end = f.flow_state(&st, 10.0).unwrap();
        // Clairaut: f(s)² θ' = c is the conserved angular momentum.
        let (fs, _) = profile.eval(end.p[0]);
        let theta_dot = end.v[1] / (fs * fs);
        assert_abs_diff_eq!(fs * fs * theta_dot, c0, epsilon = 1e-9);
        let g = f.model.cometric_eval(&f.model.chart_point(&end.p), [end.v[0], end.v[1]]).unwrap();
        assert!((g - 1.0).abs() <= 1e-9 * 10.0);
    }

    #[test]
    fn demo_surface_is_zoll_with_period_two_pi() {
        let f = demo();
        for angle in [0.3, 1.0, 1.4] {
            let z = f.model.phase_point_angle(0, [1.0, 0.0], angle).unwrap();
            let orb = f.detect_period(&z, 7.0, 1e-7).unwrap().expect("closed orbit");
            assert_abs_diff_eq!(orb.period, TAU, epsilon = 1e-6);
        }
    }

    #[test]
    fn meridian_hits_pole() {
        let f = demo();
        let z = f.model.phase_point(0, [1.0, 0.0], [1.0, 0.0]).unwrap();
        match f.flow(&z, 3.0) {
            Err(Error::Integration { last_time, .. }) => assert!(last_time > 1.0 && last_time < 2.2),
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn sphere_period_any_start() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let z = f.model.phase_point_angle(0, [0.7, 2.0], 0.4).unwrap();
        let o = f.detect_period(&z, 10.0, 1e-8).unwrap().unwrap();
        assert_abs_diff_eq!(o.period, TAU, epsilon = 1e-8);
    }

    #[test]
    fn torus_periods() {
        let f = GeodesicFlow::new(SurfaceModel::torus());
        let z = f.model.phase_point(0, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let o = f.detect_period(&z, 20.0, 1e-8).unwrap().unwrap();
        assert_abs_diff_eq!(o.period, TAU * 2f64.sqrt(), epsilon = 1e-8);
        let z = f.model.phase_point(0, [0.0, 0.0], [1.0, 2f64.sqrt()]).unwrap();
        assert!(f.detect_period(&z, 100.0, 1e-8).unwrap().is_none());
    }

    #[test]
    fn torus_periodic_directions_match_lattice() {
        // Direction (p, q) with gcd 1 closes at 2π|(p, q)|; at most 50 means p² + q² ≤ 63.
        let f = GeodesicFlow::new(SurfaceModel::torus());
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 {
                a.abs()
            } else {
                gcd(b, a % b)
            }
        }
        for p in 0..=8i64 {
            for q in 0..=8i64 {
                if gcd(p, q) != 1 {
                    continue;
                }
                let z = f.model.phase_point(0, [0.2, 0.1], [p as f64, q as f64]).unwrap();
                let expect = TAU * ((p * p + q * q) as f64).sqrt();
                let got = f.detect_period(&z, 50.0, 1e-8).unwrap();
                if expect <= 50.0 {
                    assert_abs_diff_eq!(got.unwrap().period, expect, epsilon = 1e-8);
                } else {
                    assert!(got.is_none());
                }
            }
        }
    }

    #[test]
    fn orbit_partial_steps_match_flow() {
        let f = demo();
        let z = f.model.phase_point_angle(0, [FRAC_PI_2, 0.0], 0.7).unwrap();
        let st = f.model.to_state(&z);
        let o = f.orbit(&st, 3.0).unwrap();
        let a = o.at(2.34567);
        let b = f.flow_state(&st, 2.34567).unwrap();
        assert!(f.defect(&a, &b) < 1e-10);
    }

    #[test]
    fn sphere_flow_stays_on_unit_bundle() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let z = f.model.phase_point_angle(0, [0.2, 0.3], 1.1).unwrap();
        let st = f.flow_state(&f.model.to_state(&z), 123.4).unwrap();
        assert_abs_diff_eq!(dot(&st.p, &st.p), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dot(&st.p, &st.v), 0.0, epsilon = 1e-12);
    }
}
