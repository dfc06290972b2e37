//! Time averages (1/T)∫₀ᵀ a∘φ_t(z) dt along geodesics.
//!
//! The orbit is cut into panels; inside each panel the crossings of the
//! observable's switch functions are located by root finding, so jumps and
//! kinks always fall on piece boundaries. Piecewise-constant observables take
//! one midpoint per piece (exact once the crossings are found), everything
//! else a 2-point Gauss rule per piece.

use crate::error::{Error, Result};
use crate::flow::{GeodesicFlow, Orbit};
use crate::observable::Observable;
use crate::quad::illinois;
use crate::surface::{PhasePoint, State};

const GAUSS2: f64 = 0.577_350_269_189_625_8;

/// Averages over each horizon in `horizons` (sorted, positive) from one pass.
pub fn running_averages(orbit: &Orbit, a: &Observable, horizons: &[f64], npu: usize) -> Result<Vec<f64>> {
    if horizons.is_empty() {
        return Ok(Vec::new());
    }
    if horizons.iter().any(|t| !(*t > 0.0)) || horizons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("horizons must be positive and sorted".into()));
    }
    let pc = a.is_piecewise_constant();
    let width = if pc { 1.0 } else { 2.0 } / npu.max(1) as f64;
    let switching = a.has_switches();
    let t_end = *horizons.last().unwrap();

    let mut out = Vec::with_capacity(horizons.len());
    let mut acc = 0.0;
    let mut next_h = 0;
    let mut ta = 0.0;
    let mut sw_a = Vec::new();
    let mut sw_b = Vec::new();
    let mut roots: Vec<f64> = Vec::new();
    let switch_at = |t: f64, j: usize, buf: &mut Vec<f64>| {
        buf.clear();
        a.switches(&orbit.at(t), buf);
        buf[j]
    };
    if switching {
        a.switches(&orbit.at(0.0), &mut sw_a);
    }
    let mut scratch = Vec::new();
    let mut i = 1usize;
    while ta < t_end {
        let grid = i as f64 * width;
        let tb = grid.min(horizons[next_h]);
        roots.clear();
        if switching {
            sw_b.clear();
            a.switches(&orbit.at(tb), &mut sw_b);
            for j in 0..sw_a.len() {
                let (fa, fb) = (sw_a[j], sw_b[j]);
                if fa.is_finite() && fb.is_finite() && (fa < 0.0) != (fb < 0.0) {
                    let r = illinois(|t| switch_at(t, j, &mut scratch), ta, tb, 1e-13);
                    roots.push(r.clamp(ta, tb));
                }
            }
            roots.sort_by(f64::total_cmp);
        }
        let mut lo = ta;
        for &hi in roots.iter().chain(std::iter::once(&tb)) {
            let h = hi - lo;
            if h > 0.0 {
                acc += if pc {
                    h * a.eval_state(&orbit.at(lo + 0.5 * h))
                } else {
                    let m = lo + 0.5 * h;
                    let d = 0.5 * h * GAUSS2;
                    0.5 * h * (a.eval_state(&orbit.at(m - d)) + a.eval_state(&orbit.at(m + d)))
                };
            }
            lo = hi;
        }
        if tb == horizons[next_h] {
            while next_h < horizons.len() && horizons[next_h] == tb {
                out.push(acc / tb);
                next_h += 1;
            }
            if next_h == horizons.len() {
                break;
            }
        }
        if tb == grid {
            i += 1;
        }
        ta = tb;
        std::mem::swap(&mut sw_a, &mut sw_b);
    }
    Ok(out)
}

/// ā_T(z) = (1/T)∫₀ᵀ a∘φ_t(z) dt.
pub fn birkhoff_average(flow: &GeodesicFlow, a: &Observable, z: &PhasePoint, t: f64, npu: usize) -> Result<f64> {
    birkhoff_average_state(flow, a, &flow.model.to_state(z), t, npu)
}

pub fn birkhoff_average_state(flow: &GeodesicFlow, a: &Observable, st: &State, t: f64, npu: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("horizon {t} must be positive")));
    }
    let orbit = flow.orbit(st, t)?;
    Ok(running_averages(&orbit, a, &[t], npu)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::Region;
    use crate::surface::SurfaceModel;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn constant_average() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let z = f.model.phase_point_angle(0, [0.3, 0.1], 0.4).unwrap();
        let v = birkhoff_average(&f, &Observable::Constant(0.7), &z, 3.3, 64).unwrap();
        assert_abs_diff_eq!(v, 0.7, epsilon = 1e-14);
    }

    #[test]
    fn band_fractions() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let band = Observable::indicator(&Region::parse(f.model, "band(|lat|<=pi/6)").unwrap());
        let eq = f.model.phase_point(0, [0.0, 0.0], [0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(birkhoff_average(&f, &band, &eq, TAU, 64).unwrap(), 1.0, epsilon = 1e-14);
        let north = f.model.phase_point(0, [0.0, 0.0], [1.0, 0.0]).unwrap();
        // Oracle: measure the arc of the meridian inside the band by brute force.
        let n = 600_000;
        let inside = (0..n)
            .filter(|i| {
                let t = (*i as f64 + 0.5) * TAU / n as f64;
                t.sin().asin().abs() <= PI / 6.0
            })
            .count() as f64
            / n as f64;
        let v = birkhoff_average(&f, &band, &north, TAU, 64).unwrap();
        assert_abs_diff_eq!(v, inside, epsilon = 1e-5);
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn running_matches_separate() {
        let f = GeodesicFlow::new(SurfaceModel::torus());
        let a = Observable::mollifier(&Region::parse(f.model, "strip(0,1)").unwrap(), 4.0).unwrap();
        let z = f.model.phase_point(0, [0.1, 0.2], [1.0, 0.37]).unwrap();
        let hs = [1.0, 2.5, 7.0];
        let orbit = f.orbit(&f.model.to_state(&z), 7.0).unwrap();
        let run = running_averages(&orbit, &a, &hs, 64).unwrap();
        for (h, r) in hs.iter().zip(&run) {
            let single = birkhoff_average(&f, &a, &z, *h, 64).unwrap();
            assert_abs_diff_eq!(*r, single, epsilon = 1e-12);
        }
    }

    #[test]
    fn mollifier_along_line_is_exact_piecewise_linear() {
        // Horizontal line at x₂ = 0 through the open strip 0 < x₁ < 1, k = 4:
        // h rises over [0, 1/4], is 1 on [1/4, 3/4] and falls back on [3/4, 1].
        let f = GeodesicFlow::new(SurfaceModel::torus());
        let a = Observable::mollifier(&Region::parse(f.model, "strip(0,1)").unwrap(), 4.0).unwrap();
        let z = f.model.phase_point(0, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let v = birkhoff_average(&f, &a, &z, TAU, 64).unwrap();
        assert_abs_diff_eq!(v, 0.75 / TAU, epsilon = 1e-13);
    }

    #[test]
    fn shift_invariance() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let a = Observable::indicator(&Region::parse(f.model, "cap(lat>=0.2)").unwrap());
        let z = f.model.phase_point_angle(0, [0.1, 0.0], 0.3).unwrap();
        let s = 0.77;
        let moved = f.flow(&z, s).unwrap();
        let lhs = birkhoff_average(&f, &a, &moved, 5.0, 64).unwrap();
        let rhs = birkhoff_average(&f, &a.shifted(&f, s), &z, 5.0, 64).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn polar_meridian_start() {
        let f = GeodesicFlow::new(SurfaceModel::sphere());
        let cap = Observable::indicator(&Region::parse(f.model, "cap(lat>=0)").unwrap());
        let z = f.model.phase_point(0, [0.0, FRAC_PI_2], [1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(birkhoff_average(&f, &cap, &z, TAU, 64).unwrap(), 0.5, epsilon = 1e-12);
    }
}
