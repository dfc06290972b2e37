//! Gaussian coherent states: the chart-local quantization pairing, spectral
//! projection on the round sphere, removal of low frequencies, and half-wave
//! propagation as a Gaussian beam.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gauss_hermite, gauss_legendre};
use crate::spectral::legendre_band;
use crate::surface::{cross, dot, norm, Vec3};

/// Symbol a(x, ξ) in chart coordinates.
pub type Symbol = Arc<dyn Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync>;

/// Inner radius of the smooth cutoff, in units of 1/√k.
pub const WINDOW_INNER: f64 = 4.5;
/// Default outer radius of the cutoff, in units of 1/√k.
pub const WINDOW_OUTER: f64 = 6.0;

/// Chart-local coherent state (k/π)^{1/2} e^{ik(x−x₀)·ξ₀ − (k/2)|x−x₀|²}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentState {
    pub center: [f64; 2],
    pub covector: [f64; 2],
    pub k: f64,
    /// Outer radius of the cutoff.
    pub window: f64,
}

impl CoherentState {
    pub fn new(center: [f64; 2], covector: [f64; 2], k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Input(format!("scale k must be positive, got {k}")));
        }
        if center.iter().chain(&covector).any(|v| !v.is_finite()) {
            return Err(Error::Input("center and covector must be finite".into()));
        }
        Ok(Self { center, covector, k, window: WINDOW_OUTER / k.sqrt() })
    }

    pub fn with_window(mut self, window: f64) -> Self {
        self.window = window;
        self
    }

    fn check_window(&self) -> Result<()> {
        if self.window * self.k.sqrt() < WINDOW_INNER {
            return Err(Error::Accuracy(format!(
                "window {} is below {WINDOW_INNER}/√k = {}",
                self.window,
                WINDOW_INNER / self.k.sqrt()
            )));
        }
        Ok(())
    }

    /// Smooth cutoff: 1 inside 4.5/√k, 0 beyond the window.
    pub fn cutoff(&self, rho: f64) -> f64 {
        let a = WINDOW_INNER / self.k.sqrt();
        if rho <= a {
            return 1.0;
        }
        if rho >= self.window {
            return 0.0;
        }
        let s = (rho - a) / (self.window - a);
        let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
        f(1.0 - s) / (f(1.0 - s) + f(s))
    }

    /// Unnormalized windowed amplitude at chart point x.
    pub fn amplitude(&self, x: [f64; 2]) -> Complex64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        let phase = self.k * (d[0] * self.covector[0] + d[1] * self.covector[1]);
        Complex64::from_polar((self.k / PI).sqrt() * (-0.5 * self.k * r2).exp() * self.cutoff(r2.sqrt()), phase)
    }

    /// ‖u‖² in the flat chart, by polar Gauss–Legendre quadrature.
    pub fn flat_norm_sq(&self) -> f64 {
        let rule = gauss_legendre(64);
        let mut acc = 0.0;
        for (r, w) in rule.scaled(0.0, self.window) {
            // The modulus is radial.
            let a = self.amplitude([self.center[0] + r, self.center[1]]).norm_sqr();
            acc += w * TAU * r * a;
        }
        acc
    }
}

/// ⟨Op(a)u_k, u_k⟩ as the reduced double integral
/// (k²/2π²)∬ a(x,ξ) e^{ik(x−x₀)·(ξ−ξ₀)} e^{−(k/2)(|x−x₀|²+|ξ−ξ₀|²)} dx dξ,
/// by tensor Gauss–Hermite quadrature in x − x₀ = √(2/k)p, ξ − ξ₀ = √(2/k)q.
pub fn coherent_pairing(state: &CoherentState, a: &Symbol, nodes: usize) -> Result<Complex64> {
    state.check_window()?;
    let rule = gauss_hermite(nodes);
    let h = (2.0 / state.k).sqrt();
    let pts: Vec<(f64, f64)> = rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect();
    let (x0, xi0) = (state.center, state.covector);
    let slabs: Vec<Complex64> = pts
        .par_iter()
        .map(|&(p1, w1)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(p2, w2) in &pts {
                let x = [x0[0] + h * p1, x0[1] + h * p2];
                for &(q1, v1) in &pts {
                    for &(q2, v2) in &pts {
                        let xi = [xi0[0] + h * q1, xi0[1] + h * q2];
                        let val = a(x, xi);
                        if val != 0.0 {
                            acc += Complex64::from_polar(w1 * w2 * v1 * v2 * val, 2.0 * (p1 * q1 + p2 * q2));
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let total: Complex64 = slabs.into_iter().sum();
    Ok(total * (2.0 / (PI * PI)))
}

/// Symbols used by the CLI and the checks: one, x1, x1sq, xi1sq, cos, x1xi1, gauss.
pub fn symbol_by_name(name: &str) -> Result<Symbol> {
    let s: Symbol = match name {
        "one" => Arc::new(|_, _| 1.0),
        "x1" => Arc::new(|x, _| x[0]),
        "x1sq" => Arc::new(|x, _| x[0] * x[0]),
        "xi1sq" => Arc::new(|_, xi| xi[0] * xi[0]),
        "cos" => Arc::new(|x, xi| (x[0] + xi[1]).cos()),
        "x1xi1" => Arc::new(|x, xi| x[0] * xi[0]),
        "gauss" => Arc::new(|x, xi| (-(x[0] * x[0] + xi[1] * xi[1])).exp()),
        _ => return Err(Error::Input(format!("unknown symbol `{name}`"))),
    };
    Ok(s)
}

/// Coherent state on the unit sphere, placed through geodesic normal
/// coordinates at `center`, together with its coefficients in the complex
/// harmonics Y_lm = p̄_l|m|(z)e^{imφ}.
///
/// Computations use a frame where the center is the north pole and the
/// direction is +x; `frame` maps that frame back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereState {
    pub k: f64,
    pub window: f64,
    pub lmax: usize,
    pub mmax: usize,
    /// Columns (center, direction, center × direction).
    pub frame: [Vec3; 3],
    /// ‖u‖² before renormalization to 1.
    pub raw_norm_sq: f64,
    pub coefficients: Vec<Complex64>,
    offsets: Vec<usize>,
    /// Polar nodes and weights (θ, w·sinθ) used for the window integrals.
    nodes: Vec<(f64, f64)>,
    nphi: usize,
}

/// Cutoff degree for a full expansion: k + 8√k.
pub fn full_degree(k: f64) -> usize {
    (k + 8.0 * k.sqrt()).ceil() as usize + 2
}

fn rotate(frame: &[Vec3; 3], p: &Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = frame[1][i] * p[0] + frame[2][i] * p[1] + frame[0][i] * p[2];
    }
    out
}

impl SphereState {
    /// `center` is (latitude, longitude); `direction` is the heading angle at
    /// the center, measured from east toward north.
    pub fn new(center: [f64; 2], direction: f64, k: f64, lmax: usize) -> Result<Self> {
        let flat = CoherentState::new([0.0, 0.0], [1.0, 0.0], k)?;
        flat.check_window()?;
        if !direction.is_finite() {
            return Err(Error::Input("direction must be finite".into()));
        }
        let (lat, lon) = (center[0], center[1]);
        let c = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
        let east = [-lon.sin(), lon.cos(), 0.0];
        let north = [-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos()];
        let e: Vec3 = std::array::from_fn(|i| direction.cos() * east[i] + direction.sin() * north[i]);
        let frame = [c, e, cross(&c, &e)];

        let window = flat.window;
        let kw = k * window;
        let mu = (kw + 8.0 * kw.cbrt() + 16.0).ceil() as usize;
        let mmax = mu.min(lmax);
        let nphi = mu + mmax + 32;
        let ntheta = 64 + (0.75 * (k + lmax as f64) * window).ceil() as usize;
        let nodes: Vec<(f64, f64)> =
            gauss_legendre(ntheta).scaled(0.0, window).map(|(t, w)| (t, w * t.sin())).collect();

        // Fourier modes in φ of u on each ring: û_m(θ) = ∫ u e^{−imφ} dφ.
        let dphi = TAU / nphi as f64;
        let rings: Vec<(Vec<Complex64>, f64)> = nodes
            .par_iter()
            .map(|&(theta, _)| {
                let vals: Vec<Complex64> = (0..nphi)
                    .map(|j| flat.amplitude([theta * (j as f64 * dphi).cos(), theta * (j as f64 * dphi).sin()]))
                    .collect();
                let mass: f64 = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() * dphi;
                let modes = (-(mmax as i64)..=mmax as i64)
                    .map(|m| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for (j, v) in vals.iter().enumerate() {
                            s += v * Complex64::from_polar(1.0, -(m as f64) * j as f64 * dphi);
                        }
                        s * dphi
                    })
                    .collect();
                (modes, mass)
            })
            .collect();
        let raw_norm_sq: f64 = nodes.iter().zip(&rings).map(|((_, w), (_, m))| w * m).sum();
        let scale = 1.0 / raw_norm_sq.sqrt();

        let mut offsets = Vec::with_capacity(lmax + 2);
        offsets.push(0);
        for l in 0..=lmax {
            offsets.push(offsets[l] + 2 * l.min(mmax) + 1);
        }
        let len = offsets[lmax + 1];
        // Fixed chunking keeps the reduction order independent of the thread count.
        let chunk = nodes.len().div_ceil(16);
        let partials: Vec<Vec<Complex64>> = nodes
            .par_chunks(chunk)
            .zip(rings.par_chunks(chunk))
            .map(|(ns, rs)| {
                let mut acc = vec![Complex64::new(0.0, 0.0); len];
                let mut p = Vec::new();
                for (&(theta, w), (modes, _)) in ns.iter().zip(rs) {
                    legendre_band(lmax, mmax, theta.cos(), &mut p);
                    for l in 0..=lmax {
                        let ml = l.min(mmax) as i64;
                        for m in -ml..=ml {
                            let pl = p[m.unsigned_abs() as usize * (lmax + 1) + l];
                            acc[offsets[l] + (m + ml) as usize] += modes[(m + mmax as i64) as usize] * (w * pl);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut coefficients = vec![Complex64::new(0.0, 0.0); len];
        for part in partials {
            for (c, v) in coefficients.iter_mut().zip(part) {
                *c += v;
            }
        }
        for c in &mut coefficients {
            *c *= scale;
        }
        Ok(Self { k, window, lmax, mmax, frame, raw_norm_sq, coefficients, offsets, nodes, nphi })
    }

    /// Expansion complete enough for propagation (lmax = k + 8√k).
    pub fn full(center: [f64; 2], direction: f64, k: f64) -> Result<Self> {
        Self::new(center, direction, k, full_degree(k))
    }

    pub fn coefficient(&self, l: usize, m: i64) -> Complex64 {
        let ml = l.min(self.mmax) as i64;
        if m.abs() > ml {
            return Complex64::new(0.0, 0.0);
        }
        self.coefficients[self.offsets[l] + (m + ml) as usize]
    }

    /// Σ|c_lm|², equal to ‖u‖² = 1 when the expansion is complete.
    pub fn coefficient_mass(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// γ(t) = cos t·x₀ + sin t·e.
    pub fn geodesic(&self, t: f64) -> Vec3 {
        rotate(&self.frame, &[t.sin(), 0.0, t.cos()])
    }

    /// Σ_lm c_lm e^{−itλ_l} Y_lm at (θ, φ) in the canonical frame, for a batch of φ on one ring.
    fn ring_values(&self, t: f64, theta: f64, phis: &[f64], p: &mut Vec<f64>) -> Vec<Complex64> {
        legendre_band(self.lmax, self.mmax, theta.cos(), p);
        let mm = self.mmax as i64;
        let mut sm = vec![Complex64::new(0.0, 0.0); 2 * self.mmax + 1];
        for l in 0..=self.lmax {
            let lambda = ((l * (l + 1)) as f64).sqrt();
            let rot = Complex64::from_polar(1.0, -t * lambda);
            let ml = l.min(self.mmax) as i64;
            for m in -ml..=ml {
                let pl = p[m.unsigned_abs() as usize * (self.lmax + 1) + l];
                sm[(m + mm) as usize] += self.coefficients[self.offsets[l] + (m + ml) as usize] * rot * pl;
            }
        }
        phis.iter()
            .map(|phi| {
                let mut v = Complex64::new(0.0, 0.0);
                for (i, s) in sm.iter().enumerate() {
                    v += s * Complex64::from_polar(1.0, (i as i64 - mm) as f64 * phi);
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncatedState {
    pub k: f64,
    pub cutoff: usize,
    /// ‖π_N u_k‖.
    pub discarded: f64,
    /// ‖u_k − π_N u_k‖², by quadrature on the window.
    pub remainder_norm_sq: f64,
    /// Measured constant C in sup|φ_j| ≤ C λ_j.
    pub sup_constant: f64,
    /// C·2·√π·N²/√k.
    pub bound: f64,
    pub coefficients: Vec<Complex64>,
}

/// Smallest C with sup|Y_lm| ≤ C·λ_l for 1 ≤ l ≤ lmax, measured on a grid in z.
pub fn sup_constant(lmax: usize) -> f64 {
    let mut best = 0.0f64;
    let mut p = Vec::new();
    for i in 0..=2000 {
        let z = -1.0 + 2.0 * i as f64 / 2000.0;
        crate::spectral::legendre_normalized(lmax, z, &mut p);
        for l in 1..=lmax {
            let lambda = ((l * (l + 1)) as f64).sqrt();
            for m in 0..=l {
                best = best.max(p[crate::spectral::tri(l, m)].abs() / lambda);
            }
        }
    }
    best
}

/// Projects out the first N complex harmonics (ordered by l, then m from −l
/// to l) and checks ‖π_N u_k‖ ≤ ε. A violation reports the scale k at which
/// the Sobolev estimate guarantees the bound.
pub fn truncate_high_frequency(state: &SphereState, n: usize, eps: f64) -> Result<TruncatedState> {
    let lneed = (n as f64).sqrt().ceil() as usize;
    if n > 0 && (lneed > state.lmax + 1 || state.mmax < state.lmax.min(lneed)) {
        return Err(Error::Precondition(format!("expansion to degree {} does not cover N = {n}", state.lmax)));
    }
    let mut coefficients = Vec::new();
    let mut discarded = 0.0;
    let mut idx = 0usize;
    'outer: for l in 0..=state.lmax {
        for m in -(l as i64)..=l as i64 {
            if idx >= n {
                break 'outer;
            }
            let c = state.coefficient(l, m);
            discarded += c.norm_sqr();
            coefficients.push(c);
            idx += 1;
        }
    }
    let discarded = discarded.sqrt();

    // ‖u − Pu‖² = ∫_window |u − Pu|² + ‖Pu‖² − ∫_window |Pu|².
    let flat = CoherentState::new([0.0, 0.0], [1.0, 0.0], state.k)?.with_window(state.window);
    let scale = 1.0 / state.raw_norm_sq.sqrt();
    let dphi = TAU / state.nphi as f64;
    let lp = lneed.min(state.lmax);
    let mut p = Vec::new();
    let (mut inside_diff, mut inside_proj) = (0.0, 0.0);
    for &(theta, w) in &state.nodes {
        legendre_band(lp, lp, theta.cos(), &mut p);
        for j in 0..state.nphi {
            let phi = j as f64 * dphi;
            let u = flat.amplitude([theta * phi.cos(), theta * phi.sin()]) * scale;
            let mut pu = Complex64::new(0.0, 0.0);
            let mut i = 0usize;
            'sum: for l in 0..=lp {
                for m in -(l as i64)..=l as i64 {
                    if i >= n {
                        break 'sum;
                    }
                    pu += coefficients[i]
                        * p[m.unsigned_abs() as usize * (lp + 1) + l]
                        * Complex64::from_polar(1.0, m as f64 * phi);
                    i += 1;
                }
            }
            inside_diff += w * dphi * (u - pu).norm_sqr();
            inside_proj += w * dphi * pu.norm_sqr();
        }
    }
    let remainder_norm_sq = inside_diff + discarded * discarded - inside_proj;

    let sup = sup_constant(lp.max(1));
    let bound = sup * 2.0 * PI.sqrt() * (n * n) as f64 / state.k.sqrt();
    if discarded > eps {
        let k_req = (sup * 2.0 * PI.sqrt() * (n * n) as f64 / eps).powi(2);
        return Err(Error::Accuracy(format!(
            "‖π_N u_k‖ = {discarded:.3e} exceeds ε = {eps}; the Sobolev estimate needs k ≥ {k_req:.3e}"
        )));
    }
    Ok(TruncatedState { k: state.k, cutoff: n, discarded, remainder_norm_sq, sup_constant: sup, bound, coefficients })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSample {
    pub t: f64,
    pub tube_radius: f64,
    /// ∫ over the geodesic ball of radius r around γ(t) of |e^{−it√Δ}u_k|².
    pub tube_mass: f64,
    /// Σ|c_lm|², preserved by the propagator.
    pub total_mass: f64,
    pub center: Vec3,
    /// Distance from γ(t) to the normalized centroid of |·|² in the tube.
    pub centroid_distance: f64,
    /// Mean of the z coordinate over the tube, weighted by |·|².
    pub mean_z: f64,
}

/// Applies Σ e^{−itλ}P_λ and integrates |·|² over the ball of radius r around γ(t).
///
/// The sign makes the beam travel along +ξ₀, matching π∘φ_t(x₀, ξ₀).
pub fn propagate_beam(state: &SphereState, t: f64, r: f64) -> Result<BeamSample> {
    if !(r > 0.0) || r >= PI {
        return Err(Error::Input(format!("tube radius must lie in (0, π), got {r}")));
    }
    if !t.is_finite() {
        return Err(Error::Input("time must be finite".into()));
    }
    if state.lmax < full_degree(state.k) - 2 {
        return Err(Error::Precondition(format!("propagation needs degree ≥ {}", full_degree(state.k) - 2)));
    }
    let gc: Vec3 = [t.sin(), 0.0, t.cos()];
    let theta_c = gc[2].clamp(-1.0, 1.0).acos();
    let phi_c = if t.sin() >= 0.0 { 0.0 } else { PI };
    let (lo, hi) = ((theta_c - r).max(0.0), (theta_c + r).min(PI));
    let ring_nodes: Vec<(f64, f64)> = gauss_legendre(96).scaled(lo, hi).collect();
    let unit: Vec<(f64, f64)> = gauss_legendre(96).scaled(-1.0, 1.0).collect();
    let rows: Vec<(f64, [f64; 3])> = ring_nodes
        .par_iter()
        .map(|&(theta, wt)| {
            let (st, ct) = theta.sin_cos();
            let denom = st * theta_c.sin();
            let arg = if denom.abs() < 1e-300 { -2.0 } else { (r.cos() - ct * theta_c.cos()) / denom };
            let half = if arg <= -1.0 {
                PI
            } else if arg >= 1.0 {
                return (0.0, [0.0; 3]);
            } else {
                arg.acos()
            };
            let phis: Vec<(f64, f64)> = unit.iter().map(|&(x, w)| (phi_c + half * x, half * w)).collect();
            let angles: Vec<f64> = phis.iter().map(|x| x.0).collect();
            let mut p = Vec::new();
            let vals = state.ring_values(t, theta, &angles, &mut p);
            let (mut mass, mut c) = (0.0, [0.0; 3]);
            for ((phi, wp), v) in phis.iter().zip(&vals) {
                let d = wt * wp * st * v.norm_sqr();
                mass += d;
                c[0] += d * st * phi.cos();
                c[1] += d * st * phi.sin();
                c[2] += d * ct;
            }
            (mass, c)
        })
        .collect();
    let mass: f64 = rows.iter().map(|r| r.0).sum();
    let mut c = [0.0; 3];
    for (_, v) in &rows {
        for i in 0..3 {
            c[i] += v[i];
        }
    }
    let mean_canonical = c.map(|x| x / mass);
    let n = norm(&mean_canonical);
    let dir = mean_canonical.map(|x| x / n);
    let centroid_distance = dot(&dir, &gc).clamp(-1.0, 1.0).acos();
    let mean = rotate(&state.frame, &mean_canonical);
    Ok(BeamSample {
        t,
        tube_radius: r,
        tube_mass: mass,
        total_mass: state.coefficient_mass(),
        center: state.geodesic(t),
        centroid_distance,
        mean_z: mean[2],
    })
}
