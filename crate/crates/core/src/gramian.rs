//! Time-averaged observation operator Ā_T(ω) = Σ f_T(λ−μ) P_λ χ_ω P_μ on a
//! truncated eigenbasis, its diagonal limit, observability constants and the
//! Montgomery–Vaughan bilinear bound.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::gap_test;
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::quad::ls_slope;
use crate::spectral::{gram_full, SpectrumTable};

pub const DEFAULT_BASIS_CAP: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Finite(f64),
    Infinity,
}

/// f_T(s) = (1/T)∫₀ᵀ e^{ist} dt = e^{isT/2} sinc(sT/2), with f_T(0) = 1.
pub fn filter(t: f64, s: f64) -> Complex64 {
    let x = 0.5 * s * t;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    Complex64::from_polar(sinc, x)
}

/// Weighted Gram matrix ∫ w φ_i φ_j on the whole truncated basis, from which
/// Ā_T is obtained at any horizon without new quadrature.
#[derive(Debug, Clone)]
pub struct GramianBase {
    pub weight: String,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    pub gram: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Gramian {
    pub horizon: Horizon,
    pub weight: String,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    pub matrix: DMatrix<Complex64>,
}

impl GramianBase {
    pub fn new(table: &SpectrumTable, weight: &Observable, cap: usize) -> Result<Self> {
        if table.len() > cap {
            return Err(Error::Budget(format!("basis size {} exceeds the cap {cap}", table.len())));
        }
        if !weight.is_pullback() {
            return Err(Error::Precondition("the observation weight must be a function of the base point".into()));
        }
        Ok(Self {
            weight: weight.describe(),
            lambda_max: table.lambda_max,
            lambdas: table.basis_lambdas(),
            gram: gram_full(table, weight, &table.quad_spec()),
        })
    }

    fn same_space(&self, i: usize, j: usize) -> bool {
        (self.lambdas[i] - self.lambdas[j]).abs() <= 1e-9 * self.lambdas[i].max(1.0)
    }

    pub fn at(&self, horizon: Horizon) -> Result<Gramian> {
        if let Horizon::Finite(t) = horizon {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Precondition(format!("horizon must be positive, got {t}")));
            }
        }
        let n = self.lambdas.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            let g = self.gram[(i, j)];
            match horizon {
                Horizon::Infinity => Complex64::new(if self.same_space(i, j) { g } else { 0.0 }, 0.0),
                Horizon::Finite(_) if self.same_space(i, j) => Complex64::new(g, 0.0),
                Horizon::Finite(t) => filter(t, self.lambdas[i] - self.lambdas[j]) * g,
            }
        });
        Ok(Gramian {
            horizon,
            weight: self.weight.clone(),
            lambda_max: self.lambda_max,
            lambdas: self.lambdas.clone(),
            matrix,
        })
    }

    /// Ā_T − Ā_∞: only the off-diagonal blocks survive.
    pub fn deviation(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.lambdas.len();
        DMatrix::from_fn(n, n, |i, j| {
            if self.same_space(i, j) {
                Complex64::new(0.0, 0.0)
            } else {
                filter(t, self.lambdas[i] - self.lambdas[j]) * self.gram[(i, j)]
            }
        })
    }
}

pub fn build_gramian(table: &SpectrumTable, weight: &Observable, horizon: Horizon) -> Result<Gramian> {
    GramianBase::new(table, weight, DEFAULT_BASIS_CAP)?.at(horizon)
}

impl Gramian {
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        d
    }
}

fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Hermitian eigen-solve produced non-finite values".into()));
    }
    Ok(ev.iter().copied().collect())
}

/// Smallest Rayleigh quotient of Ā_T on the truncated basis (raw, not clamped).
pub fn observability_constant(g: &Gramian) -> Result<f64> {
    if g.lambdas.is_empty() {
        return Err(Error::Input("empty basis".into()));
    }
    Ok(hermitian_eigenvalues(&g.matrix)?.into_iter().fold(f64::INFINITY, f64::min))
}

pub fn spectral_norm(m: &DMatrix<Complex64>) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.into_iter().fold(0.0, |a, v| a.max(v.abs())))
}

/// [½ min(g1, g2 of the interior), ½ min(g1, g2 of the closure)], the bracket for the time-normalized C_T.
pub fn sandwich_bracket(g1: f64, g2_open: f64, g2_closed: f64) -> (f64, f64) {
    (0.5 * g1.min(g2_open), 0.5 * g1.min(g2_closed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvCheck {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
    pub gap: f64,
}

/// |Σ_{j≠k} a_j b̄_k / (λ_j − λ_k)| against (π/δ)‖a‖‖b‖.
pub fn mv_bilinear_check(lambdas: &[f64], a: &[Complex64], b: &[Complex64]) -> Result<MvCheck> {
    if a.len() != lambdas.len() || b.len() != lambdas.len() {
        return Err(Error::Input("coefficient vectors must match the frequency list".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(Error::Precondition("frequencies must be distinct".into()));
    }
    let mut s = Complex64::new(0.0, 0.0);
    for (j, (lj, aj)) in lambdas.iter().zip(a).enumerate() {
        for (k, (lk, bk)) in lambdas.iter().zip(b).enumerate() {
            if j != k {
                s += aj * bk.conj() / (lj - lk);
            }
        }
    }
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let lhs = s.norm();
    let bound = PI / gap * norm(a) * norm(b);
    Ok(MvCheck { lhs, bound, ok: lhs <= bound * (1.0 + 1e-12), gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProbe {
    pub horizons: Vec<f64>,
    /// ‖Ā_T − Ā_∞‖ at each T.
    pub norms: Vec<f64>,
    /// max of the norm over [T, T + π]; removes the near-cancellations at T ∈ 2πℕ.
    pub envelope: Vec<f64>,
    pub slope: f64,
    pub envelope_slope: f64,
}

/// Operator-norm distance to the diagonal limit and its log-log slope.
pub fn norm_convergence_probe(table: &SpectrumTable, base: &GramianBase, horizons: &[f64]) -> Result<ConvergenceProbe> {
    if !gap_test(&table.eigenvalues(), 1e-6).flag {
        return Err(Error::Precondition("norm convergence needs a spectral gap".into()));
    }
    if horizons.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Precondition("horizons must be positive".into()));
    }
    const SAMPLES: usize = 16;
    let rows: Vec<Result<(f64, f64)>> = horizons
        .par_iter()
        .map(|&t| {
            let raw = spectral_norm(&base.deviation(t))?;
            let mut env = raw;
            for i in 1..=SAMPLES {
                env = env.max(spectral_norm(&base.deviation(t + PI * i as f64 / SAMPLES as f64))?);
            }
            Ok((raw, env))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let envelope: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let lx: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let slope_of = |v: &[f64]| {
        if v.iter().all(|x| *x == 0.0) {
            0.0
        } else {
            ls_slope(&lx, &v.iter().map(|x| x.ln()).collect::<Vec<_>>())
        }
    };
    Ok(ConvergenceProbe {
        horizons: horizons.to_vec(),
        slope: slope_of(&norms),
        envelope_slope: slope_of(&envelope),
        norms,
        envelope,
    })
}
