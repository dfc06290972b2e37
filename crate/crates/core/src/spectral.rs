//! Exact real eigenbases of √Δ on the sphere and the torus, and weighted
//! Gram ("mass") matrices of eigenspaces.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basequad::{nodes, NodeSet, QuadSpec};
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::surface::{SurfaceKind, SurfaceModel, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Const,
    Cos,
    Sin,
}

/// Which basis function an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisLabel {
    /// √2 p̄_lm(z) cos(mλ) or sin(mλ); p̄_l0(z) for m = 0.
    Harmonic { l: usize, m: usize, parity: Parity },
    /// cos(k·x)/(π√2), sin(k·x)/(π√2), or 1/(2π) for k = 0.
    Lattice { k: [i64; 2], parity: Parity },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenspace {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Index of the first basis function of the space.
    pub offset: usize,
    /// l on the sphere, |k|² on the torus.
    pub key: u64,
}

/// Sorted distinct eigenvalues of √Δ with orthonormal real bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub schema_version: u32,
    pub model: SurfaceModel,
    /// Degree cutoff on the sphere, frequency cutoff |k| on the torus.
    pub lambda_max: f64,
    pub spaces: Vec<Eigenspace>,
    pub basis: Vec<BasisLabel>,
}

/// Index of p̄_lm in the triangular layout.
#[inline]
pub fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Normalized associated Legendre values p̄_lm(z) for 0 ≤ m ≤ l ≤ lmax, with
/// 2π∫p̄_lm² dz = 1 and no Condon–Shortley sign.
pub fn legendre_normalized(lmax: usize, z: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(tri(lmax, lmax) + 1, 0.0);
    let s = (1.0 - z * z).max(0.0).sqrt();
    out[0] = 0.5 / PI.sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let prev = out[tri(m - 1, m - 1)];
            out[tri(m, m)] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * prev;
        }
        if m < lmax {
            out[tri(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * z * out[tri(m, m)];
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[tri(l, m)] = a * (z * out[tri(l - 1, m)] - b * out[tri(l - 2, m)]);
        }
    }
}

/// p̄_lm(z) for m ≤ mmax only, stored column-wise at `m * (lmax + 1) + l`
/// (zero for l < m).
pub fn legendre_band(lmax: usize, mmax: usize, z: f64, out: &mut Vec<f64>) {
    let mmax = mmax.min(lmax);
    let stride = lmax + 1;
    out.clear();
    out.resize((mmax + 1) * stride, 0.0);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let mut pmm = 0.5 / PI.sqrt();
    for m in 0..=mmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let col = &mut out[m * stride..(m + 1) * stride];
        col[m] = pmm;
        if m < lmax {
            col[m + 1] = ((2 * m + 3) as f64).sqrt() * z * pmm;
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            col[l] = a * (z * col[l - 1] - b * col[l - 2]);
        }
    }
}

/// p̄_lm(z) alone, by the same recurrences.
pub fn legendre_single(l: usize, m: usize, z: f64) -> f64 {
    let s = (1.0 - z * z).max(0.0).sqrt();
    let mut pmm = 0.5 / PI.sqrt();
    for j in 1..=m {
        pmm *= ((2 * j + 1) as f64 / (2 * j) as f64).sqrt() * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = ((2 * m + 3) as f64).sqrt() * z * pmm;
    for j in m + 2..=l {
        let (lf, mf) = (j as f64, m as f64);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        (prev, cur) = (cur, a * (z * cur - b * prev));
    }
    cur
}

/// Lattice half-plane representatives with |k|² = n, sorted.
fn lattice_shell(n: i64) -> Vec<[i64; 2]> {
    let r = (n as f64).sqrt().ceil() as i64;
    let mut v = Vec::new();
    for k1 in 0..=r {
        for k2 in -r..=r {
            if k1 * k1 + k2 * k2 == n && (k1 > 0 || k2 > 0) {
                v.push([k1, k2]);
            }
        }
    }
    v
}

impl SpectrumTable {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spaces.iter().map(|s| s.lambda).collect()
    }

    /// Eigenvalues repeated by multiplicity.
    pub fn eigenvalues_with_multiplicity(&self) -> Vec<f64> {
        self.spaces.iter().flat_map(|s| std::iter::repeat_n(s.lambda, s.multiplicity)).collect()
    }

    pub fn space_of(&self, lambda: f64) -> Result<usize> {
        self.spaces
            .iter()
            .position(|s| (s.lambda - lambda).abs() < 1e-9)
            .ok_or_else(|| Error::Precondition(format!("λ = {lambda} is not in the table")))
    }

    /// Eigenvalue of every basis function.
    pub fn basis_lambdas(&self) -> Vec<f64> {
        self.eigenvalues_with_multiplicity()
    }

    fn degree(&self) -> usize {
        match self.model.kind {
            SurfaceKind::Sphere => self.lambda_max as usize,
            _ => self.lambda_max.ceil() as usize,
        }
    }

    pub fn quad_spec(&self) -> QuadSpec {
        QuadSpec::with_degree(self.degree())
    }

    /// Values of every basis function at a working base point.
    pub fn eval_all(&self, p: &Vec3, out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        out.clear();
        match self.model.kind {
            SurfaceKind::Sphere => {
                let lmax = self.degree();
                legendre_normalized(lmax, p[2].clamp(-1.0, 1.0), scratch);
                let lon = p[1].atan2(p[0]);
                let (s1, c1) = lon.sin_cos();
                for l in 0..=lmax {
                    out.push(scratch[tri(l, 0)]);
                    let (mut cm, mut sm) = (1.0, 0.0);
                    for m in 1..=l {
                        let c = cm * c1 - sm * s1;
                        sm = sm * c1 + cm * s1;
                        cm = c;
                        let v = SQRT_2 * scratch[tri(l, m)];
                        out.push(v * cm);
                        out.push(v * sm);
                    }
                }
            }
            _ => {
                let norm = 1.0 / (PI * SQRT_2);
                for b in &self.basis {
                    let BasisLabel::Lattice { k, parity } = b else { unreachable!() };
                    let ph = k[0] as f64 * p[0] + k[1] as f64 * p[1];
                    out.push(match parity {
                        Parity::Const => 0.5 / PI,
                        Parity::Cos => norm * ph.cos(),
                        Parity::Sin => norm * ph.sin(),
                    });
                }
            }
        }
    }

    /// Value of basis function `i` at a working base point.
    pub fn eval_one(&self, p: &Vec3, i: usize) -> f64 {
        match self.basis[i] {
            BasisLabel::Harmonic { l, m, parity } => {
                let z = p[2].clamp(-1.0, 1.0);
                let v = legendre_single(l, m, z);
                let lon = p[1].atan2(p[0]);
                match parity {
                    Parity::Const => v,
                    Parity::Cos => SQRT_2 * v * (m as f64 * lon).cos(),
                    Parity::Sin => SQRT_2 * v * (m as f64 * lon).sin(),
                }
            }
            BasisLabel::Lattice { k, parity } => {
                let ph = k[0] as f64 * p[0] + k[1] as f64 * p[1];
                match parity {
                    Parity::Const => 0.5 / PI,
                    Parity::Cos => ph.cos() / (PI * SQRT_2),
                    Parity::Sin => ph.sin() / (PI * SQRT_2),
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!("unsupported schema_version {}", t.schema_version)));
        }
        Ok(t)
    }
}

/// Closed-form table up to `lambda_max` (degree l on the sphere, |k| on the torus).
pub fn eigenbasis(model: &SurfaceModel, lambda_max: f64) -> Result<SpectrumTable> {
    if !(lambda_max >= 0.0) {
        return Err(Error::Precondition("lambda_max must be nonnegative".into()));
    }
    let mut spaces = Vec::new();
    let mut basis = Vec::new();
    match model.kind {
        SurfaceKind::Sphere => {
            let lmax = lambda_max.floor() as usize;
            for l in 0..=lmax {
                spaces.push(Eigenspace {
                    lambda: ((l * (l + 1)) as f64).sqrt(),
                    multiplicity: 2 * l + 1,
                    offset: basis.len(),
                    key: l as u64,
                });
                basis.push(BasisLabel::Harmonic { l, m: 0, parity: Parity::Const });
                for m in 1..=l {
                    basis.push(BasisLabel::Harmonic { l, m, parity: Parity::Cos });
                    basis.push(BasisLabel::Harmonic { l, m, parity: Parity::Sin });
                }
            }
        }
        SurfaceKind::Torus => {
            let nmax = (lambda_max * lambda_max + 1e-9).floor() as i64;
            spaces.push(Eigenspace { lambda: 0.0, multiplicity: 1, offset: 0, key: 0 });
            basis.push(BasisLabel::Lattice { k: [0, 0], parity: Parity::Const });
            for n in 1..=nmax {
                let shell = lattice_shell(n);
                if shell.is_empty() {
                    continue;
                }
                spaces.push(Eigenspace {
                    lambda: (n as f64).sqrt(),
                    multiplicity: 2 * shell.len(),
                    offset: basis.len(),
                    key: n as u64,
                });
                for k in shell {
                    basis.push(BasisLabel::Lattice { k, parity: Parity::Cos });
                    basis.push(BasisLabel::Lattice { k, parity: Parity::Sin });
                }
            }
        }
        SurfaceKind::Revolution { .. } => {
            return Err(Error::Unsupported(
                "no closed-form eigenbasis for surfaces of revolution other than the sphere".into(),
            ))
        }
    }
    Ok(SpectrumTable { schema_version: SCHEMA_VERSION, model: *model, lambda_max, spaces, basis })
}

/// ∫ w φ_i φ_j over one eigenspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassMatrix {
    pub schema_version: u32,
    pub lambda: f64,
    pub offset: usize,
    pub weight: String,
    pub matrix: DMatrix<f64>,
    /// Ten times the change under one mesh refinement, when computed.
    pub error: Option<f64>,
}

impl MassMatrix {
    pub fn min_eigen(&self) -> (f64, Vec<f64>) {
        min_eigenpair(&self.matrix)
    }
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eigenpair(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = m.clone().symmetric_eigen();
    let (i, v) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, v)| (i, *v)).unwrap();
    (v, eig.eigenvectors.column(i).iter().copied().collect())
}

fn weighted_nodes(table: &SpectrumTable, weight: &Observable, spec: &QuadSpec) -> NodeSet {
    let mut ns = nodes(&table.model, weight, spec);
    for (p, w) in ns.points.iter().zip(ns.weights.iter_mut()) {
        *w *= weight.eval_base(p);
    }
    ns
}

fn blocks_on(table: &SpectrumTable, spaces: &[usize], ns: &NodeSet) -> Vec<DMatrix<f64>> {
    let mut acc: Vec<Vec<f64>> = spaces.iter().map(|&s| vec![0.0; table.spaces[s].multiplicity.pow(2)]).collect();
    let mut vals = Vec::new();
    let mut scratch = Vec::new();
    for (p, w) in ns.points.iter().zip(&ns.weights) {
        if *w == 0.0 {
            continue;
        }
        table.eval_all(p, &mut vals, &mut scratch);
        for (a, &s) in acc.iter_mut().zip(spaces) {
            let sp = &table.spaces[s];
            let v = &vals[sp.offset..sp.offset + sp.multiplicity];
            let d = sp.multiplicity;
            for i in 0..d {
                let wi = w * v[i];
                for j in i..d {
                    a[i * d + j] += wi * v[j];
                }
            }
        }
    }
    spaces
        .iter()
        .zip(acc)
        .map(|(&s, a)| {
            let d = table.spaces[s].multiplicity;
            DMatrix::from_fn(d, d, |i, j| if i <= j { a[i * d + j] } else { a[j * d + i] })
        })
        .collect()
}

/// Mass matrices of the listed eigenspaces for a pullback weight.
pub fn mass_matrices(table: &SpectrumTable, spaces: &[usize], weight: &Observable, spec: &QuadSpec) -> Vec<MassMatrix> {
    let ns = weighted_nodes(table, weight, spec);
    blocks_on(table, spaces, &ns)
        .into_iter()
        .zip(spaces)
        .map(|(m, &s)| MassMatrix {
            schema_version: SCHEMA_VERSION,
            lambda: table.spaces[s].lambda,
            offset: table.spaces[s].offset,
            weight: weight.describe(),
            matrix: m,
            error: None,
        })
        .collect()
}

/// Mass matrix of the eigenspace λ with a refinement error estimate.
pub fn mass_matrix(table: &SpectrumTable, lambda: f64, weight: &Observable, spec: &QuadSpec) -> Result<MassMatrix> {
    if !weight.is_pullback() {
        return Err(Error::Precondition("mass matrices need a weight on the base".into()));
    }
    let s = table.space_of(lambda)?;
    let mut coarse = mass_matrices(table, &[s], weight, spec).remove(0);
    let fine = mass_matrices(table, &[s], weight, &spec.finer()).remove(0);
    coarse.error = Some(10.0 * (&coarse.matrix - &fine.matrix).amax());
    Ok(coarse)
}

/// ∫ w φ_a φ_b over all basis indices in `range` (used by the Gramian).
pub fn gram_full(table: &SpectrumTable, weight: &Observable, spec: &QuadSpec) -> DMatrix<f64> {
    let ns = weighted_nodes(table, weight, spec);
    let n = table.len();
    let mut a = vec![0.0; n * n];
    let mut vals = Vec::new();
    let mut scratch = Vec::new();
    for (p, w) in ns.points.iter().zip(&ns.weights) {
        if *w == 0.0 {
            continue;
        }
        table.eval_all(p, &mut vals, &mut scratch);
        for i in 0..n {
            let wi = w * vals[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut a[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wi * vals[j];
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| if i <= j { a[i * n + j] } else { a[j * n + i] })
}

/// ∫ w φ_{λ,i} φ_{μ,j}.
pub fn cross_matrix_element(
    table: &SpectrumTable,
    lambda: f64,
    mu: f64,
    i: usize,
    j: usize,
    weight: &Observable,
    spec: &QuadSpec,
) -> Result<f64> {
    let (a, b) = (table.space_of(lambda)?, table.space_of(mu)?);
    let (sa, sb) = (table.spaces[a], table.spaces[b]);
    if i >= sa.multiplicity || j >= sb.multiplicity {
        return Err(Error::Precondition("basis index outside the eigenspace".into()));
    }
    let ns = weighted_nodes(table, weight, spec);
    let mut vals = Vec::new();
    let mut scratch = Vec::new();
    Ok(ns
        .points
        .iter()
        .zip(&ns.weights)
        .map(|(p, w)| {
            table.eval_all(p, &mut vals, &mut scratch);
            w * vals[sa.offset + i] * vals[sb.offset + j]
        })
        .sum())
}

/// Number of eigenvalues (with multiplicity) not exceeding λ.
pub fn counting_function(table: &SpectrumTable, lambda: f64) -> usize {
    table.spaces.iter().filter(|s| s.lambda <= lambda + 1e-12).map(|s| s.multiplicity).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::Region;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sphere_table_small() {
        let t = eigenbasis(&SurfaceModel::sphere(), 2.0).unwrap();
        let l: Vec<f64> = t.eigenvalues();
        assert_eq!(l.len(), 3);
        assert_abs_diff_eq!(l[1], 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(l[2], 6f64.sqrt(), epsilon = 1e-15);
        assert_eq!(t.spaces.iter().map(|s| s.multiplicity).collect::<Vec<_>>(), vec![1, 3, 5]);
    }

    #[test]
    fn torus_table_small() {
        let t = eigenbasis(&SurfaceModel::torus(), 1.5).unwrap();
        let l: Vec<f64> = t.eigenvalues();
        assert_eq!(l, vec![0.0, 1.0, 2f64.sqrt()]);
        assert_eq!(t.spaces.iter().map(|s| s.multiplicity).collect::<Vec<_>>(), vec![1, 4, 4]);
    }

    #[test]
    fn revolution_unsupported() {
        let m = SurfaceModel::from_name("zoll_revolution_demo").unwrap();
        assert!(matches!(eigenbasis(&m, 3.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn orthonormal_bases() {
        for (m, lmax) in [(SurfaceModel::sphere(), 8.0), (SurfaceModel::torus(), 5.0)] {
            let t = eigenbasis(&m, lmax).unwrap();
            let g = gram_full(&t, &Observable::Constant(1.0), &t.quad_spec());
            let id = DMatrix::<f64>::identity(t.len(), t.len());
            assert!((g - id).amax() < 1e-10);
        }
    }

    #[test]
    fn legendre_matches_closed_forms() {
        // Oracle: Y_10 = √(3/4π) z and Y_22 part √(15/32π)(1 − z²)·√2 ... checked via p̄.
        let mut v = Vec::new();
        let z = 0.3;
        legendre_normalized(2, z, &mut v);
        assert_abs_diff_eq!(v[tri(1, 0)], (3.0 / (4.0 * PI)).sqrt() * z, epsilon = 1e-15);
        assert_abs_diff_eq!(v[tri(1, 1)], (3.0 / (8.0 * PI)).sqrt() * (1.0 - z * z).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[tri(2, 0)], (5.0 / (16.0 * PI)).sqrt() * (3.0 * z * z - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v[tri(2, 2)], (15.0 / (32.0 * PI)).sqrt() * (1.0 - z * z), epsilon = 1e-15);
    }

    #[test]
    fn band_matches_triangle() {
        let (mut full, mut band) = (Vec::new(), Vec::new());
        legendre_normalized(40, -0.62, &mut full);
        legendre_band(40, 7, -0.62, &mut band);
        for m in 0..=7 {
            for l in m..=40 {
                assert_eq!(band[m * 41 + l], full[tri(l, m)]);
            }
        }
    }

    #[test]
    fn single_evaluation_matches_table() {
        for (m, lmax) in [(SurfaceModel::sphere(), 12.0), (SurfaceModel::torus(), 6.0)] {
            let t = eigenbasis(&m, lmax).unwrap();
            let p = match m.kind {
                SurfaceKind::Sphere => [0.36, -0.48, 0.8],
                _ => [0.7, 5.1, 0.0],
            };
            let (mut all, mut scratch) = (Vec::new(), Vec::new());
            t.eval_all(&p, &mut all, &mut scratch);
            for (i, v) in all.iter().enumerate() {
                assert_abs_diff_eq!(t.eval_one(&p, i), *v, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn whole_surface_mass_is_identity() {
        let s = SurfaceModel::sphere();
        let t = eigenbasis(&s, 6.0).unwrap();
        let m = mass_matrix(&t, 12f64.sqrt(), &Observable::Constant(1.0), &t.quad_spec()).unwrap();
        assert!((m.matrix - DMatrix::<f64>::identity(7, 7)).amax() < 1e-9);
    }

    #[test]
    fn hemisphere_diagonals_are_half() {
        let s = SurfaceModel::sphere();
        let t = eigenbasis(&s, 10.0).unwrap();
        let w = Observable::indicator(&Region::parse(s, "cap(lat>=0)").unwrap());
        let all: Vec<usize> = (0..t.spaces.len()).collect();
        for m in mass_matrices(&t, &all, &w, &t.quad_spec()) {
            for i in 0..m.matrix.nrows() {
                assert_abs_diff_eq!(m.matrix[(i, i)], 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn torus_strip_entry() {
        let tor = SurfaceModel::torus();
        let t = eigenbasis(&tor, 1.0).unwrap();
        let w = Observable::indicator(&Region::parse(tor, "strip(0,1)").unwrap());
        let m = mass_matrix(&t, 1.0, &w, &t.quad_spec()).unwrap();
        // Mode cos(x₂) is the cos entry of k = (0, 1); separated integral gives w/(2π).
        let idx = t.basis[t.spaces[1].offset..]
            .iter()
            .position(|b| *b == BasisLabel::Lattice { k: [0, 1], parity: Parity::Cos })
            .unwrap();
        assert_abs_diff_eq!(m.matrix[(idx, idx)], 1.0 / (2.0 * PI), epsilon = 1e-12);
        assert!(m.error.unwrap() < 1e-9);
    }

    #[test]
    fn cross_elements() {
        let s = SurfaceModel::sphere();
        let t = eigenbasis(&s, 3.0).unwrap();
        let whole = Observable::Constant(1.0);
        let v = cross_matrix_element(&t, 2f64.sqrt(), 6f64.sqrt(), 1, 2, &whole, &t.quad_spec()).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        // Oracle: 2π ∫₀¹ (1/√(4π)) √(3/(4π)) z dz = √3/4.
        let hemi = Observable::indicator(&Region::parse(s, "cap(lat>=0)").unwrap());
        let v = cross_matrix_element(&t, 0.0, 2f64.sqrt(), 0, 0, &hemi, &t.quad_spec()).unwrap();
        assert_abs_diff_eq!(v, 3f64.sqrt() / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn weyl_law_on_torus() {
        let t = eigenbasis(&SurfaceModel::torus(), 40.0).unwrap();
        for lam in [10.0, 20.0, 30.0, 40.0] {
            let n = counting_function(&t, lam) as f64;
            let weyl = PI * lam * lam;
            assert!((n / weyl - 1.0).abs() < 0.1, "{lam}: {n} vs {weyl}");
        }
    }

    #[test]
    fn json_round_trip() {
        let t = eigenbasis(&SurfaceModel::torus(), 3.0).unwrap();
        let back = SpectrumTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::region::Region;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mass_eigenvalues_in_unit_interval(lat in -1.4f64..1.4, a in 0.0f64..6.0, w in 0.1f64..3.0) {
            let s = SurfaceModel::sphere();
            let st = eigenbasis(&s, 5.0).unwrap();
            let cap = Observable::indicator(&Region::parse(s, &format!("cap(lat>={lat})")).unwrap());
            let t = SurfaceModel::torus();
            let tt = eigenbasis(&t, 3.0).unwrap();
            let strip = Observable::indicator(&Region::parse(t, &format!("strip({a},{})", a + w)).unwrap());
            for (table, weight) in [(&st, &cap), (&tt, &strip)] {
                let spaces: Vec<usize> = (0..table.spaces.len()).collect();
                for m in mass_matrices(table, &spaces, weight, &table.quad_spec()) {
                    let e = m.matrix.symmetric_eigenvalues();
                    prop_assert!(e.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)), "{e}");
                }
            }
        }
    }
}
