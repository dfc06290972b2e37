//! Zoll detection from a finite list of eigenvalues of √Δ: the difference
//! set, the spectral gap, uniform local finiteness and the fit of an
//! arithmetic net (2π/T)(σ + ℤ).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::eigenbasis;
use crate::surface::SurfaceModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    /// Differences in [0, window] are binned.
    pub window: f64,
    pub bins: usize,
    /// Pairs are drawn from eigenvalues at or above this quantile of the list.
    pub tail_quantile: f64,
    pub gap_min: f64,
    pub ulf_length: f64,
    pub ulf_count: usize,
    /// Net fits accept a candidate spacing only above this phase coherence.
    pub coherence_min: f64,
    /// Zoll-consistent when the net residual is at most this fraction of 2π/T.
    pub residual_factor: f64,
    /// Not Zoll-consistent when at least this fraction of bins is hit.
    pub covered_threshold: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            window: 10.0,
            bins: 200,
            tail_quantile: 0.5,
            gap_min: 0.1,
            ulf_length: 0.5,
            ulf_count: 5,
            coherence_min: 0.9,
            residual_factor: 0.05,
            covered_threshold: 0.5,
        }
    }
}

/// Counts of pairwise differences binned over [0, window].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaHistogram {
    pub window: f64,
    pub counts: Vec<u64>,
    /// Fraction of bins with at least one difference.
    pub covered_fraction: f64,
    /// Fraction of bins farther than 0.05 from every integer that are hit.
    pub off_integer_fraction: f64,
}

impl SigmaHistogram {
    pub fn bin_width(&self) -> f64 {
        self.window / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }
}

/// Sorted distinct values (within 1e-9 relative).
pub fn distinct(spectrum: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = spectrum.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| (*b - *a).abs() <= 1e-9 * a.abs().max(1.0));
    v
}

fn tail_of(values: &[f64], quantile: f64) -> &[f64] {
    let start = ((values.len() as f64 * quantile).floor() as usize).min(values.len().saturating_sub(2));
    &values[start..]
}

/// Histogram of λ − μ ∈ [0, window] over distinct eigenvalues in the upper
/// part of the list, where the asymptotic difference set is visible.
pub fn sigma_histogram(spectrum: &[f64], window: f64, bins: usize, tail_quantile: f64) -> Result<SigmaHistogram> {
    let d = distinct(spectrum);
    if d.len() < 2 {
        return Err(Error::Input("the difference set needs at least two eigenvalues".into()));
    }
    if !(window > 0.0) || bins == 0 {
        return Err(Error::Precondition("window and bin count must be positive".into()));
    }
    let t = tail_of(&d, tail_quantile);
    let w = window / bins as f64;
    let mut counts = vec![0u64; bins];
    for (i, a) in t.iter().enumerate() {
        for b in &t[i + 1..] {
            let diff = b - a;
            if diff > window {
                break;
            }
            counts[((diff / w) as usize).min(bins - 1)] += 1;
        }
    }
    let covered = counts.iter().filter(|c| **c > 0).count() as f64 / bins as f64;
    let (mut off, mut off_hit) = (0usize, 0usize);
    for (i, c) in counts.iter().enumerate() {
        let (lo, hi) = (i as f64 * w, (i + 1) as f64 * w);
        // Bin lies entirely farther than 0.05 from the nearest integer.
        let near = (lo - lo.round()).abs() <= 0.05 || (hi - hi.round()).abs() <= 0.05 || lo.floor() != hi.floor();
        if !near {
            off += 1;
            off_hit += usize::from(*c > 0);
        }
    }
    let off_integer_fraction = if off == 0 { 0.0 } else { off_hit as f64 / off as f64 };
    Ok(SigmaHistogram { window, counts, covered_fraction: covered, off_integer_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub flag: bool,
    /// Smallest distance between distinct eigenvalues (∞ for fewer than two).
    pub c: f64,
}

pub fn gap_test(spectrum: &[f64], c_min: f64) -> GapResult {
    let d = distinct(spectrum);
    let c = d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    GapResult { flag: c >= c_min, c }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlfResult {
    pub flag: bool,
    pub length: f64,
    pub count: usize,
    /// Largest number of distinct eigenvalues in a closed interval of the given length.
    pub worst: usize,
    /// Left end of a worst window.
    pub at: f64,
}

pub fn ulf_test(spectrum: &[f64], length: f64, count: usize) -> Result<UlfResult> {
    if !(length > 0.0) || count == 0 {
        return Err(Error::Precondition("ULF needs ℓ > 0 and m ≥ 1".into()));
    }
    let d = distinct(spectrum);
    let (mut worst, mut at, mut j) = (0usize, f64::NAN, 0usize);
    for (i, x) in d.iter().enumerate() {
        j = j.max(i);
        while j + 1 < d.len() && d[j + 1] - x <= length {
            j += 1;
        }
        if j + 1 - i > worst {
            worst = j + 1 - i;
            at = *x;
        }
    }
    Ok(UlfResult { flag: worst <= count, length, count, worst, at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetFit {
    pub period: f64,
    pub sigma: f64,
    /// max |λ − (2π/T)(σ + n)| over the upper part of the list.
    pub max_residual: f64,
    pub coherence: f64,
    /// Histogram peak the spacing search started from.
    pub peak: f64,
}

fn coherence(values: &[f64], weights: &[f64], a: f64) -> f64 {
    let (mut c, mut s, mut wsum) = (0.0, 0.0, 0.0);
    for (x, w) in values.iter().zip(weights) {
        let (si, ci) = (TAU * x / a).sin_cos();
        c += w * ci;
        s += w * si;
        wsum += w;
    }
    c.hypot(s) / wsum
}

/// Fits λ_j ≈ (2π/T)(σ + n_j) with integer n_j.
///
/// The spacing starts at the dominant histogram peak divided by the smallest
/// q whose phase coherence clears the threshold, is tuned by a ±5% scan, and
/// is then refined by alternating integer rounding with weighted regression.
/// Weights (λ/λ_max)² favour the high end, where clustering is asymptotic.
pub fn net_fit(spectrum: &[f64], settings: &DetectorSettings) -> Result<Option<NetFit>> {
    let d = distinct(spectrum);
    if d.len() < 10 {
        return Err(Error::Input("net fit needs at least 10 distinct eigenvalues".into()));
    }
    let tail = tail_of(&d, settings.tail_quantile);
    let spacing = {
        let mut g: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
        g.sort_by(f64::total_cmp);
        g[g.len() / 2]
    };
    if !(spacing > 0.0) {
        return Ok(None);
    }
    // Scale-free window so that the fit is equivariant under λ ↦ sλ.
    let window = settings.window * spacing;
    let hist = sigma_histogram(&d, window, settings.bins, settings.tail_quantile)?;
    let Some((ipk, _)) =
        hist.counts.iter().enumerate().skip(1).filter(|c| *c.1 > 0).max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
    else {
        return Ok(None);
    };
    // Mean difference inside the peak bin; the bin centre is too coarse to seed the scan.
    let (lo, hi) = (ipk as f64 * hist.bin_width(), (ipk + 1) as f64 * hist.bin_width());
    let (mut psum, mut pcount) = (0.0, 0usize);
    for (i, x) in tail.iter().enumerate() {
        for y in &tail[i + 1..] {
            let diff = y - x;
            if diff >= hi {
                break;
            }
            if diff >= lo {
                psum += diff;
                pcount += 1;
            }
        }
    }
    let peak = if pcount > 0 { psum / pcount as f64 } else { hist.bin_center(ipk) };
    let lmax = *d.last().unwrap();
    let w: Vec<f64> = d.iter().map(|x| (x / lmax).powi(2)).collect();
    let wt = &w[d.len() - tail.len()..];

    let mut found = None;
    for q in 1..=6 {
        let a0 = peak / q as f64;
        let (mut a, mut best) = (a0, coherence(tail, wt, a0));
        for i in 0..=2000 {
            let c = a0 * (0.95 + 0.1 * i as f64 / 2000.0);
            let v = coherence(tail, wt, c);
            if v > best {
                best = v;
                a = c;
            }
        }
        if best >= settings.coherence_min {
            found = Some(a);
            break;
        }
    }
    let Some(mut a) = found else { return Ok(None) };
    // Offset from the mean phase.
    let phase = |a: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (x, ww) in tail.iter().zip(wt) {
            let (si, ci) = (TAU * x / a).sin_cos();
            c += ww * ci;
            s += ww * si;
        }
        s.atan2(c).rem_euclid(TAU) / TAU
    };
    let mut sigma = phase(a);
    let mut n: Vec<f64> = Vec::new();
    for _ in 0..50 {
        let n_new: Vec<f64> = tail.iter().map(|x| (x / a - sigma).round()).collect();
        if n_new == n {
            break;
        }
        n = n_new;
        // Weighted least squares for λ = a·n + b.
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((x, nn), ww) in tail.iter().zip(&n).zip(wt) {
            sw += ww;
            sx += ww * nn;
            sy += ww * x;
            sxx += ww * nn * nn;
            sxy += ww * nn * x;
        }
        let det = sw * sxx - sx * sx;
        if det.abs() < 1e-300 {
            break;
        }
        a = (sw * sxy - sx * sy) / det;
        let b = (sy - a * sx) / sw;
        sigma = b / a;
    }
    let shift = sigma.floor();
    sigma -= shift;
    let max_residual = tail
        .iter()
        .map(|x| {
            let r = x / a - sigma;
            (r - r.round()).abs() * a
        })
        .fold(0.0, f64::max);
    Ok(Some(NetFit { period: TAU / a, sigma, max_residual, coherence: coherence(tail, wt, a), peak }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ZollConsistent,
    NotZollConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZollVerdict {
    pub schema_version: u32,
    pub source: String,
    pub count: usize,
    pub distinct: usize,
    pub gap: GapResult,
    pub ulf: UlfResult,
    pub net: Option<NetFit>,
    pub net_flag: bool,
    pub histogram: SigmaHistogram,
    pub verdict: Verdict,
    pub settings: DetectorSettings,
}

/// Zoll-consistent iff the net residual is within residual_factor·(2π/T);
/// otherwise not Zoll-consistent iff the histogram coverage reaches the
/// threshold; otherwise inconclusive.
pub fn detect(spectrum: &[f64], source: &str, settings: &DetectorSettings) -> Result<ZollVerdict> {
    let d = distinct(spectrum);
    let histogram = sigma_histogram(&d, settings.window, settings.bins, settings.tail_quantile)?;
    let gap = gap_test(&d, settings.gap_min);
    let ulf = ulf_test(&d, settings.ulf_length, settings.ulf_count)?;
    let net = if d.len() >= 10 { net_fit(&d, settings)? } else { None };
    let net_flag = net.as_ref().is_some_and(|f| f.max_residual <= settings.residual_factor * TAU / f.period);
    let verdict = if net_flag {
        Verdict::ZollConsistent
    } else if histogram.covered_fraction >= settings.covered_threshold {
        Verdict::NotZollConsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(ZollVerdict {
        schema_version: crate::report::SCHEMA_VERSION,
        source: source.into(),
        count: spectrum.len(),
        distinct: d.len(),
        gap,
        ulf,
        net,
        net_flag,
        histogram,
        verdict,
        settings: *settings,
    })
}

/// Eigenvalues of a built-in model: `sphere` (l ≤ cutoff) or `torus` (|k| ≤ cutoff).
pub fn builtin_spectrum(tag: &str, cutoff: f64) -> Result<Vec<f64>> {
    let model = SurfaceModel::from_name(tag)?;
    Ok(eigenbasis(&model, cutoff)?.eigenvalues_with_multiplicity())
}

/// One real per line; blank lines and `#` comments are skipped.
pub fn parse_spectrum(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 =
            body.parse().map_err(|_| Error::Input(format!("line {}: `{body}` is not a real number", i + 1)))?;
        if !v.is_finite() {
            return Err(Error::Input(format!("line {}: eigenvalue must be finite", i + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sphere(l: usize) -> Vec<f64> {
        (0..=l).map(|l| ((l * (l + 1)) as f64).sqrt()).collect()
    }

    /// Oracle: enumerate lattice norms directly.
    fn torus(r: i64) -> Vec<f64> {
        let mut v = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                if a * a + b * b <= r * r {
                    v.push(((a * a + b * b) as f64).sqrt());
                }
            }
        }
        v
    }

    #[test]
    fn builtin_matches_oracles() {
        assert_eq!(distinct(&builtin_spectrum("sphere", 60.0).unwrap()), sphere(60));
        let b = distinct(&builtin_spectrum("torus", 40.0).unwrap());
        let o = distinct(&torus(40));
        assert_eq!(b.len(), o.len());
        for (x, y) in b.iter().zip(&o) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_histogram_near_integers() {
        let h = sigma_histogram(&sphere(60), 10.0, 200, 0.5).unwrap();
        assert!(h.off_integer_fraction < 0.05);
        let total: u64 = h.counts.iter().sum();
        let near: u64 = h
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| (h.bin_center(*i) - h.bin_center(*i).round()).abs() <= 0.05)
            .map(|(_, c)| c)
            .sum();
        assert_eq!(near, total);
    }

    #[test]
    fn torus_histogram_dense() {
        let h = sigma_histogram(&torus(40), 10.0, 200, 0.5).unwrap();
        assert!(h.covered_fraction > 0.8);
    }

    #[test]
    fn arithmetic_differences_are_integers() {
        let v: Vec<f64> = (0..30).map(|j| j as f64).collect();
        let h = sigma_histogram(&v, 10.0, 200, 0.0).unwrap();
        for (i, c) in h.counts.iter().enumerate() {
            if *c > 0 {
                let (lo, hi) = (i as f64 * h.bin_width(), (i + 1) as f64 * h.bin_width());
                assert!((lo - lo.round()).abs() < 1e-12 || (hi - hi.round()).abs() < 1e-12, "bin {i}");
            }
        }
    }

    #[test]
    fn too_few_eigenvalues() {
        assert!(matches!(sigma_histogram(&[1.0, 1.0], 1.0, 10, 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn gaps() {
        let g = gap_test(&sphere(60), 0.1);
        assert!(g.flag && g.c >= 0.9 && g.c <= 1.0001);
        let g = gap_test(&torus(40), 0.1);
        assert!(!g.flag && g.c < 0.02);
        let g = gap_test(&[3.0, 3.0, 3.0], 0.1);
        assert!(g.flag && g.c.is_infinite());
    }

    #[test]
    fn ulf() {
        let s: Vec<f64> = sphere(60).into_iter().skip(2).collect();
        assert!(ulf_test(&s, 0.5, 1).unwrap().flag);
        let t = ulf_test(&torus(40), 0.5, 5).unwrap();
        assert!(!t.flag && t.worst > 5);
        assert!(ulf_test(&[], 0.5, 1).unwrap().flag);
    }

    #[test]
    fn sphere_net() {
        let f = net_fit(&sphere(60), &DetectorSettings::default()).unwrap().unwrap();
        assert!((f.period / TAU - 1.0).abs() < 0.01, "{f:?}");
        assert_abs_diff_eq!(f.sigma, 0.5, epsilon = 0.02);
        // Oracle: |√(l(l+1)) − (l + ½)| = (1/4)/((l + ½) + √(l(l+1))) ≤ 1/(8l + 4) for l ≥ 5.
        assert!(f.max_residual <= 1.0 / 44.0);
    }

    #[test]
    fn exact_net() {
        let v: Vec<f64> = (0..40).map(|j| 0.5 + j as f64).collect();
        let f = net_fit(&v, &DetectorSettings::default()).unwrap().unwrap();
        assert_abs_diff_eq!(f.period, TAU, epsilon = 1e-12);
        assert_abs_diff_eq!(f.sigma, 0.5, epsilon = 1e-12);
        assert!(f.max_residual < 1e-12);
    }

    #[test]
    fn verdicts() {
        let s = detect(&builtin_spectrum("sphere", 60.0).unwrap(), "sphere", &DetectorSettings::default()).unwrap();
        assert_eq!(s.verdict, Verdict::ZollConsistent);
        let t = detect(&builtin_spectrum("torus", 40.0).unwrap(), "torus", &DetectorSettings::default()).unwrap();
        assert_eq!(t.verdict, Verdict::NotZollConsistent);
        assert!(!t.net_flag && !t.ulf.flag);
    }

    #[test]
    fn pathological_spectrum_is_not_zoll() {
        // Square-root growth with close pairs: no arithmetic structure.
        let mut v = Vec::new();
        for j in 1..400 {
            let x = (j as f64).sqrt();
            v.push(x);
            v.push(x + 1.0 / (j as f64 + 2.0));
        }
        let r = detect(&v, "synthetic", &DetectorSettings::default()).unwrap();
        assert_ne!(r.verdict, Verdict::ZollConsistent);
    }

    #[test]
    fn parse_text() {
        let v = parse_spectrum("# header\n1.5\n\n 2.25 # trailing\n").unwrap();
        assert_eq!(v, vec![1.5, 2.25]);
        let e = parse_spectrum("1\nx\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
    }

    proptest! {
        #[test]
        fn gap_implies_ulf(mut v in proptest::collection::vec(0.0f64..100.0, 2..60)) {
            v.sort_by(f64::total_cmp);
            let g = gap_test(&v, 0.0);
            if g.c.is_finite() && g.c > 1e-6 {
                prop_assert!(ulf_test(&v, 0.5 * g.c, 1).unwrap().flag);
            }
        }

        #[test]
        fn net_scaling_equivariance(s in 0.3f64..5.0) {
            let base = sphere(60);
            let scaled: Vec<f64> = base.iter().map(|x| x * s).collect();
            let f0 = net_fit(&base, &DetectorSettings::default()).unwrap().unwrap();
            let f1 = net_fit(&scaled, &DetectorSettings::default()).unwrap().unwrap();
            prop_assert!((f1.period * s / f0.period - 1.0).abs() < 1e-6);
            prop_assert!((f1.sigma - f0.sigma).abs() < 1e-6);
        }

        #[test]
        fn deterministic(v in proptest::collection::vec(0.0f64..50.0, 12..40)) {
            let a = detect(&v, "x", &DetectorSettings::default()).unwrap();
            let b = detect(&v, "x", &DetectorSettings::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}
