//! Quadrature rules and scalar root/minimum finders shared by the numerics.

use std::cell::RefCell;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::rc::Rc;

use gauss_quad::{GaussHermite, GaussLegendre};

/// Gauss–Legendre nodes and weights on [-1, 1], sorted by node.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Nodes and weights mapped to [a, b].
    pub fn scaled(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.scaled(a, b).map(|(x, w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

thread_local! {
    static GL_CACHE: RefCell<HashMap<usize, Rc<Rule>>> = RefCell::new(HashMap::new());
    static GH_CACHE: RefCell<HashMap<usize, Rc<Rule>>> = RefCell::new(HashMap::new());
}

fn sorted(pairs: &[(f64, f64)]) -> Rule {
    let mut v = pairs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: v.iter().map(|p| p.0).collect(), weights: v.iter().map(|p| p.1).collect() }
}

/// Cached n-point Gauss–Legendre rule.
pub fn gauss_legendre(n: usize) -> Rc<Rule> {
    let n = n.max(1);
    GL_CACHE.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let gl = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
                Rc::new(sorted(gl.as_node_weight_pairs()))
            })
            .clone()
    })
}

/// Cached n-point Gauss–Hermite rule for the weight e^{-x²}.
pub fn gauss_hermite(n: usize) -> Rc<Rule> {
    let n = n.max(1);
    GH_CACHE.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let gh = GaussHermite::new(NonZeroUsize::new(n).unwrap());
                Rc::new(sorted(gh.as_node_weight_pairs()))
            })
            .clone()
    })
}

/// Root of `f` in [a, b] given a sign change, by the Illinois variant of regula falsi.
pub fn illinois<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < tol {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < tol {
            break;
        }
    }
    0.5 * (a + b)
}

/// Minimizer of a unimodal `f` on [a, b] by golden-section search.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)].into_iter().min_by(|p, q| p.1.total_cmp(&q.1)).unwrap()
}

/// Ordinary least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_polynomial_exactness() {
        let r = gauss_legendre(5);
        // Degree 9 is the highest integrated exactly by 5 points.
        assert_abs_diff_eq!(r.integrate(0.0, 2.0, |x| x.powi(9)), 102.4, epsilon = 1e-11);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(20);
        let pi = std::f64::consts::PI;
        let m0: f64 = r.weights.iter().sum();
        let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        assert_abs_diff_eq!(m0, pi.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(m2, pi.sqrt() / 2.0, epsilon = 1e-13);
    }

    #[test]
    fn root_and_min() {
        let r = illinois(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-12);
        let (x, _) = golden_min(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-10);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-8);
    }

    #[test]
    fn slope_of_line() {
        assert_abs_diff_eq!(ls_slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]), -2.0, epsilon = 1e-14);
    }
}
