//! One-dimensional quadrature rules and the product rule on the sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sphere::{from_spherical, SphericalCoord, UnitVector};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Product rule on the sphere: Gauss–Legendre in `cos θ` times a uniform
/// (trapezoidal, hence periodic-exact) rule in `φ`.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    n_theta: usize,
    n_phi: usize,
    points: Vec<UnitVector>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub const DEFAULT_N_THETA: usize = 128;
    pub const DEFAULT_N_PHI: usize = 256;

    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::Config("quadrature grid needs at least one node per axis".into()));
        }
        let (t, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in t.iter().zip(&w) {
            let theta = ct.clamp(-1.0, 1.0).acos();
            for k in 0..n_phi {
                points.push(from_spherical(SphericalCoord::new(theta, k as f64 * dphi)?));
                weights.push(wt * dphi);
            }
        }
        Ok(QuadratureGrid {
            n_theta,
            n_phi,
            points,
            weights,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&UnitVector, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// `∫_{S²} f dΩ`.
    pub fn integrate(&self, f: impl Fn(&UnitVector) -> f64) -> f64 {
        self.nodes().map(|(x, w)| w * f(x)).sum()
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid::new(Self::DEFAULT_N_THETA, Self::DEFAULT_N_PHI).expect("default grid")
    }
}
