//! Associated Legendre functions, Legendre polynomials and complex spherical
//! harmonics `Y_m^l`, orthonormal on the sphere with the Condon–Shortley phase.
//!
//! Normalized values `P̄_l^m = sqrt((2l+1)/(4π) (l-m)!/(l+m)!) P_l^m` are built
//! directly by recurrence so no factorial ratio is ever formed.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{UnitVector, POLE_EPS};

/// Highest harmonic level supported anywhere in the crate.
pub const L_MAX: usize = 128;

/// Index of `(l, m)` in a flat buffer holding levels `0..=L`.
#[inline]
pub fn flat_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Length of a flat buffer holding levels `0..=l_max`.
#[inline]
pub fn flat_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Values of one harmonic level, indexed by `m = -l..=l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicLevel {
    pub l: usize,
    pub values: Vec<Complex64>,
}

impl HarmonicLevel {
    pub fn get(&self, m: i64) -> Complex64 {
        self.values[(m + self.l as i64) as usize]
    }
}

/// Spherical Fourier coefficients of one level, indexed by `m = -l..=l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffLevel {
    pub l: usize,
    pub values: Vec<Complex64>,
}

impl CoeffLevel {
    pub fn zeros(l: usize) -> Self {
        CoeffLevel {
            l,
            values: vec![Complex64::new(0.0, 0.0); 2 * l + 1],
        }
    }

    pub fn get(&self, m: i64) -> Complex64 {
        self.values[(m + self.l as i64) as usize]
    }

    pub fn get_mut(&mut self, m: i64) -> &mut Complex64 {
        &mut self.values[(m + self.l as i64) as usize]
    }

    /// `Σ_m |c_m|²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Unnormalized associated Legendre function `P_l^m(t)` with the
/// Condon–Shortley phase, `0 ≤ m ≤ l`, `|t| ≤ 1`.
pub fn assoc_legendre(l: usize, m: usize, t: f64) -> Result<f64> {
    if m > l {
        return Err(Error::Domain(format!("order m = {m} exceeds degree l = {l}")));
    }
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("argument t = {t} outside [-1, 1]")));
    }
    let s = ((1.0 - t) * (1.0 + t)).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= -((2 * k - 1) as f64) * s;
    }
    if l == m {
        return Ok(pmm);
    }
    let mut prev = pmm;
    let mut cur = t * (2 * m + 1) as f64 * pmm;
    for ll in (m + 2)..=l {
        let next = (t * (2 * ll - 1) as f64 * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Legendre polynomial `P_l(t)` by the three-term recurrence.
pub fn legendre_poly(l: usize, t: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => t,
        _ => {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=l {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// All Legendre polynomials `P_0(t)..=P_l_max(t)`.
pub fn legendre_polys(l_max: usize, t: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if l_max == 0 {
        return;
    }
    out[1] = t;
    for k in 2..=l_max {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * t * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// Precomputed recurrence coefficients for harmonics up to a fixed level.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    l_max: usize,
    // per (l, m) with m ≤ l - 2: a_lm and b_lm of the upward recurrence
    a: Vec<f64>,
    b: Vec<f64>,
    diag: Vec<f64>,
}

impl HarmonicBasis {
    pub fn new(l_max: usize) -> Result<Self> {
        if l_max > L_MAX {
            return Err(Error::Domain(format!(
                "harmonic level {l_max} exceeds the supported maximum {L_MAX}"
            )));
        }
        let n = flat_len(l_max);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for l in 2..=l_max {
            for m in 0..=(l - 2) {
                let (lf, mf) = (l as f64, m as f64);
                let i = flat_index(l, m as i64);
                a[i] = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let l1 = lf - 1.0;
                b[i] = ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt();
            }
        }
        let diag = (0..=l_max)
            .map(|m| {
                if m == 0 {
                    0.0
                } else {
                    ((2 * m + 1) as f64 / (2 * m) as f64).sqrt()
                }
            })
            .collect();
        Ok(HarmonicBasis { l_max, a, b, diag })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Normalized `P̄_l^m(cos θ)` for `0 ≤ m ≤ l ≤ l_max`, written at
    /// `flat_index(l, m)`; entries for negative `m` are left untouched.
    pub fn normalized_legendre(&self, cos_theta: f64, sin_theta: f64, out: &mut [f64]) {
        let l_max = self.l_max;
        let t = cos_theta;
        let mut pmm = 0.5 / PI.sqrt();
        for m in 0..=l_max {
            if m > 0 {
                pmm *= -self.diag[m] * sin_theta;
            }
            out[flat_index(m, m as i64)] = pmm;
            if m == l_max {
                break;
            }
            let mut prev = pmm;
            let mut cur = ((2 * m + 3) as f64).sqrt() * t * pmm;
            out[flat_index(m + 1, m as i64)] = cur;
            for l in (m + 2)..=l_max {
                let i = flat_index(l, m as i64);
                let next = self.a[i] * (t * cur - self.b[i] * prev);
                out[i] = next;
                prev = cur;
                cur = next;
            }
        }
    }

    /// All `Y_m^l(x)` for `l ≤ l_max`, written at `flat_index(l, m)`.
    ///
    /// `scratch` must hold `flat_len(l_max)` reals.
    pub fn eval_into(&self, x: &UnitVector, scratch: &mut [f64], out: &mut [Complex64]) {
        let st = x.sin_theta();
        self.normalized_legendre(x.z(), st, scratch);
        let unit = if st < POLE_EPS {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(x.x() / st, x.y() / st)
        };
        let mut phase = Complex64::new(1.0, 0.0);
        for m in 0..=self.l_max {
            if m > 0 {
                phase *= unit;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            for l in m..=self.l_max {
                let y = phase * scratch[flat_index(l, m as i64)];
                out[flat_index(l, m as i64)] = y;
                if m > 0 {
                    out[flat_index(l, -(m as i64))] = y.conj() * sign;
                }
            }
        }
    }

    /// Convenience allocation-per-call version of [`HarmonicBasis::eval_into`].
    pub fn eval(&self, x: &UnitVector) -> Vec<Complex64> {
        let n = flat_len(self.l_max);
        let mut scratch = vec![0.0; n];
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        self.eval_into(x, &mut scratch, &mut out);
        out
    }
}

/// All `2l+1` values of `Y_m^l` at `x`.
pub fn sph_harmonic_level(l: usize, x: &UnitVector) -> Result<HarmonicLevel> {
    let basis = HarmonicBasis::new(l)?;
    let all = basis.eval(x);
    let start = flat_index(l, -(l as i64));
    Ok(HarmonicLevel {
        l,
        values: all[start..start + 2 * l + 1].to_vec(),
    })
}
