//! The spherical-harmonic isotropy test under rotational noise.
//!
//! For diagonal noise the deconvolved basis is `Φ_lm(x) = conj(Y_m^l(x)) / λ_l`
//! and the U-statistic
//!
//! ```text
//! T_L = 2/(N(N-1)) Σ_{l=1}^{L} Σ_m Σ_{i<j} Φ_lm(Z_i) conj(Φ_lm(Z_j))
//! ```
//!
//! is an unbiased estimate of `Σ_{1≤l≤L} Σ_m |f^{⋆l}_m|²`. Two evaluation routes
//! are provided: the basis route above in `O(N L²)`, and the kernel route via
//! the addition theorem, `Σ_m Φ_lm(x) conj(Φ_lm(y)) = λ_l⁻² (2l+1)/(4π) P_l(⟨x,y⟩)`,
//! in `O(N² L)`.
//!
//! The decision compares `max_L |T_L| / t_L²` with a Monte-Carlo quantile of the
//! same quantity under the uniform law.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{flat_index, flat_len, legendre_polys, CoeffLevel, HarmonicBasis};
use crate::noise::{NoiseDescriptor, NoiseModel, Smoothness};
use crate::parallel::map_indexed;
use crate::quadrature::QuadratureGrid;
use crate::rng::{substream, Purpose};
use crate::sphere::{sample_uniform, SphericalCoord, UnitVector};

/// Levels whose `λ_l` falls below this make the inverse problem unusable.
pub const LAMBDA_CUTOFF: f64 = 1e-13;

pub const MIN_CALIBRATION_REPLICATES: usize = 100;
pub const MIN_PVALUE_REPLICATES: usize = 500;

/// Dyadic set of truncation levels `{2^j0, ..., 2^jm}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LevelGrid {
    levels: Vec<usize>,
}

impl LevelGrid {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("level grid is empty".into()));
        }
        if levels.iter().any(|&l| l < 2 || !l.is_power_of_two()) {
            return Err(Error::Config(format!("levels must be powers of two >= 2: {levels:?}")));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("levels must be strictly increasing: {levels:?}")));
        }
        Ok(LevelGrid { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }
}

impl TryFrom<Vec<usize>> for LevelGrid {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        LevelGrid::new(v)
    }
}

impl From<LevelGrid> for Vec<usize> {
    fn from(g: LevelGrid) -> Self {
        g.levels
    }
}

/// Choice of the largest dyadic exponent `j_m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JmRule {
    /// `⌈log₂(N^{1/3} (log log N)^{-3/2})⌉`, the small grid used in simulations.
    #[default]
    Simulation,
    /// `⌈log₂(N (log log N)^{-3/2})⌉`, the grid of the adaptive upper bound.
    Full,
}

fn loglog(n: usize) -> f64 {
    (n as f64).ln().ln()
}

/// Level grid with the simulation rule for `j_m`.
pub fn level_grid(n: usize) -> Result<LevelGrid> {
    level_grid_with(n, JmRule::Simulation)
}

pub fn level_grid_with(n: usize, rule: JmRule) -> Result<LevelGrid> {
    if n < 16 {
        return Err(Error::Config(format!("level grid needs N >= 16, got {n}")));
    }
    let ll = loglog(n);
    let j0 = ll.log2().ceil().max(1.0) as u32;
    let base = match rule {
        JmRule::Simulation => (n as f64).cbrt(),
        JmRule::Full => n as f64,
    };
    let jm = (base * ll.powf(-1.5)).log2().ceil();
    let jm = if jm.is_finite() && jm >= j0 as f64 { jm as u32 } else { j0 };
    LevelGrid::new((j0..=jm).map(|j| 1usize << j).collect())
}

/// `t_L² = L^{2ν+1} √(log log N) / N`.
pub fn threshold_ordinary(level: usize, n: usize, nu: f64) -> f64 {
    (level as f64).powf(2.0 * nu + 1.0) * loglog(n).sqrt() / n as f64
}

/// `L* = ⌊(δ log N / 8)^{1/β}⌋`, at least 1.
pub fn lstar_supersmooth(n: usize, beta: f64, delta: f64) -> usize {
    let v = (delta * (n as f64).ln() / 8.0).powf(1.0 / beta).floor();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// `t_L² = L^{1-2ν0} exp(2 L^β / δ) / N`.
pub fn threshold_supersmooth(level: usize, n: usize, nu0: f64, beta: f64, delta: f64) -> f64 {
    let l = level as f64;
    l.powf(1.0 - 2.0 * nu0) * (2.0 * l.powf(beta) / delta).exp() / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMode {
    OrdinarySmooth,
    SuperSmooth,
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestMode::OrdinarySmooth => write!(f, "ordinary-smooth"),
            TestMode::SuperSmooth => write!(f, "super-smooth"),
        }
    }
}

/// Which truncation levels enter the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShtVariant {
    /// The dyadic level grid, with thresholds of the noise's smoothness class.
    Adaptive,
    /// The single level `L*` (super smooth noise only).
    SingleLevel,
}

impl std::str::FromStr for ShtVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(ShtVariant::Adaptive),
            "single-level" | "single" => Ok(ShtVariant::SingleLevel),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected adaptive or single-level)"))),
        }
    }
}

/// The truncation levels a test examines and their normalizing thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Procedure {
    pub mode: TestMode,
    pub variant: ShtVariant,
    pub n: usize,
    pub levels: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl Procedure {
    /// Adaptive test over a dyadic grid with `t_L² = L^{2ν+1}√(log log N)/N`.
    pub fn ordinary(noise: &NoiseModel, n: usize, grid: &LevelGrid) -> Result<Self> {
        let nu = match noise.smoothness() {
            Smoothness::Ordinary { nu, .. } => nu,
            Smoothness::Super { .. } => {
                return Err(Error::Config(format!(
                    "{noise} is super smooth; the ordinary-smooth procedure needs an ordinary smooth model"
                )))
            }
        };
        let levels = grid.levels().to_vec();
        let thresholds = levels.iter().map(|&l| threshold_ordinary(l, n, nu)).collect();
        Ok(Procedure {
            mode: TestMode::OrdinarySmooth,
            variant: ShtVariant::Adaptive,
            n,
            levels,
            thresholds,
        })
    }

    fn super_params(noise: &NoiseModel, n: usize) -> Result<(f64, f64, f64)> {
        let Smoothness::Super { nu0, beta, delta, .. } = noise.smoothness() else {
            return Err(Error::Config(format!(
                "{noise} is ordinary smooth; the super-smooth procedure needs a super smooth model"
            )));
        };
        if n < 3 {
            return Err(Error::Config(format!("super-smooth procedure needs N >= 3, got {n}")));
        }
        Ok((nu0, beta, delta))
    }

    /// Single-level test at `L*` with `t_L² = L^{1-2ν0} exp(2L^β/δ)/N`.
    pub fn supersmooth(noise: &NoiseModel, n: usize) -> Result<Self> {
        let (nu0, beta, delta) = Self::super_params(noise, n)?;
        let l = lstar_supersmooth(n, beta, delta);
        Ok(Procedure {
            mode: TestMode::SuperSmooth,
            variant: ShtVariant::SingleLevel,
            n,
            levels: vec![l],
            thresholds: vec![threshold_supersmooth(l, n, nu0, beta, delta)],
        })
    }

    /// Maximum over a dyadic grid with `t_L² = L^{1-2ν0} exp(2L^β/δ)/N`.
    pub fn supersmooth_adaptive(noise: &NoiseModel, n: usize, grid: &LevelGrid) -> Result<Self> {
        let (nu0, beta, delta) = Self::super_params(noise, n)?;
        let levels = grid.levels().to_vec();
        let thresholds = levels
            .iter()
            .map(|&l| threshold_supersmooth(l, n, nu0, beta, delta))
            .collect();
        Ok(Procedure {
            mode: TestMode::SuperSmooth,
            variant: ShtVariant::Adaptive,
            n,
            levels,
            thresholds,
        })
    }

    /// Adaptive grid for ordinary smooth noise, single level `L*` for super smooth noise.
    pub fn for_noise(noise: &NoiseModel, n: usize, rule: JmRule) -> Result<Self> {
        let variant = match noise.smoothness() {
            Smoothness::Ordinary { .. } => ShtVariant::Adaptive,
            Smoothness::Super { .. } => ShtVariant::SingleLevel,
        };
        Self::build(noise, n, rule, variant)
    }

    pub fn build(noise: &NoiseModel, n: usize, rule: JmRule, variant: ShtVariant) -> Result<Self> {
        match (noise.smoothness(), variant) {
            (Smoothness::Ordinary { .. }, ShtVariant::Adaptive) => Self::ordinary(noise, n, &level_grid_with(n, rule)?),
            (Smoothness::Super { .. }, ShtVariant::Adaptive) => {
                Self::supersmooth_adaptive(noise, n, &level_grid_with(n, rule)?)
            }
            (_, ShtVariant::SingleLevel) => Self::supersmooth(noise, n),
        }
    }

    pub fn max_level(&self) -> usize {
        *self.levels.iter().max().expect("procedure has levels")
    }
}

/// Observations with optional inverse-coverage weights `1/(c g0(V_i))`.
#[derive(Clone, Debug)]
pub struct Observations {
    points: Vec<UnitVector>,
    weights: Option<Vec<f64>>,
}

impl Observations {
    pub fn new(points: Vec<UnitVector>) -> Self {
        Observations { points, weights: None }
    }

    /// Weights each point by `1/(c g0(V_i))`. Fails when a point is outside the
    /// covered region.
    pub fn with_coverage(points: Vec<UnitVector>, coverage: &CoverageGrid) -> Result<Self> {
        let weights = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let g = coverage.eval(p);
                if g <= 1e-12 {
                    Err(Error::OutsideCoverage { index: i, weight: g })
                } else {
                    Ok(1.0 / (coverage.normalization() * g))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observations {
            points,
            weights: Some(weights),
        })
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

impl From<Vec<UnitVector>> for Observations {
    fn from(points: Vec<UnitVector>) -> Self {
        Observations::new(points)
    }
}

/// `1/λ_l` for `l ≤ max_level`, or an ill-posedness error.
pub fn inverse_lambdas(noise: &NoiseModel, max_level: usize) -> Result<Vec<f64>> {
    (0..=max_level)
        .map(|l| {
            let lam = noise.lambda(l);
            if lam < LAMBDA_CUTOFF {
                Err(Error::IllPosed { level: l, lambda: lam })
            } else {
                Ok(1.0 / lam)
            }
        })
        .collect()
}

/// Deconvolved basis `Φ_lm(x) = conj(Y_m^l(x)) / λ_l`, indexed by `m = -l..=l`.
pub fn phi_level(noise: &NoiseModel, l: usize, x: &UnitVector) -> Result<Vec<Complex64>> {
    let inv = inverse_lambdas(noise, l)?[l];
    let y = HarmonicBasis::new(l)?.eval(x);
    Ok((-(l as i64)..=l as i64).map(|m| y[flat_index(l, m)].conj() * inv).collect())
}

fn check_sample(n: usize, max_level: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("the statistic needs at least 2 observations, got {n}")));
    }
    if max_level < 1 {
        return Err(Error::Config("truncation level must be at least 1".into()));
    }
    Ok(())
}

/// Evaluates `T_L` for several truncation levels at once by the basis route.
#[derive(Clone, Debug)]
pub struct BasisEvaluator {
    basis: HarmonicBasis,
    inv_lambda: Vec<f64>,
}

impl BasisEvaluator {
    pub fn new(noise: &NoiseModel, max_level: usize) -> Result<Self> {
        Ok(BasisEvaluator {
            basis: HarmonicBasis::new(max_level)?,
            inv_lambda: inverse_lambdas(noise, max_level)?,
        })
    }

    pub fn max_level(&self) -> usize {
        self.basis.l_max()
    }

    /// Per-level contributions `T_{(l)} = 2/(N(N-1)) Σ_m Σ_{i<j} Φ_lm(Z_i) conj(Φ_lm(Z_j))`
    /// for `l = 0..=max_level` (entry 0 is unused and left at zero).
    pub fn level_terms(&self, obs: &Observations) -> Result<Vec<Complex64>> {
        let n = obs.len();
        let l_max = self.max_level();
        check_sample(n, l_max)?;
        let len = flat_len(l_max);
        let mut scratch = vec![0.0; len];
        let mut y = vec![Complex64::new(0.0, 0.0); len];
        // running Σ_{i<j} Φ_lm(Z_i) and the ordered-pair accumulator
        let mut prefix = vec![Complex64::new(0.0, 0.0); len];
        let mut pairs = vec![Complex64::new(0.0, 0.0); l_max + 1];
        for (j, p) in obs.points().iter().enumerate() {
            self.basis.eval_into(p, &mut scratch, &mut y);
            let w = obs.weight(j);
            for l in 1..=l_max {
                let s = w * self.inv_lambda[l];
                let lo = flat_index(l, -(l as i64));
                let mut acc = Complex64::new(0.0, 0.0);
                for k in lo..lo + 2 * l + 1 {
                    // Φ_lm(Z_j) = s·conj(Y), so conj(Φ_lm(Z_j)) = s·Y
                    let conj_phi = y[k] * s;
                    acc += prefix[k] * conj_phi;
                    prefix[k] += conj_phi.conj();
                }
                pairs[l] += acc;
            }
        }
        let scale = 2.0 / (n as f64 * (n as f64 - 1.0));
        Ok(pairs.into_iter().map(|v| v * scale).collect())
    }

    /// `T_L` for each requested level (complex; the imaginary part is rounding noise).
    pub fn statistics(&self, obs: &Observations, levels: &[usize]) -> Result<Vec<Complex64>> {
        if let Some(&l) = levels.iter().find(|&&l| l > self.max_level() || l == 0) {
            return Err(Error::Config(format!(
                "level {l} outside 1..={} of this evaluator",
                self.max_level()
            )));
        }
        let terms = self.level_terms(obs)?;
        let mut cumulative = Vec::with_capacity(terms.len());
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &terms {
            acc += t;
            cumulative.push(acc);
        }
        debug_assert!(
            cumulative.iter().all(|t| t.im.abs() < 1e-9 * (1.0 + t.re.abs())),
            "statistic should be real for diagonal noise"
        );
        Ok(levels.iter().map(|&l| cumulative[l]).collect())
    }
}

/// `T_L` by the basis route.
pub fn t_statistic_basis(data: &[UnitVector], noise: &NoiseModel, max_level: usize) -> Result<Complex64> {
    check_sample(data.len(), max_level)?;
    let eval = BasisEvaluator::new(noise, max_level)?;
    Ok(eval.statistics(&Observations::new(data.to_vec()), &[max_level])?[0])
}

/// Kernel coefficients `λ_l⁻² (2l+1)/(4π)` for `l = 0..=max_level`.
pub fn kernel_coefficients(noise: &NoiseModel, max_level: usize) -> Result<Vec<f64>> {
    Ok(inverse_lambdas(noise, max_level)?
        .iter()
        .enumerate()
        .map(|(l, inv)| inv * inv * (2 * l + 1) as f64 / (4.0 * PI))
        .collect())
}

/// `T_L` by the kernel route, with optional observation weights.
pub fn t_statistic_kernel_weighted(obs: &Observations, noise: &NoiseModel, max_level: usize) -> Result<f64> {
    let n = obs.len();
    check_sample(n, max_level)?;
    let coef = kernel_coefficients(noise, max_level)?;
    let pts = obs.points();
    let mut p = vec![0.0; max_level + 1];
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in (i + 1)..n {
            legendre_polys(max_level, pts[i].dot(&pts[j]).clamp(-1.0, 1.0), &mut p);
            let u: f64 = (1..=max_level).map(|l| coef[l] * p[l]).sum();
            row += obs.weight(j) * u;
        }
        total += obs.weight(i) * row;
    }
    Ok(2.0 * total / (n as f64 * (n as f64 - 1.0)))
}

/// `T_L` by the kernel route.
pub fn t_statistic_kernel(data: &[UnitVector], noise: &NoiseModel, max_level: usize) -> Result<f64> {
    t_statistic_kernel_weighted(&Observations::new(data.to_vec()), noise, max_level)
}

/// Exact variance of `T_L` under the uniform law for diagonal noise:
/// `2/(N(N-1)) Σ_{l=1}^{L} λ_l⁻⁴ (2l+1)/(4π)²`.
pub fn variance_h0_closed(noise: &NoiseModel, max_level: usize, n: usize) -> f64 {
    let s: f64 = (1..=max_level)
        .map(|l| noise.lambda(l).powi(-4) * (2 * l + 1) as f64)
        .sum();
    2.0 / (n as f64 * (n as f64 - 1.0)) * s / (16.0 * PI * PI)
}

/// Upper bound `2 c3 L^{4ν+2} / (N(N-1))`, `c3 = 3 d0⁻⁴ 2^{4ν+2}/(4ν+2)`, for
/// ordinary smooth models.
pub fn variance_h0_bound(noise: &NoiseModel, max_level: usize, n: usize) -> Option<f64> {
    match noise.smoothness() {
        Smoothness::Ordinary { nu, d0, .. } => {
            let e = 4.0 * nu + 2.0;
            let c3 = 3.0 * d0.powi(-4) * 2f64.powf(e) / e;
            Some(2.0 * c3 * (max_level as f64).powf(e) / (n as f64 * (n as f64 - 1.0)))
        }
        Smoothness::Super { .. } => None,
    }
}

/// Nonnegative exposure weights `g0` on a regular `θ × φ` grid, bilinearly
/// interpolated, with `c = 4π / ∫ g0 dΩ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageGrid {
    thetas: Vec<f64>,
    phis: Vec<f64>,
    /// row-major, `weights[i * phis.len() + j]` at `(thetas[i], phis[j])`
    weights: Vec<f64>,
    normalization: f64,
    max_weight: f64,
}

impl CoverageGrid {
    pub fn new(thetas: Vec<f64>, phis: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || phis.is_empty() || weights.len() != thetas.len() * phis.len() {
            return Err(Error::Config(format!(
                "coverage grid shape mismatch: {} thetas x {} phis vs {} weights",
                thetas.len(),
                phis.len(),
                weights.len()
            )));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) || phis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("coverage grid axes must be strictly increasing".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("coverage weights must be nonnegative, got {w}")));
        }
        let mut grid = CoverageGrid {
            thetas,
            phis,
            weights,
            normalization: 1.0,
            max_weight: 0.0,
        };
        // c = Σ w_k / Σ w_k g0(x_k) on the default quadrature, i.e. 4π/∫g0 dΩ
        let quad = QuadratureGrid::default();
        let (mut area, mut mass) = (0.0, 0.0);
        for (x, w) in quad.nodes() {
            area += w;
            mass += w * grid.eval(x);
        }
        if mass <= 0.0 {
            return Err(Error::Config("coverage function vanishes everywhere".into()));
        }
        grid.normalization = area / mass;
        grid.max_weight = grid.weights.iter().copied().fold(0.0, f64::max);
        Ok(grid)
    }

    /// Coverage constant everywhere.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0, PI], vec![0.0], vec![value, value])
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    /// Bilinear interpolation; `θ` clamps to the grid, `φ` wraps around.
    pub fn eval(&self, x: &UnitVector) -> f64 {
        self.eval_coord(&x.to_spherical())
    }

    pub fn eval_coord(&self, c: &SphericalCoord) -> f64 {
        let np = self.phis.len();
        let (i0, i1, ti) = bracket(&self.thetas, c.theta());
        let (j0, j1, tj) = if np == 1 {
            (0, 0, 0.0)
        } else {
            let phi = c.phi();
            let first = self.phis[0];
            let last = self.phis[np - 1];
            if phi >= first && phi <= last {
                bracket(&self.phis, phi)
            } else {
                // wrap segment from the last node to the first + 2π
                let span = first + 2.0 * PI - last;
                let d = (phi - last).rem_euclid(2.0 * PI);
                (np - 1, 0, if span > 0.0 { d / span } else { 0.0 })
            }
        };
        let at = |i: usize, j: usize| self.weights[i * np + j];
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        lerp(lerp(at(i0, j0), at(i0, j1), tj), lerp(at(i1, j0), at(i1, j1), tj), ti)
    }

    /// Draws a point with density proportional to `g0` by rejection from uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitVector {
        loop {
            let x = sample_uniform(rng);
            if rng.random::<f64>() * self.max_weight < self.eval(&x) {
                return x;
            }
        }
    }
}

fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || v <= axis[0] {
        return (0, 0, 0.0);
    }
    if v >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = axis.partition_point(|&a| a <= v);
    let (a, b) = (axis[k - 1], axis[k]);
    (k - 1, k, (v - a) / (b - a))
}

/// Deconvolved Fourier coefficient estimates
/// `f̂^{⋆l}_m = λ_l⁻¹ N⁻¹ Σ_i w_i conj(Y_m^l(Z_i))`, `l = 0..=max_level`.
pub fn coeff_estimates(obs: &Observations, noise: &NoiseModel, max_level: usize) -> Result<Vec<CoeffLevel>> {
    if obs.is_empty() {
        return Err(Error::Config("no observations".into()));
    }
    let inv = inverse_lambdas(noise, max_level)?;
    let basis = HarmonicBasis::new(max_level)?;
    let len = flat_len(max_level);
    let mut scratch = vec![0.0; len];
    let mut y = vec![Complex64::new(0.0, 0.0); len];
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    for (i, p) in obs.points().iter().enumerate() {
        basis.eval_into(p, &mut scratch, &mut y);
        let w = obs.weight(i);
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += v.conj() * w;
        }
    }
    let n = obs.len() as f64;
    Ok((0..=max_level)
        .map(|l| CoeffLevel {
            l,
            values: (-(l as i64)..=l as i64)
                .map(|m| acc[flat_index(l, m)] * (inv[l] / n))
                .collect(),
        })
        .collect())
}

/// Null law used to simulate calibration data.
#[derive(Clone, Debug, Default)]
pub enum NullLaw {
    /// Uniform points; rotational noise leaves the uniform law invariant, so
    /// no noise is applied.
    #[default]
    Uniform,
    /// Points with density proportional to the coverage, weighted by `1/(c g0)`.
    Coverage(CoverageGrid),
}

impl NullLaw {
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Observations {
        match self {
            NullLaw::Uniform => Observations::new((0..n).map(|_| sample_uniform(rng)).collect()),
            NullLaw::Coverage(c) => {
                let pts = (0..n).map(|_| c.sample(rng)).collect();
                Observations::with_coverage(pts, c).expect("coverage samples lie in the covered region")
            }
        }
    }
}

/// Statistic evaluator bound to a noise model and a procedure.
#[derive(Clone, Debug)]
pub struct ShtTest {
    noise: NoiseModel,
    procedure: Procedure,
    evaluator: BasisEvaluator,
}

impl ShtTest {
    pub fn new(noise: NoiseModel, procedure: Procedure) -> Result<Self> {
        let evaluator = BasisEvaluator::new(&noise, procedure.max_level())?;
        Ok(ShtTest {
            noise,
            procedure,
            evaluator,
        })
    }

    /// Default procedure for the noise's smoothness class.
    pub fn for_noise(noise: NoiseModel, n: usize, rule: JmRule) -> Result<Self> {
        let p = Procedure::for_noise(&noise, n, rule)?;
        Self::new(noise, p)
    }

    pub fn build(noise: NoiseModel, n: usize, rule: JmRule, variant: ShtVariant) -> Result<Self> {
        let p = Procedure::build(&noise, n, rule, variant)?;
        Self::new(noise, p)
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn procedure(&self) -> &Procedure {
        &self.procedure
    }

    /// `T_L` for each level of the procedure.
    pub fn statistics(&self, obs: &Observations) -> Result<Vec<Complex64>> {
        self.evaluator.statistics(obs, &self.procedure.levels)
    }

    /// `max_L |T_L| / t_L²`.
    pub fn max_ratio(&self, obs: &Observations) -> Result<f64> {
        Ok(self
            .statistics(obs)?
            .iter()
            .zip(&self.procedure.thresholds)
            .map(|(t, th)| t.norm() / th)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Null replicates of the max ratio, one substream per replicate.
    pub fn null_ratios(&self, law: &NullLaw, replicates: usize, seed: u64, purpose: Purpose) -> Vec<f64> {
        let n = self.procedure.n;
        map_indexed(replicates, |r| {
            let mut rng = substream(seed, purpose, r as u64);
            let obs = law.draw(n, &mut rng);
            self.max_ratio(&obs).expect("null replicate")
        })
    }
}

/// Persisted Monte-Carlo calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub quantile: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub n: usize,
    pub grid: Vec<usize>,
    pub procedure: Procedure,
    pub noise: NoiseDescriptor,
    pub seed: u64,
    #[serde(default)]
    pub coverage_weighted: bool,
}

/// Empirical upper-`alpha` quantile: the smallest sample value `K` with at most
/// a fraction `alpha` of the sample strictly above it.
pub fn upper_quantile(sample: &[f64], alpha: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let r = s.len();
    let k = ((1.0 - alpha) * r as f64).ceil() as usize;
    s[k.clamp(1, r) - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Monte-Carlo calibration of the rejection threshold under the null.
pub fn calibrate(test: &ShtTest, law: &NullLaw, alpha: f64, replicates: usize, seed: u64) -> Result<CalibrationResult> {
    check_alpha(alpha)?;
    if replicates < MIN_CALIBRATION_REPLICATES {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_REPLICATES} replicates, got {replicates}"
        )));
    }
    let sample = test.null_ratios(law, replicates, seed, Purpose::Calibration);
    let grid = match test.procedure.mode {
        TestMode::OrdinarySmooth => test.procedure.levels.clone(),
        TestMode::SuperSmooth => Vec::new(),
    };
    Ok(CalibrationResult {
        quantile: upper_quantile(&sample, alpha),
        alpha,
        replicates,
        n: test.procedure.n,
        grid,
        procedure: test.procedure.clone(),
        noise: test.noise.descriptor(),
        seed,
        coverage_weighted: matches!(law, NullLaw::Coverage(_)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Accept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStatistic {
    pub level: usize,
    pub t_re: f64,
    pub t_im: f64,
    pub t_abs: f64,
    pub threshold: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub mode: TestMode,
    pub n: usize,
    pub noise: NoiseDescriptor,
    pub levels: Vec<LevelStatistic>,
    pub max_ratio: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub p_value: Option<f64>,
}

fn level_report(test: &ShtTest, obs: &Observations) -> Result<(Vec<LevelStatistic>, f64)> {
    let stats = test.statistics(obs)?;
    let levels: Vec<LevelStatistic> = stats
        .iter()
        .zip(&test.procedure.levels)
        .zip(&test.procedure.thresholds)
        .map(|((t, &level), &threshold)| LevelStatistic {
            level,
            t_re: t.re,
            t_im: t.im,
            t_abs: t.norm(),
            threshold,
            ratio: t.norm() / threshold,
        })
        .collect();
    let max = levels.iter().map(|l| l.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok((levels, max))
}

/// Applies a calibrated test to data.
pub fn run_test(obs: &Observations, noise: &NoiseModel, calib: &CalibrationResult) -> Result<TestReport> {
    if calib.n != obs.len() {
        return Err(Error::CalibrationMismatch(format!(
            "calibrated for N = {}, data has N = {}",
            calib.n,
            obs.len()
        )));
    }
    if calib.noise != noise.descriptor() {
        return Err(Error::CalibrationMismatch(format!(
            "calibrated for noise {:?}, test uses {:?}",
            calib.noise,
            noise.descriptor()
        )));
    }
    if calib.coverage_weighted != obs.is_weighted() {
        return Err(Error::CalibrationMismatch(
            "coverage weighting differs between calibration and data".into(),
        ));
    }
    let test = ShtTest::new(*noise, calib.procedure.clone())?;
    let (levels, max_ratio) = level_report(&test, obs)?;
    Ok(TestReport {
        mode: calib.procedure.mode,
        n: obs.len(),
        noise: noise.descriptor(),
        levels,
        max_ratio,
        threshold: calib.quantile,
        decision: if max_ratio > calib.quantile {
            Decision::Reject
        } else {
            Decision::Accept
        },
        p_value: None,
    })
}

/// Add-one Monte-Carlo p-value `(1 + #{M* ≥ M_obs}) / (R + 1)`.
pub fn p_value(obs: &Observations, test: &ShtTest, law: &NullLaw, replicates: usize, seed: u64) -> Result<f64> {
    if replicates < MIN_PVALUE_REPLICATES {
        return Err(Error::Config(format!(
            "p-values need at least {MIN_PVALUE_REPLICATES} replicates, got {replicates}"
        )));
    }
    if obs.len() != test.procedure.n {
        return Err(Error::CalibrationMismatch(format!(
            "procedure built for N = {}, data has N = {}",
            test.procedure.n,
            obs.len()
        )));
    }
    let m_obs = test.max_ratio(obs)?;
    let null = test.null_ratios(law, replicates, seed, Purpose::PValue);
    let exceed = null.iter().filter(|&&m| m >= m_obs).count();
    Ok((1 + exceed) as f64 / (replicates + 1) as f64)
}

/// Report with a Monte-Carlo p-value; the decision uses level `alpha`.
pub fn run_test_with_pvalue(
    obs: &Observations,
    test: &ShtTest,
    law: &NullLaw,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let p = p_value(obs, test, law, replicates, seed)?;
    let (levels, max_ratio) = level_report(test, obs)?;
    Ok(TestReport {
        mode: test.procedure.mode,
        n: obs.len(),
        noise: test.noise.descriptor(),
        levels,
        max_ratio,
        threshold: f64::NAN,
        decision: if p <= alpha { Decision::Reject } else { Decision::Accept },
        p_value: Some(p),
    })
}
