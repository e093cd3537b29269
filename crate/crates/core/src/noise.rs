//! Rotational noise models with diagonal rotational Fourier transform
//! `(f_ε^{⋆l})_{mn} = λ_l δ_{mn}`, and samplers for them.
//!
//! A diagonal model is a class function on SO(3): its density depends only on
//! the rotation angle. Sampling picks a uniform axis and draws the angle from
//! the marginal `f_ε(θ)(1 - cos θ)/π` on `[0, π]`.

use std::f64::consts::PI;
use std::fmt;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{CoeffLevel, L_MAX};
use crate::sphere::{sample_uniform, Rotation};

/// Series terms are bounded by `λ_l (2l+1)²`; truncate once that drops below this.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Number of points in a tabulated angle CDF.
pub const ANGLE_TABLE_POINTS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    Identity,
    RotationalLaplace { sigma2: f64 },
    RotationalGaussian { sigma2: f64 },
}

/// Decay class of `λ_l`, with the constants of the corresponding bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Smoothness {
    /// `λ_l⁻¹ ≤ l^ν / d0` and `λ_l ≤ d1 l^-ν`.
    Ordinary { nu: f64, d0: f64, d1: f64 },
    /// `λ_l⁻¹ ≤ l^-ν0 exp(l^β/δ) / d0` and `λ_l ≤ d1 l^ν1 exp(-l^β/δ)`.
    Super {
        nu0: f64,
        nu1: f64,
        beta: f64,
        delta: f64,
        d0: f64,
        d1: f64,
    },
}

/// JSON form: `{"kind": "identity" | "laplace" | "gaussian", "sigma2": x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    pub kind: String,
    #[serde(default)]
    pub sigma2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    smoothness: Smoothness,
}

impl NoiseModel {
    pub fn identity() -> Self {
        NoiseModel {
            kind: NoiseKind::Identity,
            smoothness: Smoothness::Ordinary {
                nu: 0.0,
                d0: 1.0,
                d1: 1.0,
            },
        }
    }

    /// Rotational Laplace, `λ_l = (1 + σ² l(l+1))⁻¹`, ordinary smooth with ν = 2.
    ///
    /// `λ_l l²` increases from `1/(1+2σ²)` at `l = 1` towards `1/σ²`, which
    /// gives `d0 = 1/(1+2σ²)` and `d1 = 1/σ²`.
    pub fn laplace(sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(NoiseModel {
            kind: NoiseKind::RotationalLaplace { sigma2 },
            smoothness: Smoothness::Ordinary {
                nu: 2.0,
                d0: 1.0 / (1.0 + 2.0 * sigma2),
                d1: 1.0 / sigma2,
            },
        })
    }

    /// Rotational Gaussian, `λ_l = exp(-σ² l(l+1)/2)`, super smooth with
    /// β = 2, δ = 2/σ². The polynomial exponents default to zero.
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(NoiseModel {
            kind: NoiseKind::RotationalGaussian { sigma2 },
            smoothness: Smoothness::Super {
                nu0: 0.0,
                nu1: 0.0,
                beta: 2.0,
                delta: 2.0 / sigma2,
                d0: 1.0,
                d1: 1.0,
            },
        })
    }

    /// Overrides the polynomial exponents of a super smooth model.
    pub fn with_super_exponents(mut self, nu0: f64, nu1: f64) -> Result<Self> {
        match &mut self.smoothness {
            Smoothness::Super {
                nu0: a, nu1: b, ..
            } => {
                if nu1 > nu0 {
                    return Err(Error::Config(format!("need nu1 <= nu0, got nu0 = {nu0}, nu1 = {nu1}")));
                }
                *a = nu0;
                *b = nu1;
                Ok(self)
            }
            Smoothness::Ordinary { .. } => Err(Error::Config(
                "polynomial exponents only apply to super smooth noise".into(),
            )),
        }
    }

    pub fn from_descriptor(d: &NoiseDescriptor) -> Result<Self> {
        match d.kind.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Self::identity()),
            "laplace" => Self::laplace(d.sigma2),
            "gaussian" => Self::gaussian(d.sigma2),
            other => Err(Error::Config(format!("unknown noise kind '{other}'"))),
        }
    }

    pub fn descriptor(&self) -> NoiseDescriptor {
        match self.kind {
            NoiseKind::Identity => NoiseDescriptor {
                kind: "identity".into(),
                sigma2: 0.0,
            },
            NoiseKind::RotationalLaplace { sigma2 } => NoiseDescriptor {
                kind: "laplace".into(),
                sigma2,
            },
            NoiseKind::RotationalGaussian { sigma2 } => NoiseDescriptor {
                kind: "gaussian".into(),
                sigma2,
            },
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn sigma2(&self) -> f64 {
        match self.kind {
            NoiseKind::Identity => 0.0,
            NoiseKind::RotationalLaplace { sigma2 } | NoiseKind::RotationalGaussian { sigma2 } => sigma2,
        }
    }

    /// Diagonal rotational Fourier coefficient at level `l`.
    pub fn lambda(&self, l: usize) -> f64 {
        let ll = (l * (l + 1)) as f64;
        match self.kind {
            NoiseKind::Identity => 1.0,
            NoiseKind::RotationalLaplace { sigma2 } => 1.0 / (1.0 + sigma2 * ll),
            NoiseKind::RotationalGaussian { sigma2 } => (-sigma2 * ll / 2.0).exp(),
        }
    }

    /// Smallest `L` with `λ_L (2L+1)² ≤ 1e-10`, capped at [`L_MAX`].
    pub fn truncation_level(&self) -> usize {
        if let NoiseKind::Identity = self.kind {
            return L_MAX;
        }
        (0..=L_MAX)
            .find(|&l| self.lambda(l) * ((2 * l + 1) as f64).powi(2) <= TRUNCATION_TOL)
            .unwrap_or(L_MAX)
    }

    /// Whether the character series truncated at `l_max` meets the tolerance.
    pub fn truncation_adequate(&self, l_max: usize) -> bool {
        self.lambda(l_max) * ((2 * l_max + 1) as f64).powi(2) <= TRUNCATION_TOL
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::Identity => write!(f, "identity"),
            NoiseKind::RotationalLaplace { sigma2 } => write!(f, "laplace({sigma2})"),
            NoiseKind::RotationalGaussian { sigma2 } => write!(f, "gaussian({sigma2})"),
        }
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("noise variance must be positive, got {sigma2}")))
    }
}

/// Character of the level-`l` representation at rotation angle `θ`:
/// `sin((l+½)θ) / sin(θ/2)`, equal to `2l+1` at `θ = 0`.
pub fn character(l: usize, theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    if s.abs() < 1e-12 {
        return (2 * l + 1) as f64;
    }
    ((l as f64 + 0.5) * theta).sin() / s
}

/// Truncated character series for the angle marginal:
/// `(1 - cos θ)/π · Σ_{l ≤ l_max} λ_l (2l+1) χ_l(θ)`.
///
/// Logs a warning when `λ_{l_max}(2 l_max + 1)²` exceeds the truncation tolerance.
pub fn angle_density(model: &NoiseModel, theta: f64, l_max: usize) -> f64 {
    if !model.truncation_adequate(l_max) {
        warn!(
            "{model}: character series truncated at l = {l_max} with tail bound {:e}",
            model.lambda(l_max) * ((2 * l_max + 1) as f64).powi(2)
        );
    }
    angle_density_series(model, theta, l_max)
}

fn angle_density_series(model: &NoiseModel, theta: f64, l_max: usize) -> f64 {
    // (1 - cos θ) χ_l(θ) = cos(lθ) - cos((l+1)θ), which avoids the 0/0 at θ = 0
    let sum: f64 = (0..=l_max)
        .map(|l| {
            let lf = l as f64;
            model.lambda(l) * (2.0 * lf + 1.0) * ((lf * theta).cos() - ((lf + 1.0) * theta).cos())
        })
        .sum();
    sum / PI
}

/// `sinh(c·y) / sinh(c·π)` for `0 ≤ y ≤ π`, without overflow for large `c`.
fn sinh_ratio(c: f64, y: f64) -> f64 {
    let num = -(-2.0 * c * y).exp_m1();
    let den = -(-2.0 * c * PI).exp_m1();
    (c * (y - PI)).exp() * num / den
}

/// Angle marginal evaluated without series truncation where possible.
///
/// For the rotational Laplace model the character series sums in closed form:
/// with `k = l + ½` and `a² = 1/σ² - ¼`,
/// `f_ε(θ) = 4 S(θ/2) / (σ² sin(θ/2))`, where
/// `S(x) = Σ_{n odd} n sin(nx)/(n² + 4a²)
///       = (π/2) sinh(2a(π-x))/sinh(2aπ) - (π/4) sinh(a(π-2x))/sinh(aπ)`.
/// The Gaussian and identity models use the truncated series.
pub fn angle_density_exact(model: &NoiseModel, theta: f64) -> f64 {
    match model.kind {
        NoiseKind::RotationalLaplace { sigma2 } if sigma2 < 4.0 => {
            if theta <= 0.0 {
                return 0.0;
            }
            let a = (1.0 / sigma2 - 0.25).sqrt();
            let x = theta / 2.0;
            let s = PI / 2.0 * sinh_ratio(2.0 * a, PI - x) - PI / 4.0 * sinh_ratio(a, PI - 2.0 * x);
            8.0 * x.sin() * s / (PI * sigma2)
        }
        _ => angle_density(model, theta, model.truncation_level()),
    }
}

/// Inverse-CDF table for the rotation angle of a noise model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngleSamplerTable {
    pub model: NoiseModel,
    pub l_max: usize,
    pub theta: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl AngleSamplerTable {
    /// Inverse CDF with linear interpolation.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u);
        if k == 0 {
            return self.theta[0];
        }
        if k >= self.cdf.len() {
            return *self.theta.last().unwrap();
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (t0, t1) = (self.theta[k - 1], self.theta[k]);
        if c1 <= c0 {
            return t1;
        }
        t0 + (u - c0) / (c1 - c0) * (t1 - t0)
    }

    pub fn cdf_at(&self, theta: f64) -> f64 {
        let h = PI / (self.theta.len() - 1) as f64;
        let pos = (theta / h).clamp(0.0, (self.theta.len() - 1) as f64);
        let k = (pos.floor() as usize).min(self.theta.len() - 2);
        let t = pos - k as f64;
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }
}

/// Tabulates the angle CDF on a uniform grid by trapezoidal integration.
pub fn build_angle_sampler(model: &NoiseModel) -> Result<AngleSamplerTable> {
    if let NoiseKind::Identity = model.kind {
        return Err(Error::Config(
            "the identity model needs no angle sampler".into(),
        ));
    }
    let n = ANGLE_TABLE_POINTS;
    let h = PI / (n - 1) as f64;
    let theta: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let dens: Vec<f64> = theta.iter().map(|&t| angle_density_exact(model, t)).collect();
    for (&t, &d) in theta.iter().zip(&dens) {
        if d < -1e-8 {
            return Err(Error::NegativeDensity { theta: t, value: d });
        }
    }
    let mut cdf = Vec::with_capacity(n);
    cdf.push(0.0);
    let mut acc = 0.0;
    for k in 1..n {
        acc += 0.5 * h * (dens[k - 1].max(0.0) + dens[k].max(0.0));
        cdf.push(acc);
    }
    let total = acc;
    for c in cdf.iter_mut() {
        *c /= total;
    }
    cdf[n - 1] = 1.0;
    Ok(AngleSamplerTable {
        model: *model,
        l_max: model.truncation_level(),
        theta,
        cdf,
    })
}

/// Angle sampler for a model, or `None` for the identity.
pub fn sampler_for(model: &NoiseModel) -> Result<Option<AngleSamplerTable>> {
    match model.kind {
        NoiseKind::Identity => Ok(None),
        _ => build_angle_sampler(model).map(Some),
    }
}

/// Random rotation: uniform axis, angle by inverse CDF. Identity bypasses the table.
pub fn sample_rotation<R: Rng + ?Sized>(
    model: &NoiseModel,
    table: Option<&AngleSamplerTable>,
    rng: &mut R,
) -> Rotation {
    match (model.kind, table) {
        (NoiseKind::Identity, _) | (_, None) => Rotation::IDENTITY,
        (_, Some(t)) => {
            let axis = sample_uniform(rng);
            let angle = t.quantile(rng.random::<f64>());
            Rotation::from_axis_angle(&axis, angle)
        }
    }
}

/// Fourier coefficients of `f_ε * f` at one level: `λ_l c_m`.
pub fn convolve_level(model: &NoiseModel, c: &CoeffLevel) -> CoeffLevel {
    let lam = model.lambda(c.l);
    CoeffLevel {
        l: c.l,
        values: c.values.iter().map(|v| v * lam).collect(),
    }
}
