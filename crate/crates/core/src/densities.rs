//! Alternative densities on the sphere, their exact samplers, and quadrature
//! oracles (normalization, L² distance to the uniform law, Fourier coefficients).
//!
//! Densities are with respect to the surface measure `dΩ = sin θ dθ dφ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{flat_index, flat_len, CoeffLevel, HarmonicBasis};
use crate::quadrature::{adaptive_simpson, QuadratureGrid};
use crate::sphere::{from_spherical, sample_uniform, spherical_distance, SphericalCoord, UnitVector};

pub const UNIFORM_DENSITY: f64 = 1.0 / (4.0 * PI);

/// Default bump mixture weight and width used in the power studies.
pub const BUMP_DELTA: f64 = 0.08;
pub const BUMP_GAMMA_DEG: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensityKind {
    Uniform,
    /// `(1-δ) f0 + δ h_γ`, `h_γ(x) = C_γ exp(-d(x, x0)²/(2γ²))`.
    BumpMixture {
        delta: f64,
        gamma: f64,
        center: UnitVector,
    },
    /// Girdle density `C exp(-2 cos²θ)`.
    Watson,
}

/// JSON form: `{"kind": "uniform" | "bump" | "watson", "delta": x, "gamma_deg": y}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeDescriptor {
    pub kind: String,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma_deg")]
    pub gamma_deg: f64,
}

fn default_delta() -> f64 {
    BUMP_DELTA
}

fn default_gamma_deg() -> f64 {
    BUMP_GAMMA_DEG
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    kind: DensityKind,
    /// `C_γ` for the bump, `C` for Watson, `1/(4π)` for uniform.
    constant: f64,
}

impl DensityModel {
    pub fn uniform() -> Self {
        DensityModel {
            kind: DensityKind::Uniform,
            constant: UNIFORM_DENSITY,
        }
    }

    pub fn watson() -> Self {
        // ∫ C e^{-2cos²θ} dΩ = 2πC ∫_{-1}^{1} e^{-2t²} dt
        let i = adaptive_simpson(&|t: f64| (-2.0 * t * t).exp(), -1.0, 1.0, 1e-14);
        DensityModel {
            kind: DensityKind::Watson,
            constant: 1.0 / (2.0 * PI * i),
        }
    }

    /// Bump mixture with weight `delta`, width `gamma` (radians) and centre `center`.
    pub fn bump(delta: f64, gamma: f64, center: UnitVector) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("mixture weight must lie in [0, 1], got {delta}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("bump width must be positive, got {gamma}")));
        }
        let g2 = 2.0 * gamma * gamma;
        let f = move |t: f64| (-t * t / g2).exp() * t.sin();
        // split at a few widths so the adaptive rule sees the peak
        let cut = (8.0 * gamma).min(PI);
        let mut i = adaptive_simpson(&f, 0.0, cut, 1e-16);
        if cut < PI {
            i += adaptive_simpson(&f, cut, PI, 1e-16);
        }
        Ok(DensityModel {
            kind: DensityKind::BumpMixture { delta, gamma, center },
            constant: 1.0 / (2.0 * PI * i),
        })
    }

    /// Bump centred at `(θ, φ) = (π/2, 0)`.
    pub fn bump_default_center(delta: f64, gamma: f64) -> Result<Self> {
        let center = from_spherical(SphericalCoord::new(PI / 2.0, 0.0)?);
        Self::bump(delta, gamma, center)
    }

    pub fn from_descriptor(d: &AlternativeDescriptor) -> Result<Self> {
        match d.kind.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::uniform()),
            "watson" => Ok(Self::watson()),
            "bump" => Self::bump_default_center(d.delta, d.gamma_deg.to_radians()),
            other => Err(Error::Config(format!("unknown alternative kind '{other}'"))),
        }
    }

    pub fn descriptor(&self) -> AlternativeDescriptor {
        match &self.kind {
            DensityKind::Uniform => AlternativeDescriptor {
                kind: "uniform".into(),
                delta: BUMP_DELTA,
                gamma_deg: BUMP_GAMMA_DEG,
            },
            DensityKind::Watson => AlternativeDescriptor {
                kind: "watson".into(),
                delta: BUMP_DELTA,
                gamma_deg: BUMP_GAMMA_DEG,
            },
            DensityKind::BumpMixture { delta, gamma, .. } => AlternativeDescriptor {
                kind: "bump".into(),
                delta: *delta,
                gamma_deg: gamma.to_degrees(),
            },
        }
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self.kind {
            DensityKind::Uniform => "uniform",
            DensityKind::BumpMixture { .. } => "bump",
            DensityKind::Watson => "watson",
        }
    }
}

/// Pointwise density.
pub fn density_eval(model: &DensityModel, x: &UnitVector) -> f64 {
    match &model.kind {
        DensityKind::Uniform => UNIFORM_DENSITY,
        DensityKind::Watson => model.constant * (-2.0 * x.z() * x.z()).exp(),
        DensityKind::BumpMixture { delta, gamma, center } => {
            let d = spherical_distance(x, center);
            (1.0 - delta) * UNIFORM_DENSITY + delta * model.constant * (-d * d / (2.0 * gamma * gamma)).exp()
        }
    }
}

/// Exact draw from the density.
pub fn sample_density<R: Rng + ?Sized>(model: &DensityModel, rng: &mut R) -> UnitVector {
    match &model.kind {
        DensityKind::Uniform => sample_uniform(rng),
        DensityKind::Watson => loop {
            // envelope C · (4π) · uniform, acceptance exp(-2z²)
            let x = sample_uniform(rng);
            if rng.random::<f64>() < (-2.0 * x.z() * x.z()).exp() {
                return x;
            }
        },
        DensityKind::BumpMixture { delta, gamma, center } => {
            if rng.random::<f64>() >= *delta {
                return sample_uniform(rng);
            }
            let g2 = 2.0 * gamma * gamma;
            loop {
                let x = sample_uniform(rng);
                let d = spherical_distance(&x, center);
                if rng.random::<f64>() < (-d * d / g2).exp() {
                    return x;
                }
            }
        }
    }
}

/// `∫ (f - 1/(4π))² dΩ`.
pub fn l2_distance_to_uniform(model: &DensityModel, grid: &QuadratureGrid) -> Result<f64> {
    if grid.n_theta() < 100 || grid.n_phi() < 200 {
        return Err(Error::Config(format!(
            "L2 distance needs at least a 100x200 grid, got {}x{}",
            grid.n_theta(),
            grid.n_phi()
        )));
    }
    Ok(grid.integrate(|x| (density_eval(model, x) - UNIFORM_DENSITY).powi(2)))
}

/// Spherical Fourier coefficients `f^{⋆l}_m = ∫ f conj(Y_m^l) dΩ`, `l = 0..=max_level`.
pub fn fourier_coeffs(model: &DensityModel, max_level: usize, grid: &QuadratureGrid) -> Result<Vec<CoeffLevel>> {
    let needed = 2 * max_level + 2;
    if grid.n_theta() < needed || grid.n_phi() < needed {
        return Err(Error::Resolution {
            n_theta: grid.n_theta().min(grid.n_phi()),
            level: max_level,
            needed,
        });
    }
    let basis = HarmonicBasis::new(max_level)?;
    let n = flat_len(max_level);
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![0.0; n];
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (x, w) in grid.nodes() {
        let fw = w * density_eval(model, x);
        basis.eval_into(x, &mut scratch, &mut y);
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += v.conj() * fw;
        }
    }
    Ok((0..=max_level)
        .map(|l| CoeffLevel {
            l,
            values: (-(l as i64)..=l as i64).map(|m| acc[flat_index(l, m)]).collect(),
        })
        .collect())
}

/// `Σ_{1 ≤ l ≤ L} Σ_m |f^{⋆l}_m|²`, the expectation of the statistic truncated at `L`.
pub fn truncated_distance(coeffs: &[CoeffLevel], max_level: usize) -> f64 {
    coeffs.iter().filter(|c| c.l >= 1 && c.l <= max_level).map(CoeffLevel::energy).sum()
}
