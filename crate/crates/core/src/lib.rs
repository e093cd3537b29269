//! Adaptive minimax isotropy tests for directions on the sphere observed
//! through random SO(3) rotations.
//!
//! Data `Z_i = ε_i X_i` are noisy versions of directions `X_i` with density `f`;
//! the tests decide between `f = 1/(4π)` and alternatives separated from it
//! in `L²`. See [`sht`] for the statistic and its calibration, [`baselines`]
//! for the comparison tests, and [`experiments`] for the simulation harness.

pub mod baselines;
pub mod densities;
pub mod error;
pub mod experiments;
pub mod harmonics;
pub mod io;
pub mod noise;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod sht;
pub mod sphere;

pub use error::{Error, Result};
pub use noise::NoiseModel;
pub use sphere::UnitVector;
