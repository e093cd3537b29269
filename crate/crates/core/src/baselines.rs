//! Comparison tests: nearest-neighbour (Wilcoxon form) and Beran–Giné.

use std::f64::consts::PI;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{substream, Purpose};
use crate::sht::{upper_quantile, Decision};
use crate::sphere::{sample_uniform, spherical_distance, UnitVector};

pub const MIN_BG_REPLICATES: usize = 500;
pub const NN_ASYMPTOTIC_MIN_N: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    #[serde(rename = "NN")]
    NearestNeighbour,
    #[serde(rename = "BG")]
    BeranGine,
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineMethod::NearestNeighbour => write!(f, "NN"),
            BaselineMethod::BeranGine => write!(f, "BG"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub method: BaselineMethod,
    pub statistic: f64,
    pub critical_value: f64,
    /// Two-sided NN compares `|W|` with the critical value.
    pub two_sided: bool,
    pub decision: Decision,
}

/// Nearest-neighbour distance of every point (`O(N²)`).
pub fn nearest_neighbour_distances(data: &[UnitVector]) -> Vec<f64> {
    let n = data.len();
    let mut best = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = spherical_distance(&data[i], &data[j]);
            best[i] = best[i].min(d);
            best[j] = best[j].min(d);
        }
    }
    best
}

/// `W = √(12N) (1/2 - N⁻¹ Σ φ(Y_i))`, `φ(z) = 1 - ((1 + cos z)/2)^{N-1}`.
pub fn nn_statistic(data: &[UnitVector]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Config(format!("nearest-neighbour statistic needs N >= 2, got {n}")));
    }
    let e = (n - 1) as i32;
    let mean = nearest_neighbour_distances(data)
        .iter()
        .map(|&y| 1.0 - ((1.0 + y.cos()) / 2.0).powi(e))
        .sum::<f64>()
        / n as f64;
    Ok((12.0 * n as f64).sqrt() * (0.5 - mean))
}

/// Asymptotic normal test on `W`; two-sided unless `two_sided` is false, in
/// which case it rejects for large `W` (clustered data).
pub fn nn_test_sided(data: &[UnitVector], alpha: f64, two_sided: bool) -> Result<BaselineReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if data.len() < NN_ASYMPTOTIC_MIN_N {
        warn!(
            "nearest-neighbour test with N = {} < {NN_ASYMPTOTIC_MIN_N}; the normal approximation is unreliable",
            data.len()
        );
    }
    let w = nn_statistic(data)?;
    let z = Normal::standard();
    let (crit, reject) = if two_sided {
        let c = z.inverse_cdf(1.0 - alpha / 2.0);
        (c, w.abs() > c)
    } else {
        let c = z.inverse_cdf(1.0 - alpha);
        (c, w > c)
    };
    Ok(BaselineReport {
        method: BaselineMethod::NearestNeighbour,
        statistic: w,
        critical_value: crit,
        two_sided,
        decision: if reject { Decision::Reject } else { Decision::Accept },
    })
}

pub fn nn_test(data: &[UnitVector], alpha: f64) -> Result<BaselineReport> {
    nn_test_sided(data, alpha, true)
}

/// Monte-Carlo critical value for `W` under the uniform law: the upper-`alpha`
/// quantile of `|W|` when two-sided, of `W` otherwise.
pub fn nn_critical_value(n: usize, alpha: f64, two_sided: bool, replicates: usize, seed: u64) -> Result<f64> {
    if replicates < MIN_BG_REPLICATES {
        return Err(Error::Config(format!(
            "Monte-Carlo critical values need at least {MIN_BG_REPLICATES} replicates, got {replicates}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n < 2 {
        return Err(Error::Config(format!("nearest-neighbour statistic needs N >= 2, got {n}")));
    }
    let sample = map_indexed(replicates, |r| {
        let mut rng = substream(seed, Purpose::Baseline, r as u64);
        let pts: Vec<_> = (0..n).map(|_| sample_uniform(&mut rng)).collect();
        let w = nn_statistic(&pts).expect("N >= 2");
        if two_sided {
            w.abs()
        } else {
            w
        }
    });
    Ok(upper_quantile(&sample, alpha))
}

/// NN test against a precomputed critical value.
pub fn nn_test_with_critical(data: &[UnitVector], critical_value: f64, two_sided: bool) -> Result<BaselineReport> {
    let w = nn_statistic(data)?;
    let reject = if two_sided { w.abs() > critical_value } else { w > critical_value };
    Ok(BaselineReport {
        method: BaselineMethod::NearestNeighbour,
        statistic: w,
        critical_value,
        two_sided,
        decision: if reject { Decision::Reject } else { Decision::Accept },
    })
}

/// `F_N = 3N/2 - (4/(Nπ)) Σ_{i<j} [d_ij + sin d_ij]`.
pub fn bg_statistic(data: &[UnitVector]) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Config("Beran-Gine statistic needs at least one point".into()));
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = spherical_distance(&data[i], &data[j]);
            s += d + d.sin();
        }
    }
    Ok(1.5 * n as f64 - 4.0 / (n as f64 * PI) * s)
}

/// Upper-`alpha` Monte-Carlo quantile of `F_N` under the uniform law.
pub fn bg_critical_value(n: usize, alpha: f64, replicates: usize, seed: u64) -> Result<f64> {
    if replicates < MIN_BG_REPLICATES {
        return Err(Error::Config(format!(
            "Beran-Gine critical values need at least {MIN_BG_REPLICATES} replicates, got {replicates}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n == 0 {
        return Err(Error::Config("Beran-Gine critical value needs N >= 1".into()));
    }
    let sample = map_indexed(replicates, |r| {
        let mut rng = substream(seed, Purpose::Baseline, r as u64);
        let pts: Vec<_> = (0..n).map(|_| sample_uniform(&mut rng)).collect();
        bg_statistic(&pts).expect("nonempty sample")
    });
    Ok(upper_quantile(&sample, alpha))
}

pub fn bg_test_with_critical(data: &[UnitVector], critical_value: f64) -> Result<BaselineReport> {
    let f = bg_statistic(data)?;
    Ok(BaselineReport {
        method: BaselineMethod::BeranGine,
        statistic: f,
        critical_value,
        two_sided: false,
        decision: if f > critical_value {
            Decision::Reject
        } else {
            Decision::Accept
        },
    })
}

pub fn bg_test(data: &[UnitVector], alpha: f64, replicates: usize, seed: u64) -> Result<BaselineReport> {
    let c = bg_critical_value(data.len(), alpha, replicates, seed)?;
    bg_test_with_critical(data, c)
}
