//! Simulation harness: noisy datasets, power tables and ROC curves.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::baselines::{bg_critical_value, bg_statistic, nn_statistic, nn_test_sided};
use crate::densities::{sample_density, AlternativeDescriptor, DensityModel};
use crate::error::{Error, Result};
use crate::noise::{sample_rotation, sampler_for, AngleSamplerTable, NoiseDescriptor, NoiseKind, NoiseModel};
use crate::parallel::map_indexed;
use crate::rng::{child_seed, substream, Purpose};
use crate::sht::{calibrate, CalibrationResult, JmRule, NullLaw, Observations, ShtTest, ShtVariant};
use crate::sphere::{rotate, UnitVector};

pub const DEFAULT_POWER_REPLICATES: usize = 500;
pub const DEFAULT_CALIBRATION_REPLICATES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SHT")]
    Sht,
    #[serde(rename = "NN")]
    Nn,
    #[serde(rename = "BG")]
    Bg,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sht, Method::Nn, Method::Bg];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sht => "SHT",
            Method::Nn => "NN",
            Method::Bg => "BG",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SHT" => Ok(Method::Sht),
            "NN" => Ok(Method::Nn),
            "BG" => Ok(Method::Bg),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected SHT, NN or BG)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alternative: AlternativeDescriptor,
    pub noise: NoiseDescriptor,
    pub n: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub calibration_replicates: usize,
    pub jm_rule: JmRule,
    /// Level choice for super smooth noise; ordinary smooth noise is always adaptive.
    pub supersmooth_variant: ShtVariant,
    pub nn_two_sided: bool,
}

impl ExperimentConfig {
    pub fn new(alternative: AlternativeDescriptor, noise: NoiseDescriptor, n: usize, seed: u64) -> Self {
        ExperimentConfig {
            alternative,
            noise,
            n,
            replicates: DEFAULT_POWER_REPLICATES,
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            seed,
            calibration_replicates: DEFAULT_CALIBRATION_REPLICATES,
            jm_rule: JmRule::Simulation,
            supersmooth_variant: ShtVariant::Adaptive,
            nn_two_sided: true,
        }
    }

    /// The SHT procedure this configuration runs under `noise`.
    pub fn sht_test(&self, noise: NoiseModel) -> Result<ShtTest> {
        let variant = match noise.smoothness() {
            crate::noise::Smoothness::Ordinary { .. } => ShtVariant::Adaptive,
            crate::noise::Smoothness::Super { .. } => self.supersmooth_variant,
        };
        ShtTest::build(noise, self.n, self.jm_rule, variant)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("N must be at least 2, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        NoiseModel::from_descriptor(&self.noise)?;
        DensityModel::from_descriptor(&self.alternative)?;
        Ok(())
    }
}

/// Draws `Z_i = ε_i X_i` with `X_i` from `density` and `ε_i` from `noise`.
pub struct DataGenerator {
    density: DensityModel,
    noise: NoiseModel,
    table: Option<AngleSamplerTable>,
}

impl DataGenerator {
    pub fn new(density: DensityModel, noise: NoiseModel) -> Result<Self> {
        let table = sampler_for(&noise)?;
        Ok(DataGenerator { density, noise, table })
    }

    pub fn from_descriptors(alt: &AlternativeDescriptor, noise: &NoiseDescriptor) -> Result<Self> {
        Self::new(DensityModel::from_descriptor(alt)?, NoiseModel::from_descriptor(noise)?)
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<UnitVector> {
        (0..n)
            .map(|_| {
                let x = sample_density(&self.density, rng);
                let eps = sample_rotation(&self.noise, self.table.as_ref(), rng);
                rotate(&eps, &x)
            })
            .collect()
    }

    /// Dataset number `index` of `purpose` under `seed`.
    pub fn dataset(&self, n: usize, seed: u64, purpose: Purpose, index: u64) -> Vec<UnitVector> {
        self.draw(n, &mut substream(seed, purpose, index))
    }
}

/// The dataset written by `simulate`.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<UnitVector>> {
    config.validate()?;
    let gen = DataGenerator::from_descriptors(&config.alternative, &config.noise)?;
    Ok(gen.dataset(config.n, config.seed, Purpose::Simulate, 0))
}

fn noise_tag(noise: &NoiseModel) -> u64 {
    let kind = match noise.kind() {
        NoiseKind::Identity => 1u64,
        NoiseKind::RotationalLaplace { .. } => 2,
        NoiseKind::RotationalGaussian { .. } => 3,
    };
    kind.wrapping_mul(0x1000_0000_01b3) ^ noise.sigma2().to_bits()
}

/// Calibrations shared across cells, keyed by everything that determines them.
#[derive(Default)]
pub struct CalibrationCache {
    sht: Mutex<HashMap<String, CalibrationResult>>,
    bg: Mutex<HashMap<String, f64>>,
}

impl CalibrationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sht(&self, test: &ShtTest, alpha: f64, replicates: usize, seed: u64) -> Result<CalibrationResult> {
        let key = format!(
            "{:?}|{}|{alpha}|{replicates}|{seed}|{:?}",
            test.noise().descriptor(),
            test.procedure().n,
            test.procedure().levels
        );
        if let Some(c) = self.sht.lock().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let c = calibrate(test, &NullLaw::Uniform, alpha, replicates, seed)?;
        self.sht.lock().expect("cache lock").insert(key, c.clone());
        Ok(c)
    }

    pub fn bg(&self, n: usize, alpha: f64, replicates: usize, seed: u64) -> Result<f64> {
        let key = format!("{n}|{alpha}|{replicates}|{seed}");
        if let Some(c) = self.bg.lock().expect("cache lock").get(&key) {
            return Ok(*c);
        }
        let c = bg_critical_value(n, alpha, replicates, seed)?;
        self.bg.lock().expect("cache lock").insert(key, c);
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub method: Method,
    pub noise: String,
    pub sigma2: f64,
    pub n: usize,
    pub replicates: usize,
    pub rejections: usize,
    pub percent: f64,
    pub std_error: f64,
}

impl PowerCell {
    fn new(method: Method, noise: &NoiseModel, n: usize, replicates: usize, rejections: usize) -> Self {
        let p = rejections as f64 / replicates as f64;
        PowerCell {
            method,
            noise: noise.descriptor().kind,
            sigma2: noise.sigma2(),
            n,
            replicates,
            rejections,
            percent: 100.0 * p,
            std_error: 100.0 * (p * (1.0 - p) / replicates as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub alternative: AlternativeDescriptor,
    pub alpha: f64,
    pub cells: Vec<PowerCell>,
}

impl PowerTable {
    pub fn get(&self, method: Method, noise: &NoiseModel) -> Option<&PowerCell> {
        let kind = noise.descriptor().kind;
        self.cells
            .iter()
            .find(|c| c.method == method && c.noise == kind && c.sigma2 == noise.sigma2())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "noise", "sigma2", "n", "replicates", "rejections", "percent", "std_error"])?;
        for c in &self.cells {
            w.write_record([
                c.method.to_string(),
                c.noise.clone(),
                c.sigma2.to_string(),
                c.n.to_string(),
                c.replicates.to_string(),
                c.rejections.to_string(),
                format!("{:.1}", c.percent),
                format!("{:.2}", c.std_error),
            ])?;
        }
        w.flush()
    }
}

/// Rejection rates of every configured method for one noise model; all
/// methods see the same simulated datasets.
pub fn power_cells(config: &ExperimentConfig, noise: &NoiseModel, cache: &CalibrationCache) -> Result<Vec<PowerCell>> {
    config.validate()?;
    let gen = DataGenerator::new(DensityModel::from_descriptor(&config.alternative)?, *noise)?;
    let calib_seed = child_seed(config.seed, 0xCA1);
    let sht = if config.methods.contains(&Method::Sht) {
        let test = config.sht_test(*noise)?;
        let c = cache.sht(&test, config.alpha, config.calibration_replicates, calib_seed)?;
        Some((test, c.quantile))
    } else {
        None
    };
    let bg_crit = if config.methods.contains(&Method::Bg) {
        Some(cache.bg(config.n, config.alpha, config.calibration_replicates, calib_seed)?)
    } else {
        None
    };
    let data_seed = child_seed(config.seed, noise_tag(noise));
    let decisions: Vec<Result<Vec<bool>>> = map_indexed(config.replicates, |r| {
        let z = gen.dataset(config.n, data_seed, Purpose::Alternative, r as u64);
        config
            .methods
            .iter()
            .map(|m| {
                Ok(match m {
                    Method::Sht => {
                        let (test, k) = sht.as_ref().expect("calibrated");
                        test.max_ratio(&Observations::new(z.clone()))? > *k
                    }
                    Method::Nn => {
                        nn_test_sided(&z, config.alpha, config.nn_two_sided)?.decision == crate::sht::Decision::Reject
                    }
                    Method::Bg => bg_statistic(&z)? > bg_crit.expect("calibrated"),
                })
            })
            .collect()
    });
    let decisions = decisions.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let rej = decisions.iter().filter(|d| d[k]).count();
            PowerCell::new(m, noise, config.n, config.replicates, rej)
        })
        .collect())
}

/// Power over a list of noise settings; `config.noise` is ignored.
pub fn power_table(config: &ExperimentConfig, noises: &[NoiseModel]) -> Result<PowerTable> {
    let cache = CalibrationCache::new();
    let mut cells = Vec::new();
    for noise in noises {
        cells.extend(power_cells(config, noise, &cache)?);
    }
    Ok(PowerTable {
        alternative: config.alternative.clone(),
        alpha: config.alpha,
        cells,
    })
}

/// The seven noise settings of the power tables: none, Laplace and Gaussian
/// at `σ² ∈ {0.05, 0.1, 0.2}`.
pub fn standard_noise_grid() -> Vec<NoiseModel> {
    let mut v = vec![NoiseModel::identity()];
    for s in [0.05, 0.1, 0.2] {
        v.push(NoiseModel::laplace(s).expect("positive variance"));
    }
    for s in [0.05, 0.1, 0.2] {
        v.push(NoiseModel::gaussian(s).expect("positive variance"));
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub method: Method,
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Sweeps thresholds over the pooled scores, classifying `score ≥ threshold`
    /// as positive; a final `+∞` threshold closes the curve at `(0, 0)`.
    pub fn from_scores(method: Method, null: &[f64], alt: &[f64]) -> Self {
        let mut pooled: Vec<f64> = null.iter().chain(alt).copied().collect();
        pooled.sort_by(f64::total_cmp);
        pooled.dedup();
        pooled.push(f64::INFINITY);
        let mut h0 = null.to_vec();
        let mut h1 = alt.to_vec();
        h0.sort_by(f64::total_cmp);
        h1.sort_by(f64::total_cmp);
        let frac_at_least = |s: &[f64], t: f64| (s.len() - s.partition_point(|&v| v < t)) as f64 / s.len() as f64;
        let points: Vec<RocPoint> = pooled
            .into_iter()
            .map(|t| RocPoint {
                threshold: t,
                fpr: frac_at_least(&h0, t),
                tpr: frac_at_least(&h1, t),
            })
            .collect();
        let auc = points
            .windows(2)
            .map(|w| (w[0].fpr - w[1].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum();
        RocCurve { method, points, auc }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_roc_csv(std::slice::from_ref(self), out)
    }
}

/// Rows `method,threshold,fpr,tpr` for several curves under one header.
pub fn write_roc_csv<W: Write>(curves: &[RocCurve], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "threshold", "fpr", "tpr"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.method.to_string(), p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
        }
    }
    w.flush()
}

/// Score whose large values indicate anisotropy.
fn roc_score(method: Method, sht: Option<&ShtTest>, z: &[UnitVector]) -> Result<f64> {
    match method {
        Method::Sht => sht.expect("built for SHT").max_ratio(&Observations::new(z.to_vec())),
        Method::Nn => Ok(nn_statistic(z)?.abs()),
        Method::Bg => bg_statistic(z),
    }
}

/// ROC curves from `replicates` null and `replicates` alternative datasets,
/// both passed through the configured noise.
pub fn roc_curves(config: &ExperimentConfig) -> Result<Vec<RocCurve>> {
    config.validate()?;
    let noise = NoiseModel::from_descriptor(&config.noise)?;
    let alt = DataGenerator::new(DensityModel::from_descriptor(&config.alternative)?, noise)?;
    let null = DataGenerator::new(DensityModel::uniform(), noise)?;
    let sht = if config.methods.contains(&Method::Sht) {
        Some(config.sht_test(noise)?)
    } else {
        None
    };
    let null_seed = child_seed(config.seed, 0x0);
    let alt_seed = child_seed(config.seed, 0x1);
    let scores = |gen: &DataGenerator, seed: u64| -> Result<Vec<Vec<f64>>> {
        map_indexed(config.replicates, |r| {
            let z = gen.dataset(config.n, seed, Purpose::Roc, r as u64);
            config.methods.iter().map(|&m| roc_score(m, sht.as_ref(), &z)).collect()
        })
        .into_iter()
        .collect()
    };
    let s0 = scores(&null, null_seed)?;
    let s1 = scores(&alt, alt_seed)?;
    Ok(config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let a: Vec<f64> = s0.iter().map(|v| v[k]).collect();
            let b: Vec<f64> = s1.iter().map(|v| v[k]).collect();
            RocCurve::from_scores(m, &a, &b)
        })
        .collect())
}
