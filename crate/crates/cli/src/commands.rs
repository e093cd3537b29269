use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;
use sht_core::experiments::{
    power_table, roc_curves, simulate as simulate_data, standard_noise_grid, write_roc_csv, ExperimentConfig, Method,
    DEFAULT_CALIBRATION_REPLICATES, DEFAULT_POWER_REPLICATES,
};
use sht_core::io::{read_coverage, read_json, read_points, write_points};
use sht_core::noise::NoiseModel;
use sht_core::sht::{
    calibrate as calibrate_threshold, p_value, run_test, run_test_with_pvalue, CalibrationResult, Decision, JmRule,
    NullLaw, Observations, ShtTest, ShtVariant, TestReport,
};

use crate::error::CliError;
use crate::{parse, Common};

pub enum Outcome {
    Done,
    Reject,
}

fn jm_rule(s: &str) -> Result<JmRule, String> {
    match s.to_ascii_lowercase().as_str() {
        "simulation" => Ok(JmRule::Simulation),
        "full" => Ok(JmRule::Full),
        _ => Err(format!("expected 'simulation' or 'full', got '{s}'")),
    }
}

/// Level-grid options of the SHT procedure.
#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Largest dyadic level: `simulation` (N^(1/3) scale) or `full` (N scale).
    #[arg(long, value_parser = jm_rule, default_value = "simulation")]
    pub jm_rule: JmRule,

    /// Level choice under super smooth noise: `adaptive` or `single-level`.
    #[arg(long)]
    pub variant: Option<ShtVariant>,
}

impl GridArgs {
    fn build(&self, noise: NoiseModel, n: usize) -> Result<ShtTest, CliError> {
        Ok(match self.variant {
            Some(v) => ShtTest::build(noise, n, self.jm_rule, v)?,
            None => ShtTest::for_noise(noise, n, self.jm_rule)?,
        })
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,

    /// Noise model: `identity`, `laplace:0.1`, `gaussian(0.2)`, JSON text or a .json file.
    #[arg(long, default_value = "identity")]
    pub noise: String,

    /// Density of the clean directions: `uniform`, `watson`, `bump`, `bump(0.3)` or JSON.
    #[arg(long, default_value = "uniform")]
    pub alternative: String,

    /// Number of points.
    #[arg(short, long, default_value_t = 100)]
    pub n: usize,

    /// Add Hammer projection columns `u,v`.
    #[arg(long)]
    pub project: bool,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, default_value = "identity")]
    pub noise: String,

    /// Sample size the threshold is calibrated for.
    #[arg(short, long)]
    pub n: usize,

    /// Null replicates.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPLICATES)]
    pub replicates: usize,

    /// Coverage grid CSV (`theta,phi,weight`); calibrates the exposure-weighted statistic.
    #[arg(long)]
    pub coverage: Option<PathBuf>,

    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: Common,

    /// Data CSV: `theta,phi` or `x,y,z` per row.
    pub data: PathBuf,

    #[arg(long, default_value = "identity")]
    pub noise: String,

    /// Calibration JSON written by `sht calibrate`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,

    /// Also report a Monte-Carlo p-value from this many null replicates.
    #[arg(long)]
    pub pvalue: Option<usize>,

    /// Null replicates when calibrating on the fly.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPLICATES)]
    pub calibration_replicates: usize,

    /// Coverage grid CSV; switches to the exposure-weighted statistic.
    #[arg(long)]
    pub coverage: Option<PathBuf>,

    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct PowerArgs {
    #[command(flatten)]
    pub common: Common,

    /// Noise settings, repeatable; the seven standard settings when absent.
    #[arg(long)]
    pub noise: Vec<String>,

    #[arg(long)]
    pub alternative: String,

    #[arg(short, long, default_value_t = 100)]
    pub n: usize,

    /// Simulated datasets per cell.
    #[arg(long, default_value_t = DEFAULT_POWER_REPLICATES)]
    pub replicates: usize,

    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPLICATES)]
    pub calibration_replicates: usize,

    /// Comma-separated subset of SHT,NN,BG.
    #[arg(long, value_delimiter = ',', default_value = "SHT,NN,BG")]
    pub methods: Vec<Method>,

    /// One-sided nearest-neighbour test (rejects on clustering only).
    #[arg(long)]
    pub nn_one_sided: bool,

    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, default_value = "identity")]
    pub noise: String,

    #[arg(long)]
    pub alternative: String,

    #[arg(short, long, default_value_t = 100)]
    pub n: usize,

    /// Null and alternative datasets, each.
    #[arg(long, default_value_t = DEFAULT_POWER_REPLICATES)]
    pub replicates: usize,

    #[arg(long, value_delimiter = ',', default_value = "SHT,NN,BG")]
    pub methods: Vec<Method>,

    #[command(flatten)]
    pub grid: GridArgs,
}

fn output(common: &Common) -> Result<Box<dyn Write>, CliError> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| CliError::Write {
            path: p.display().to_string(),
            source,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_err(common: &Common, source: io::Error) -> CliError {
    CliError::Write {
        path: common.out.as_ref().map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    }
}

fn emit_json<T: Serialize>(common: &Common, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(sht_core::Error::from)?;
    s.push('\n');
    let mut out = output(common)?;
    out.write_all(s.as_bytes()).and_then(|_| out.flush()).map_err(|e| write_err(common, e))
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn config(common: &Common, alternative: &str, noise: &NoiseModel, n: usize) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::new(parse::alternative(alternative)?, noise.descriptor(), n, common.seed);
    cfg.alpha = common.alpha;
    Ok(cfg)
}

pub fn simulate(args: SimulateArgs) -> Result<Outcome, CliError> {
    check_alpha(args.common.alpha)?;
    let noise = parse::noise(&args.noise)?;
    let cfg = config(&args.common, &args.alternative, &noise, args.n)?;
    let points = simulate_data(&cfg)?;
    let out = output(&args.common)?;
    write_points(out, &points, args.project).map_err(|e| write_err(&args.common, e))?;
    Ok(Outcome::Done)
}

fn null_law(coverage: &Option<PathBuf>) -> Result<NullLaw, CliError> {
    Ok(match coverage {
        Some(p) => NullLaw::Coverage(read_coverage(p)?),
        None => NullLaw::Uniform,
    })
}

pub fn calibrate(args: CalibrateArgs) -> Result<Outcome, CliError> {
    let noise = parse::noise(&args.noise)?;
    let test = args.grid.build(noise, args.n)?;
    let law = null_law(&args.coverage)?;
    info!("calibrating {} levels for N = {} under {noise}", test.procedure().levels.len(), args.n);
    let calib = calibrate_threshold(&test, &law, args.common.alpha, args.replicates, args.common.seed)?;
    info!("threshold {}", calib.quantile);
    emit_json(&args.common, &calib)?;
    Ok(Outcome::Done)
}

fn observations(data: Vec<sht_core::UnitVector>, law: &NullLaw) -> Result<Observations, CliError> {
    Ok(match law {
        NullLaw::Coverage(grid) => Observations::with_coverage(data, grid)?,
        NullLaw::Uniform => Observations::new(data),
    })
}

pub fn test(args: TestArgs) -> Result<Outcome, CliError> {
    check_alpha(args.common.alpha)?;
    let noise = parse::noise(&args.noise)?;
    let law = null_law(&args.coverage)?;
    let obs = observations(read_points(&args.data)?, &law)?;
    let report: TestReport = match (&args.calibration, args.pvalue) {
        (Some(path), pvalue) => {
            let calib: CalibrationResult = read_json(path)?;
            let mut report = run_test(&obs, &noise, &calib)?;
            if let Some(r) = pvalue {
                let test = ShtTest::new(noise, calib.procedure.clone())?;
                report.p_value = Some(p_value(&obs, &test, &law, r, args.common.seed)?);
            }
            report
        }
        (None, Some(r)) => {
            let test = args.grid.build(noise, obs.len())?;
            run_test_with_pvalue(&obs, &test, &law, args.common.alpha, r, args.common.seed)?
        }
        (None, None) => {
            let test = args.grid.build(noise, obs.len())?;
            info!("no calibration file; calibrating with {} replicates", args.calibration_replicates);
            let calib = calibrate_threshold(&test, &law, args.common.alpha, args.calibration_replicates, args.common.seed)?;
            run_test(&obs, &noise, &calib)?
        }
    };
    emit_json(&args.common, &report)?;
    Ok(match report.decision {
        Decision::Reject => Outcome::Reject,
        Decision::Accept => Outcome::Done,
    })
}

pub fn power(args: PowerArgs) -> Result<Outcome, CliError> {
    let noises = if args.noise.is_empty() {
        standard_noise_grid()
    } else {
        args.noise.iter().map(|s| parse::noise(s)).collect::<Result<_, _>>()?
    };
    let mut cfg = config(&args.common, &args.alternative, &noises[0], args.n)?;
    cfg.replicates = args.replicates;
    cfg.calibration_replicates = args.calibration_replicates;
    cfg.methods = args.methods.clone();
    cfg.jm_rule = args.grid.jm_rule;
    cfg.nn_two_sided = !args.nn_one_sided;
    if let Some(v) = args.grid.variant {
        cfg.supersmooth_variant = v;
    }
    let table = power_table(&cfg, &noises)?;
    for c in &table.cells {
        info!("{} {}({}): {:.1}% (se {:.2})", c.method, c.noise, c.sigma2, c.percent, c.std_error);
    }
    let out = output(&args.common)?;
    table.write_csv(out).map_err(|e| write_err(&args.common, e))?;
    Ok(Outcome::Done)
}

pub fn roc(args: RocArgs) -> Result<Outcome, CliError> {
    let noise = parse::noise(&args.noise)?;
    let mut cfg = config(&args.common, &args.alternative, &noise, args.n)?;
    cfg.replicates = args.replicates;
    cfg.methods = args.methods.clone();
    cfg.jm_rule = args.grid.jm_rule;
    if let Some(v) = args.grid.variant {
        cfg.supersmooth_variant = v;
    }
    let curves = roc_curves(&cfg)?;
    for c in &curves {
        info!("{} AUC {:.4}", c.method, c.auc);
    }
    let out = output(&args.common)?;
    write_roc_csv(&curves, out).map_err(|e| write_err(&args.common, e))?;
    Ok(Outcome::Done)
}
