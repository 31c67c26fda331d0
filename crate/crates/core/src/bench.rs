//! Statistical experiments: error scaling, CLT variance, normalization
//! strategies and the PRNG uniformity statistic.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{hermite_function_family, legendre_family, BasisFamily, FamilyDescriptor, Region};
use crate::density::{FittedDensity, ModelFile};
use crate::error::{Error, Result};
use crate::estimator::{fit, EstimationOptions, Normalization};
use crate::fmt_f64;
use crate::oracle::{self, clt_predicted_std, true_coefficients, DensitySampler};
use crate::values::Coefficients;

/// Relative half-width of the accepted band around the ideal `√(n'/n)` RMS ratio.
pub const SCALING_TOLERANCE: f64 = 0.15;
/// Accepted range of empirical/predicted standard deviation.
pub const CLT_BAND: [f64; 2] = [0.8, 1.25];
/// Standard deviations below this count as zero when forming CLT ratios.
pub const ZERO_STD: f64 = 1e-12;

/// Cubic density on `[-1, 1]` used for the polynomial scaling runs.
pub fn legendre_testbed() -> FittedDensity {
    let fam = legendre_family(3, &Region::interval(-1.0, 1.0).expect("unit interval")).expect("legendre family");
    let a = vec![std::f64::consts::FRAC_1_SQRT_2, 0.25, 0.15, -0.1];
    FittedDensity::new(fam, Coefficients::Real(a)).expect("matching length")
}

/// Order-4 Hermite-function perturbation of a Gaussian, normalized to 1.
pub fn hermite_testbed() -> FittedDensity {
    let fam = hermite_function_family(4);
    let f = fam.integrals().to_vec();
    let (a1, a2, a3, a4) = (0.15, 0.1, -0.05, 0.08);
    let a0 = (1.0 - a2 * f[2] - a4 * f[4]) / f[0];
    FittedDensity::new(fam, Coefficients::Real(vec![a0, a1, a2, a3, a4])).expect("matching length")
}

/// Uniform density on `[-1, 1]` in the order-2 Legendre family.
pub fn uniform_testbed() -> FittedDensity {
    let fam = legendre_family(2, &Region::interval(-1.0, 1.0).expect("unit interval")).expect("legendre family");
    FittedDensity::new(fam, Coefficients::Real(vec![std::f64::consts::FRAC_1_SQRT_2, 0.0, 0.0])).expect("matching length")
}

/// Shipped testbed by name: `legendre`, `hermite` or `uniform`.
pub fn testbed(name: &str) -> Result<FittedDensity> {
    match name {
        "legendre" => Ok(legendre_testbed()),
        "hermite" => Ok(hermite_testbed()),
        "uniform" => Ok(uniform_testbed()),
        other => Err(Error::invalid(format!("unknown testbed `{other}` (expected legendre, hermite or uniform)"))),
    }
}

/// Resolved settings recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub density: ModelFile,
    pub family: FamilyDescriptor,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub generator: String,
}

impl ExperimentConfig {
    fn new(experiment: &str, density: &FittedDensity, family: &BasisFamily, n_values: Vec<usize>, trials: usize, seed: u64) -> Result<Self> {
        Ok(ExperimentConfig {
            experiment: experiment.to_string(),
            density: density.to_model()?,
            family: family.descriptor()?,
            n_values,
            trials,
            seed,
            generator: "chacha8".to_string(),
        })
    }
}

/// Stream index for trial `trial` at the `level`-th sample size.
fn stream(level: usize, trial: usize) -> u64 {
    ((level as u64) << 32) | trial as u64
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::invalid("at least two trials are needed for a dispersion estimate"));
    }
    Ok(())
}

/// Runs `trials` independent fits of `n`-point samples; results are in trial order.
fn run_trials(
    sampler: &DensitySampler,
    family: &BasisFamily,
    opts: &EstimationOptions,
    n: usize,
    trials: usize,
    seed: u64,
    level: usize,
) -> Result<Vec<Vec<f64>>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let run = || -> Result<Vec<f64>> {
                let sample = sampler.sample(n, &mut oracle::rng(seed, stream(level, trial)))?;
                Ok(fit(&sample, family, opts)?.coefficients.as_real()?.to_vec())
            };
            run().map_err(|e| Error::Trial { trial, source: Box::new(e) })
        })
        .collect()
}

fn rms(rows: &[Vec<f64>]) -> f64 {
    (rows.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / rows.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    /// RMS over trials of the Euclidean coefficient error.
    pub rms: f64,
    pub rms_per_coefficient: Vec<f64>,
    pub predicted_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub n_small: usize,
    pub n_large: usize,
    pub ratio: f64,
    pub band: [f64; 2],
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ExperimentConfig,
    pub true_coefficients: Vec<f64>,
    pub rows: Vec<ScalingRow>,
    pub ratios: Vec<RatioCheck>,
    /// `errors[level][trial][i]`: fitted minus true coefficient.
    pub errors: Vec<Vec<Vec<f64>>>,
    pub pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

/// RMS coefficient error against the true projection for each sample size.
pub fn error_scaling_experiment(
    density: &FittedDensity,
    family: &BasisFamily,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ScalingReport> {
    let start = Instant::now();
    check_trials(trials)?;
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) || n_values[0] == 0 {
        return Err(Error::invalid("sample sizes must be positive and strictly increasing"));
    }
    let truth = true_coefficients(density, family)?;
    let sampler = DensitySampler::new(density)?;
    let opts = EstimationOptions::default();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (level, &n) in n_values.iter().enumerate() {
        let fits = run_trials(&sampler, family, &opts, n, trials, seed, level)?;
        let errs: Vec<Vec<f64>> = fits.iter().map(|a| a.iter().zip(&truth).map(|(x, y)| x - y).collect()).collect();
        if errs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coefficient error"));
        }
        let per: Vec<f64> = (0..truth.len())
            .map(|i| (errs.iter().map(|e| e[i] * e[i]).sum::<f64>() / trials as f64).sqrt())
            .collect();
        let predicted = predicted_stds(density, family, &truth, n)?;
        rows.push(ScalingRow { n, rms: rms(&errs), rms_per_coefficient: per, predicted_std: predicted });
        errors.push(errs);
    }
    let ratios: Vec<RatioCheck> = rows
        .windows(2)
        .map(|w| {
            let ideal = (w[1].n as f64 / w[0].n as f64).sqrt();
            let band = [ideal * (1.0 - SCALING_TOLERANCE), ideal * (1.0 + SCALING_TOLERANCE)];
            let ratio = w[0].rms / w[1].rms;
            RatioCheck { n_small: w[0].n, n_large: w[1].n, ratio, band, pass: ratio >= band[0] && ratio <= band[1] }
        })
        .collect();
    Ok(ScalingReport {
        config: ExperimentConfig::new("scaling", density, family, n_values.to_vec(), trials, seed)?,
        true_coefficients: truth,
        pass: ratios.iter().all(|r| r.pass),
        rows,
        ratios,
        errors,
        runtime: start.elapsed(),
    })
}

fn predicted_stds(density: &FittedDensity, family: &BasisFamily, truth: &[f64], n: usize) -> Result<Vec<f64>> {
    (0..family.size())
        .map(|i| {
            let f = family.function(i);
            clt_predicted_std(density, |x| f.eval(x), truth[i], n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub index: usize,
    pub true_coefficient: f64,
    pub mean_estimate: f64,
    pub empirical_std: f64,
    pub predicted_std: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub config: ExperimentConfig,
    pub band: [f64; 2],
    pub rows: Vec<CltRow>,
    pub pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

/// Empirical spread of each coefficient over `trials` fits against `√(Var f_i / n)`.
pub fn clt_variance_check(density: &FittedDensity, family: &BasisFamily, n: usize, trials: usize, seed: u64) -> Result<CltReport> {
    let start = Instant::now();
    check_trials(trials)?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let truth = true_coefficients(density, family)?;
    let predicted = predicted_stds(density, family, &truth, n)?;
    let sampler = DensitySampler::new(density)?;
    let fits = run_trials(&sampler, family, &EstimationOptions::default(), n, trials, seed, 0)?;
    let rows: Vec<CltRow> = (0..family.size())
        .map(|i| {
            let vals: Vec<f64> = fits.iter().map(|a| a[i]).collect();
            let mean = vals.iter().sum::<f64>() / trials as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            let empirical = var.sqrt();
            let ratio = match (empirical < ZERO_STD, predicted[i] < ZERO_STD) {
                (true, true) => 1.0,
                (_, true) => f64::INFINITY,
                _ => empirical / predicted[i],
            };
            CltRow {
                index: i,
                true_coefficient: truth[i],
                mean_estimate: mean,
                empirical_std: empirical,
                predicted_std: predicted[i],
                ratio,
                pass: (CLT_BAND[0]..=CLT_BAND[1]).contains(&ratio),
            }
        })
        .collect();
    Ok(CltReport {
        config: ExperimentConfig::new("clt", density, family, vec![n], trials, seed)?,
        band: CLT_BAND,
        pass: rows.iter().all(|r| r.pass),
        rows,
        runtime: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRow {
    pub strategy: String,
    pub rms: f64,
    /// Largest `|Σ a_i F_i − C|` over trials.
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub config: ExperimentConfig,
    pub normalization_constant: f64,
    pub rows: Vec<NormalizationRow>,
    #[serde(skip)]
    pub runtime: Duration,
}

/// RMS coefficient error for no normalization, post-hoc rescaling and the Lagrange constraint.
///
/// All strategies are applied to the same samples.
pub fn normalization_comparison(density: &FittedDensity, n: usize, trials: usize, seed: u64) -> Result<NormalizationReport> {
    let start = Instant::now();
    check_trials(trials)?;
    let family = density.family.clone();
    let truth = true_coefficients(density, &family)?;
    let c = 1.0;
    let sampler = DensitySampler::new(density)?;
    let strategies = [
        ("none", Normalization::None),
        ("posthoc", Normalization::PosthocRescale),
        ("lagrange", Normalization::Lagrange { c }),
    ];
    let mut rows = Vec::new();
    for (name, normalization) in strategies {
        let opts = EstimationOptions { normalization, ..Default::default() };
        let fits = run_trials(&sampler, &family, &opts, n, trials, seed, 0)?;
        let errs: Vec<Vec<f64>> = fits.iter().map(|a| a.iter().zip(&truth).map(|(x, y)| x - y).collect()).collect();
        let violation = fits
            .iter()
            .map(|a| (a.iter().zip(family.integrals()).map(|(x, f)| x * f).sum::<f64>() - c).abs())
            .fold(0.0, f64::max);
        rows.push(NormalizationRow { strategy: name.to_string(), rms: rms(&errs), max_constraint_violation: violation });
    }
    Ok(NormalizationReport {
        config: ExperimentConfig::new("normalization", density, &family, vec![n], trials, seed)?,
        normalization_constant: c,
        rows,
        runtime: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrngResult {
    pub dim: usize,
    pub n_tuples: usize,
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Mean of `∏_d (x_d − ½)` over non-overlapping `dim`-tuples, with its z-score
/// against `√((1/12)^D / n)` and the two-sided normal p-value.
pub fn prng_uniformity_test(values: &[f64], dim: usize, n_tuples: usize) -> Result<PrngResult> {
    if dim == 0 || n_tuples == 0 {
        return Err(Error::invalid("tuple dimension and count must be positive"));
    }
    let needed = dim * n_tuples;
    if values.len() < needed {
        return Err(Error::InsufficientInput { needed, got: values.len() });
    }
    let sum: f64 = values[..needed].chunks_exact(dim).map(|t| t.iter().map(|x| x - 0.5).product::<f64>()).sum();
    let statistic = sum / n_tuples as f64;
    let sigma = ((1.0f64 / 12.0).powi(dim as i32) / n_tuples as f64).sqrt();
    let z = statistic / sigma;
    let p_value = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(PrngResult { dim, n_tuples, statistic, z, p_value })
}

/// Little-endian `u32` words scaled by `2^-32` into `[0, 1)`; trailing bytes are ignored.
pub fn unit_values_from_bytes(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 / 4294967296.0)
        .collect()
}

/// `len` values from ChaCha8 seeded with `seed`.
pub fn chacha_values(seed: u64, len: usize) -> Vec<f64> {
    let mut r = oracle::rng(seed, 0);
    (0..len).map(|_| r.next_u32() as f64 / 4294967296.0).collect()
}

/// A defective stream where every odd value repeats the preceding one.
pub fn duplicated_values(seed: u64, len: usize) -> Vec<f64> {
    let base = chacha_values(seed, len.div_ceil(2));
    base.iter().flat_map(|&v| [v, v]).take(len).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoReport {
    pub family: FamilyDescriptor,
    pub size: usize,
    pub max_off_diagonal: f64,
    pub max_diagonal_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Deviation of the quadrature Gram matrix from the identity.
pub fn orthocheck(family: &BasisFamily, tolerance: f64) -> Result<OrthoReport> {
    let g = family.gram_matrix()?;
    let m = family.size();
    let mut off: f64 = 0.0;
    let mut diag: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                diag = diag.max((g[(i, j)] - 1.0).abs());
            } else {
                off = off.max(g[(i, j)].abs());
            }
        }
    }
    Ok(OrthoReport {
        family: family.descriptor()?,
        size: m,
        max_off_diagonal: off,
        max_diagonal_deviation: diag,
        tolerance,
        pass: off <= tolerance && diag <= tolerance,
    })
}

/// Writes `value` as pretty JSON.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

const SUMMARY_HEADER: [&str; 5] = ["n", "coefficient", "rms", "predicted_std", "ratio"];

fn write_summary(path: &Path, rows: impl Iterator<Item = [String; 5]>) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| io(e.into_error()))?.flush().map_err(io)
}

impl ScalingReport {
    /// One row per `(n, coefficient)`: RMS error, predicted std and their ratio.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_summary(
            path.as_ref(),
            self.rows.iter().flat_map(|r| {
                (0..r.rms_per_coefficient.len()).map(move |i| {
                    let (e, p) = (r.rms_per_coefficient[i], r.predicted_std[i]);
                    [r.n.to_string(), i.to_string(), fmt_f64(e), fmt_f64(p), fmt_f64(if p < ZERO_STD { 1.0 } else { e / p })]
                })
            }),
        )
    }
}

impl CltReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.config.n_values[0];
        write_summary(
            path.as_ref(),
            self.rows.iter().map(|r| {
                [n.to_string(), r.index.to_string(), fmt_f64(r.empirical_std), fmt_f64(r.predicted_std), fmt_f64(r.ratio)]
            }),
        )
    }
}

impl NormalizationReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: std::io::Error| Error::io(path, e);
        let mut out = String::from("strategy,rms,max_constraint_violation\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.strategy, fmt_f64(r.rms), fmt_f64(r.max_constraint_violation)));
        }
        std::fs::write(path, out).map_err(io)
    }
}

impl PrngResult {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let out = format!(
            "dim,n_tuples,statistic,z,p_value\n{},{},{},{},{}\n",
            self.dim,
            self.n_tuples,
            fmt_f64(self.statistic),
            fmt_f64(self.z),
            fmt_f64(self.p_value)
        );
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
