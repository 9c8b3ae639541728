//! Monte Carlo simulation of `Z = Q₁ + Σ_{k≥1} M₁⋯M_k Q_{k+1}` with
//! `M ~ Beta(α, 1)`.
//!
//! Path `i` draws from its own ChaCha8 stream `(seed, i)`, so samples do not
//! depend on thread count or scheduling, and every reduction runs in a fixed
//! pairwise order over the index-ordered samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::qmodel::QLaw;
use crate::saddle::check_alpha;

pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-12;
pub const MAX_FACTORS: usize = 1_000_000;
/// Relative standard error above which an MGF estimate is flagged unstable.
pub const MGF_STDERR_LIMIT: f64 = 0.1;
/// Asymptotic two-sided 5% critical value of `√n · D_n`.
pub const DEFAULT_KS_THRESHOLD: f64 = 1.95;
const ECDF_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub law: QLaw,
    pub n_paths: usize,
    /// A path stops once the running product `M₁⋯M_k` is at most this.
    pub truncation_eps: f64,
    pub seed: u64,
    pub mgf_points: Vec<f64>,
}

impl SimConfig {
    pub fn new(alpha: f64, law: QLaw, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            alpha,
            law,
            n_paths,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
            seed,
            mgf_points: Vec::new(),
        }
    }

    pub fn with_mgf_points(mut self, points: Vec<f64>) -> Self {
        self.mgf_points = points;
        self
    }

    pub fn with_truncation_eps(mut self, eps: f64) -> Self {
        self.truncation_eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.law.validate()?;
        if !(self.truncation_eps > 0.0 && self.truncation_eps <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "truncation_eps",
                value: self.truncation_eps,
                reason: "must lie in (0, 1]",
            });
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                value: self.n_paths as f64,
                reason: "must be at least 2",
            });
        }
        for &s in &self.mgf_points {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "mgf_points",
                    value: s,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        Ok(())
    }

    /// Expected absolute error left by truncation:
    /// `eps · E[M]/(1 − E[M]) · E|Q| = eps · α · E|Q|`.
    pub fn truncation_bias_bound(&self) -> f64 {
        let abs_mean = match self.law {
            QLaw::PointMass { b } => b,
            QLaw::TwoPoint { b, p, q0 } => p * b + (1.0 - p) * q0.abs(),
            QLaw::GammaShift { b, theta, lambda } => b + theta * lambda,
            QLaw::ExpValidation { c } => 1.0 / c,
        };
        self.truncation_eps * self.alpha * abs_mean
    }
}

/// The RNG for path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One truncated realisation of `Z_α`.
pub fn sample_perpetuity<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<f64> {
    let inv_alpha = 1.0 / config.alpha;
    let mut z = config.law.sample(rng);
    let mut product = 1.0;
    let mut factors = 0;
    while product > config.truncation_eps {
        if factors == MAX_FACTORS {
            return Err(Error::Simulation(format!(
                "path did not reach product {} within {MAX_FACTORS} factors",
                config.truncation_eps
            )));
        }
        // Beta(α, 1) by inversion; 1 − U lies in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        product *= u.powf(inv_alpha);
        z += product * config.law.sample(rng);
        factors += 1;
    }
    Ok(z)
}

/// All `n_paths` samples in path order.
pub fn simulate(config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| sample_perpetuity(config, &mut path_rng(config.seed, i)))
        .collect()
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean_of(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    pub s: f64,
    pub value: f64,
    pub stderr: f64,
    /// False if `stderr/value` exceeds the limit or `e^{s·x}` overflows at the
    /// 0.9999 sample quantile.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub mean: Estimate,
    pub variance: Estimate,
    pub mgf: Vec<MgfEstimate>,
    /// Sample quantiles at levels `0, 0.01, …, 1`.
    pub ecdf: Vec<f64>,
    pub truncation_bias_bound: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] * (1.0 - w) + sorted[i + 1] * w
}

/// Summarises a sample; `samples` must be in path order.
pub fn summarize(config: &SimConfig, samples: &[f64]) -> SimSummary {
    let n = samples.len() as f64;
    let mean = mean_of(samples);
    let dev2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
    let m2 = mean_of(&dev2);
    let m4 = mean_of(&dev4);
    let variance = m2 * n / (n - 1.0);

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q_hi = quantile(&sorted, 0.9999);

    let mgf = config
        .mgf_points
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return MgfEstimate {
                    s,
                    value: 1.0,
                    stderr: 0.0,
                    stable: true,
                };
            }
            let e: Vec<f64> = samples.iter().map(|x| (s * x).exp()).collect();
            let value = mean_of(&e);
            let d2: Vec<f64> = e.iter().map(|v| (v - value).powi(2)).collect();
            let stderr = (pairwise_sum(&d2) / (n - 1.0) / n).sqrt();
            let stable = (s * q_hi).exp().is_finite()
                && value.is_finite()
                && stderr / value <= MGF_STDERR_LIMIT;
            MgfEstimate {
                s,
                value,
                stderr,
                stable,
            }
        })
        .collect();

    let ecdf = (0..ECDF_POINTS)
        .map(|i| quantile(&sorted, i as f64 / (ECDF_POINTS - 1) as f64))
        .collect();

    SimSummary {
        config: config.clone(),
        mean: Estimate {
            value: mean,
            stderr: (variance / n).sqrt(),
        },
        variance: Estimate {
            value: variance,
            stderr: ((m4 - m2 * m2) / n).max(0.0).sqrt(),
        },
        mgf,
        ecdf,
        truncation_bias_bound: config.truncation_bias_bound(),
    }
}

/// Simulates and summarises, including the MGF at every configured point.
pub fn empirical_mgf(config: &SimConfig) -> Result<SimSummary> {
    let samples = simulate(config)?;
    Ok(summarize(config, &samples))
}

/// Kolmogorov–Smirnov distance between a sorted sample and a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub alpha: f64,
    pub c: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub ks: f64,
    /// `√n · D_n`.
    pub ks_scaled: f64,
    pub ks_threshold: f64,
    pub mean: f64,
    pub mean_z: f64,
    pub variance: f64,
    pub variance_z: f64,
    pub passed: bool,
}

/// Simulates `Z_α` for exponential `Q` with rate `c` and tests it against
/// Gamma(shape `α + 1`, rate `c`).
pub fn gamma_case_validate(alpha: f64, c: f64, n_paths: usize, seed: u64) -> Result<GammaReport> {
    let config = SimConfig::new(alpha, QLaw::exp_validation(c)?, n_paths, seed);
    gamma_case_validate_with(&config, DEFAULT_KS_THRESHOLD)
}

pub fn gamma_case_validate_with(config: &SimConfig, ks_threshold: f64) -> Result<GammaReport> {
    let c = match config.law {
        QLaw::ExpValidation { c } => c,
        _ => {
            return Err(Error::Simulation(
                "gamma validation needs the exponential law".into(),
            ))
        }
    };
    let alpha = config.alpha;
    let samples = simulate(config)?;
    let n = samples.len() as f64;
    let shape = alpha + 1.0;
    let gamma = Gamma::new(shape, c).map_err(|e| Error::Simulation(e.to_string()))?;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let ks = ks_statistic(&sorted, |x| gamma.cdf(x));

    let mean = mean_of(&samples);
    let dev2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let variance = pairwise_sum(&dev2) / (n - 1.0);
    let true_mean = shape / c;
    let true_var = shape / (c * c);
    // Var of the sample variance ≈ (μ₄ − σ⁴)/n with μ₄ = 3k(k + 2)/c⁴.
    let mu4 = 3.0 * shape * (shape + 2.0) / c.powi(4);
    let mean_z = (mean - true_mean) / (true_var / n).sqrt();
    let variance_z = (variance - true_var) / ((mu4 - true_var * true_var) / n).sqrt();
    let ks_scaled = ks * n.sqrt();
    Ok(GammaReport {
        alpha,
        c,
        n_paths: config.n_paths,
        seed: config.seed,
        ks,
        ks_scaled,
        ks_threshold,
        mean,
        mean_z,
        variance,
        variance_z,
        passed: ks_scaled <= ks_threshold && mean_z.abs() <= 4.0 && variance_z.abs() <= 4.0,
    })
}
