//! The realisticity index `ri(z; f) = P(f(X) <= f(z))` for `X ~ f`.
//!
//! Backends:
//! * standard normal, exactly through the chi-square survival function,
//! * standard normal, through the large-dimension erf approximation,
//! * uniform boxes, where the index is the support indicator,
//! * any density with a log-pdf, through a 1-D Gaussian KDE of the sampled
//!   log-likelihoods `l_i = log f(w_i)` (Silverman bandwidth).
//!
//! A model also carries the rescaling factor `alpha` and a floor so that
//! `log ri_alpha` stays finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{PriorDensity, UniformBox};
use crate::special::{chi_square_sf, erf, normal_cdf};

pub const DEFAULT_KDE_SAMPLES: usize = 5000;
pub const DEFAULT_FLOOR_EPS: f64 = 1e-9;
pub const MAX_FLOOR_EPS: f64 = 1e-6;

/// Beyond this many bandwidths a kernel's CDF is 0 or 1 to double precision.
const KERNEL_CUTOFF: f64 = 9.0;

fn squared_norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}

/// `1 - F(|z|^2; D)` with `D = z.len()`.
pub fn ri_gaussian_exact(z: &[f64]) -> f64 {
    chi_square_sf(squared_norm(z), z.len())
}

/// `1/2 + 1/2 erf(sqrt(D - 1/2) - |z|)`, clamped to `[0, 1]`.
pub fn ri_gaussian_erf_approx(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    (0.5 + 0.5 * erf((d - 0.5).sqrt() - squared_norm(z).sqrt())).clamp(0.0, 1.0)
}

/// Indicator of the closed box.
pub fn ri_uniform(z: &[f64], support: &UniformBox) -> Result<f64> {
    Ok(if support.contains(z)? { 1.0 } else { 0.0 })
}

/// Silverman's rule for a 1-D Gaussian kernel: `(4 / 3n)^(1/5) * sigma`.
pub fn silverman_bandwidth(n: usize, sigma: f64) -> f64 {
    (4.0 / (3.0 * n as f64)).powf(0.2) * sigma
}

fn sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Kernel estimate of the CDF of `log f(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KdeRecord", into = "KdeRecord")]
pub struct KdeEstimator {
    /// Sorted ascending.
    log_likelihoods: Vec<f64>,
    bandwidth: f64,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct KdeRecord {
    log_likelihoods: Vec<f64>,
    bandwidth: f64,
    n: usize,
    #[serde(default)]
    seed: Option<u64>,
}

impl KdeEstimator {
    /// Draws `n` samples from `density` and fits the estimator to their
    /// log-likelihoods.
    pub fn fit(density: &PriorDensity, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "KDE needs at least 2 samples, got {n}"
            )));
        }
        let samples = density.sample(n, seed)?;
        let log_likelihoods = samples
            .row_iter()
            .map(|row| density.log_pdf(row.transpose().as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let mut est = Self::from_log_likelihoods(log_likelihoods)?;
        est.seed = Some(seed);
        Ok(est)
    }

    pub fn from_log_likelihoods(mut log_likelihoods: Vec<f64>) -> Result<Self> {
        let n = log_likelihoods.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "KDE needs at least 2 samples, got {n}"
            )));
        }
        if let Some(index) = log_likelihoods.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLogLikelihood { index });
        }
        log_likelihoods.sort_by(f64::total_cmp);
        let (mean, sigma) = sample_std(&log_likelihoods);
        if sigma <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::DegenerateLogDensity);
        }
        Ok(KdeEstimator {
            bandwidth: silverman_bandwidth(n, sigma),
            log_likelihoods,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.log_likelihoods.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `G(x) = 1/n sum_i Phi((x - l_i) / h)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let h = self.bandwidth;
        let ls = &self.log_likelihoods;
        // kernels entirely below x contribute 1, entirely above contribute 0
        let lo = ls.partition_point(|l| *l < x - KERNEL_CUTOFF * h);
        let hi = ls.partition_point(|l| *l <= x + KERNEL_CUTOFF * h);
        let partial: f64 = ls[lo..hi].iter().map(|l| normal_cdf((x - l) / h)).sum();
        ((lo as f64 + partial) / ls.len() as f64).clamp(0.0, 1.0)
    }
}

impl TryFrom<KdeRecord> for KdeEstimator {
    type Error = Error;

    fn try_from(rec: KdeRecord) -> Result<Self> {
        if rec.n != rec.log_likelihoods.len() {
            return Err(Error::InvalidParameter(format!(
                "KDE record declares n = {} but holds {} log-likelihoods",
                rec.n,
                rec.log_likelihoods.len()
            )));
        }
        let mut est = KdeEstimator::from_log_likelihoods(rec.log_likelihoods)?;
        if (est.bandwidth - rec.bandwidth).abs() > 1e-12 * est.bandwidth.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "stored bandwidth {} disagrees with Silverman's rule {}",
                rec.bandwidth, est.bandwidth
            )));
        }
        est.bandwidth = rec.bandwidth;
        est.seed = rec.seed;
        Ok(est)
    }
}

impl From<KdeEstimator> for KdeRecord {
    fn from(est: KdeEstimator) -> Self {
        KdeRecord {
            n: est.log_likelihoods.len(),
            log_likelihoods: est.log_likelihoods,
            bandwidth: est.bandwidth,
            seed: est.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub enum RiBackend {
    GaussianExact { dim: usize },
    GaussianErfApprox { dim: usize },
    UniformIndicator(UniformBox),
    Kde {
        estimator: KdeEstimator,
        density: PriorDensity,
    },
    /// Position-independent index; used as a stub in diagnostics and tests.
    Constant(f64),
}

impl RiBackend {
    pub fn dim(&self) -> Option<usize> {
        match self {
            RiBackend::GaussianExact { dim } | RiBackend::GaussianErfApprox { dim } => Some(*dim),
            RiBackend::UniformIndicator(b) => Some(b.dim()),
            RiBackend::Kde { density, .. } => Some(density.dim()),
            RiBackend::Constant(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealisticityModel {
    backend: RiBackend,
    alpha: f64,
    floor_eps: f64,
}

pub(crate) fn check_scaling(alpha: f64, floor_eps: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(floor_eps > 0.0 && floor_eps <= MAX_FLOOR_EPS) {
        return Err(Error::InvalidParameter(format!(
            "floor_eps must lie in (0, {MAX_FLOOR_EPS}], got {floor_eps}"
        )));
    }
    Ok(())
}

impl RealisticityModel {
    pub fn new(backend: RiBackend) -> Result<Self> {
        Self::with_scaling(backend, 1.0, DEFAULT_FLOOR_EPS)
    }

    pub fn with_scaling(backend: RiBackend, alpha: f64, floor_eps: f64) -> Result<Self> {
        check_scaling(alpha, floor_eps)?;
        match &backend {
            RiBackend::GaussianExact { dim } | RiBackend::GaussianErfApprox { dim } if *dim == 0 => {
                return Err(Error::InvalidParameter("dimension must be positive".into()));
            }
            RiBackend::Constant(c) if !(0.0..=1.0).contains(c) => {
                return Err(Error::InvalidParameter(format!("constant index {c} outside [0, 1]")));
            }
            _ => {}
        }
        Ok(RealisticityModel {
            backend,
            alpha,
            floor_eps,
        })
    }

    /// Fits a KDE backend for `density` with `n` samples.
    pub fn kde(density: PriorDensity, n: usize, seed: u64) -> Result<Self> {
        let estimator = KdeEstimator::fit(&density, n, seed)?;
        Self::new(RiBackend::Kde { estimator, density })
    }

    pub fn backend(&self) -> &RiBackend {
        &self.backend
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn floor_eps(&self) -> f64 {
        self.floor_eps
    }

    pub fn dim(&self) -> Option<usize> {
        self.backend.dim()
    }

    /// Raw index in `[0, 1]`.
    pub fn ri(&self, z: &[f64]) -> Result<f64> {
        if let Some(dim) = self.dim() {
            Error::check_dim(dim, z.len())?;
        }
        Ok(match &self.backend {
            RiBackend::GaussianExact { .. } => ri_gaussian_exact(z),
            RiBackend::GaussianErfApprox { .. } => ri_gaussian_erf_approx(z),
            RiBackend::UniformIndicator(b) => ri_uniform(z, b)?,
            RiBackend::Kde { estimator, density } => {
                let l = density.log_pdf(z)?;
                if l == f64::NEG_INFINITY {
                    0.0
                } else {
                    estimator.cdf(l)
                }
            }
            RiBackend::Constant(c) => *c,
        })
    }

    /// `max(alpha * ri(z), floor_eps)`.
    pub fn ri_alpha(&self, z: &[f64]) -> Result<f64> {
        Ok(self.rescale(self.ri(z)?))
    }

    pub fn rescale(&self, raw: f64) -> f64 {
        (self.alpha * raw).max(self.floor_eps)
    }
}
