//! Latent-space prior densities.
//!
//! Every prior exposes `log f(z)` and seeded sampling. Densities are
//! immutable once built; Gaussian covariances are Cholesky-factored at
//! construction so evaluation never re-factors.
//!
//! JSON form (matrices row-major):
//!
//! ```json
//! {"type": "standard_normal", "dim": 2}
//! {"type": "gaussian_mixture", "weights": [0.5, 0.5],
//!  "means": [[0, 0], [1, 1]], "covariances": [[[1, 0], [0, 1]], [[2, 0], [0, 2]]]}
//! {"type": "uniform_box", "lower": [0, 0], "upper": [1, 1]}
//! {"type": "semicircle", "dim": 20}
//! ```
//!
//! `semicircle` is accepted on input only and is written back out as the
//! equivalent `gaussian_mixture`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// The crate-wide seeded generator. ChaCha8 streams are specified
/// independently of platform and word size, so a seed reproduces the same
/// draws everywhere.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    /// `log(weight) - D/2 log(2 pi) - log sqrt(det covariance)`
    log_scale: f64,
}

impl GaussianComponent {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Weighted log-density of this component at `z`.
    fn weighted_log_pdf(&self, z: &[f64]) -> f64 {
        let diff = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.mean.iter()).map(|(a, b)| a - b),
        );
        let white = self
            .chol_lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a nonzero diagonal");
        self.log_scale - 0.5 * white.norm_squared()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if means.len() != weights.len() || covariances.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "mixture has {} weights, {} means and {} covariances",
                weights.len(),
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }

        let mut components = Vec::with_capacity(weights.len());
        for (idx, ((weight, mean), covariance)) in
            weights.into_iter().zip(means).zip(covariances).enumerate()
        {
            Error::check_dim(dim, mean.len())?;
            if covariance.nrows() != dim || covariance.ncols() != dim {
                return Err(Error::InvalidParameter(format!(
                    "covariance {idx} is {}x{}, expected {dim}x{dim}",
                    covariance.nrows(),
                    covariance.ncols()
                )));
            }
            for i in 0..dim {
                for j in 0..i {
                    let (a, b) = (covariance[(i, j)], covariance[(j, i)]);
                    if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                        return Err(Error::NotPositiveDefinite { component: idx });
                    }
                }
            }
            let chol = nalgebra::Cholesky::new(covariance.clone())
                .ok_or(Error::NotPositiveDefinite { component: idx })?;
            let chol_lower = chol.l();
            let half_log_det: f64 = chol_lower.diagonal().iter().map(|d| d.ln()).sum();
            let log_scale = weight.ln() - 0.5 * dim as f64 * (2.0 * PI).ln() - half_log_det;
            components.push(GaussianComponent {
                weight,
                mean,
                covariance,
                chol_lower,
                log_scale,
            });
        }
        Ok(GaussianMixture { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    fn log_pdf_unchecked(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weighted_log_pdf(z))
            .collect();
        log_sum_exp(&terms)
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (idx, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = idx;
                break;
            }
        }
        let c = &self.components[chosen];
        let eps = DVector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let draw = &c.mean + &c.chol_lower * eps;
        out.copy_from_slice(draw.as_slice());
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Axis-aligned box `[lower, upper]` carrying the normalized uniform density.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    log_density: f64,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Error::check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParameter(
                "uniform box needs finite bounds with upper > lower".into(),
            ));
        }
        let log_volume: f64 = lower.iter().zip(&upper).map(|(l, u)| (u - l).ln()).sum();
        Ok(UniformBox {
            lower,
            upper,
            log_density: -log_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership.
    pub fn contains(&self, z: &[f64]) -> Result<bool> {
        Error::check_dim(self.dim(), z.len())?;
        Ok(z
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PriorSpec", into = "PriorSpec")]
pub enum PriorDensity {
    StandardNormal { dim: usize },
    GaussianMixture(GaussianMixture),
    UniformBox(UniformBox),
}

impl PriorDensity {
    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(PriorDensity::StandardNormal { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorDensity::StandardNormal { dim } => *dim,
            PriorDensity::GaussianMixture(m) => m.dim(),
            PriorDensity::UniformBox(b) => b.dim(),
        }
    }

    /// `log f(z)`; `-inf` exactly outside a uniform box.
    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), z.len())?;
        Ok(match self {
            PriorDensity::StandardNormal { dim } => {
                let sq: f64 = z.iter().map(|x| x * x).sum();
                -0.5 * sq - 0.5 * *dim as f64 * (2.0 * PI).ln()
            }
            PriorDensity::GaussianMixture(m) => m.log_pdf_unchecked(z),
            PriorDensity::UniformBox(b) => {
                if b.contains(z)? {
                    b.log_density
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    /// `n` i.i.d. draws as the rows of an `n x dim` matrix.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        let dim = self.dim();
        let mut rng = seeded_rng(seed);
        let mut out = DMatrix::zeros(n, dim);
        let mut row = vec![0.0; dim];
        for i in 0..n {
            match self {
                PriorDensity::StandardNormal { .. } => {
                    for x in row.iter_mut() {
                        *x = rng.sample(StandardNormal);
                    }
                }
                PriorDensity::GaussianMixture(m) => m.sample_into(&mut rng, &mut row),
                PriorDensity::UniformBox(b) => {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = rng.random_range(b.lower[j]..=b.upper[j]);
                    }
                }
            }
            for (j, x) in row.iter().enumerate() {
                out[(i, j)] = *x;
            }
        }
        Ok(out)
    }
}

/// Three-component "horseshoe" mixture. The first two coordinates carry the
/// shape; the remaining `dim - 2` are independent with variance 0.5.
pub fn semicircle_prior(dim: usize) -> Result<PriorDensity> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "semicircle prior needs dim >= 2, got {dim}"
        )));
    }
    let heads = [(2.0, 6.0), (0.0, 0.0), (2.0, -6.0)];
    let blocks = [[5.0, 2.0, 2.0, 2.0], [1.0, 0.0, 0.0, 3.0], [5.0, -2.0, -2.0, 2.0]];
    let mut means = Vec::with_capacity(3);
    let mut covariances = Vec::with_capacity(3);
    for (head, block) in heads.iter().zip(&blocks) {
        let mut mean = DVector::zeros(dim);
        mean[0] = head.0;
        mean[1] = head.1;
        let mut cov = DMatrix::from_diagonal_element(dim, dim, 0.5);
        cov[(0, 0)] = block[0];
        cov[(0, 1)] = block[1];
        cov[(1, 0)] = block[2];
        cov[(1, 1)] = block[3];
        means.push(mean);
        covariances.push(cov);
    }
    Ok(PriorDensity::GaussianMixture(GaussianMixture::new(
        vec![1.0 / 3.0; 3],
        means,
        covariances,
    )?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum PriorSpec {
    StandardNormal {
        dim: usize,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Semicircle {
        dim: usize,
    },
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParameter("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<PriorSpec> for PriorDensity {
    type Error = Error;

    fn try_from(spec: PriorSpec) -> Result<Self> {
        match spec {
            PriorSpec::StandardNormal { dim } => PriorDensity::standard_normal(dim),
            PriorSpec::GaussianMixture {
                weights,
                means,
                covariances,
            } => {
                let means = means.into_iter().map(DVector::from_vec).collect();
                let covariances = covariances
                    .iter()
                    .map(|c| matrix_from_rows(c))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PriorDensity::GaussianMixture(GaussianMixture::new(
                    weights,
                    means,
                    covariances,
                )?))
            }
            PriorSpec::UniformBox { lower, upper } => {
                Ok(PriorDensity::UniformBox(UniformBox::new(lower, upper)?))
            }
            PriorSpec::Semicircle { dim } => semicircle_prior(dim),
        }
    }
}

impl From<PriorDensity> for PriorSpec {
    fn from(density: PriorDensity) -> Self {
        match density {
            PriorDensity::StandardNormal { dim } => PriorSpec::StandardNormal { dim },
            PriorDensity::GaussianMixture(m) => PriorSpec::GaussianMixture {
                weights: m.components.iter().map(|c| c.weight).collect(),
                means: m.components.iter().map(|c| c.mean.iter().copied().collect()).collect(),
                covariances: m.components.iter().map(|c| matrix_to_rows(&c.covariance)).collect(),
            },
            PriorDensity::UniformBox(b) => PriorSpec::UniformBox {
                lower: b.lower,
                upper: b.upper,
            },
        }
    }
}
