//! Run configuration.
//!
//! Values come from three layers, highest first: command-line flags, the
//! JSON config file, built-in defaults. Relative file paths inside a config
//! file are resolved against the directory holding that file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use ri_interp::{
    AnalyticWarp, Generator, KdeEstimator, PriorDensity, RealisticityModel, RiBackend, SegmentNorm,
    SolverConfig,
};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_SAMPLES: usize = 1000;

/// Inline density, or `{"file": "prior.json"}`.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum PriorSource {
    File { file: PathBuf },
    Inline(PriorDensity),
}

impl<'de> Deserialize<'de> for PriorSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        match value.as_object() {
            Some(obj) if obj.contains_key("file") => {
                if obj.len() != 1 {
                    return Err(D::Error::custom("a prior file reference takes no other fields"));
                }
                let file = obj["file"]
                    .as_str()
                    .ok_or_else(|| D::Error::custom("prior file must be a string"))?;
                Ok(PriorSource::File { file: file.into() })
            }
            _ => PriorDensity::deserialize(value).map(PriorSource::Inline).map_err(D::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    /// Exact Gaussian for a standard normal prior, the indicator for a
    /// uniform box, KDE otherwise.
    #[default]
    Auto,
    GaussianExact,
    GaussianErf,
    Uniform,
    Kde,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiSpec {
    pub backend: BackendName,
    pub kde_n: usize,
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde_seed: Option<u64>,
    /// Previously fitted estimator; replaces fitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde_file: Option<PathBuf>,
}

impl Default for RiSpec {
    fn default() -> Self {
        RiSpec {
            backend: BackendName::Auto,
            kde_n: ri_interp::realisticity::DEFAULT_KDE_SAMPLES,
            kde_seed: None,
            kde_file: None,
        }
    }
}

/// Either `{"builtin": name, "params": {...}}` or `{"file": path}`.
/// Absent means the identity decoder.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

/// Explicit `start`/`end`, or two draws from the prior. The draw seed
/// defaults to the run seed plus one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSource>,
    pub ri: RiSpec,
    pub generator: GeneratorSpec,
    pub endpoints: EndpointSpec,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub norm_mode: Option<SegmentNorm>,
    pub samples: Option<usize>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::from_json_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = overrides.seed {
            self.solver.seed = seed;
        }
        if let Some(k) = overrides.k {
            self.solver.k = k;
        }
        if let Some(alpha) = overrides.alpha {
            self.solver.alpha = alpha;
        }
        if let Some(mode) = overrides.norm_mode {
            self.solver.segment_norm_mode = mode;
        }
        if let Some(n) = overrides.samples {
            self.samples = Some(n);
        }
    }

    /// Output directory. Taken as given, never relative to the config file.
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn samples(&self) -> Result<usize> {
        match self.samples.unwrap_or(DEFAULT_SAMPLES) {
            0 => Err(CliError::Config("sample count must be positive".into())),
            n => Ok(n),
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn read(&self, path: &Path) -> Result<String> {
        let full = self.resolve(path);
        fs::read_to_string(&full).map_err(|e| CliError::io(full, e))
    }

    pub fn prior(&self) -> Result<PriorDensity> {
        match &self.prior {
            None => Err(CliError::Config("no prior given".into())),
            Some(PriorSource::Inline(density)) => Ok(density.clone()),
            Some(PriorSource::File { file }) => serde_json::from_str(&self.read(file)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", file.display()))),
        }
    }

    pub fn generator(&self, latent_dim: usize) -> Result<Generator> {
        let spec = &self.generator;
        let generator = match (&spec.builtin, &spec.file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("generator takes either 'builtin' or 'file', not both".into()))
            }
            (None, Some(file)) => {
                if !spec.params.is_empty() {
                    return Err(CliError::Config("generator params apply to builtins only".into()));
                }
                Generator::from_json_str(&self.read(file)?)?
            }
            (Some(name), None) => Generator::Warp(AnalyticWarp::from_name(name, latent_dim, &spec.params)?),
            (None, None) => {
                if !spec.params.is_empty() {
                    return Err(CliError::Config("generator params given without a builtin".into()));
                }
                Generator::identity(latent_dim)
            }
        };
        if generator.in_dim() != latent_dim {
            return Err(CliError::Config(format!(
                "generator expects {}-dimensional latents but the prior is {latent_dim}-dimensional",
                generator.in_dim()
            )));
        }
        Ok(generator)
    }

    /// Checks the solver settings and the backend choice without fitting
    /// anything.
    pub fn check_model(&self, prior: &PriorDensity) -> Result<()> {
        self.solver.validate()?;
        let backend = self.backend_name(prior);
        match (backend, prior) {
            (BackendName::GaussianExact | BackendName::GaussianErf, PriorDensity::StandardNormal { .. }) => {}
            (BackendName::GaussianExact | BackendName::GaussianErf, _) => {
                return Err(CliError::Config("Gaussian backends need a standard_normal prior".into()))
            }
            (BackendName::Uniform, PriorDensity::UniformBox(_)) => {}
            (BackendName::Uniform, _) => {
                return Err(CliError::Config("the uniform backend needs a uniform_box prior".into()))
            }
            (BackendName::Kde, _) => {
                if self.ri.kde_file.is_none() && self.ri.kde_n < 2 {
                    return Err(CliError::Config("kde_n must be at least 2".into()));
                }
            }
            (BackendName::Auto, _) => unreachable!(),
        }
        Ok(())
    }

    fn backend_name(&self, prior: &PriorDensity) -> BackendName {
        match (self.ri.backend, prior) {
            (BackendName::Auto, PriorDensity::StandardNormal { .. }) => BackendName::GaussianExact,
            (BackendName::Auto, PriorDensity::UniformBox(_)) => BackendName::Uniform,
            (BackendName::Auto, _) => BackendName::Kde,
            (name, _) => name,
        }
    }

    /// Builds the realisticity model. The second value is a freshly fitted
    /// KDE estimator, if any, so it can be saved for reuse.
    pub fn model(&self, prior: &PriorDensity) -> Result<(RealisticityModel, Option<KdeEstimator>)> {
        self.check_model(prior)?;
        let dim = prior.dim();
        let (backend, fitted) = match (self.backend_name(prior), prior) {
            (BackendName::GaussianExact, _) => (RiBackend::GaussianExact { dim }, None),
            (BackendName::GaussianErf, _) => (RiBackend::GaussianErfApprox { dim }, None),
            (BackendName::Uniform, PriorDensity::UniformBox(support)) => {
                (RiBackend::UniformIndicator(support.clone()), None)
            }
            _ => {
                let (estimator, fitted) = match &self.ri.kde_file {
                    Some(file) => {
                        let estimator: KdeEstimator = serde_json::from_str(&self.read(file)?)
                            .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
                        (estimator, false)
                    }
                    None => {
                        let seed = self.ri.kde_seed.unwrap_or(self.solver.seed);
                        (KdeEstimator::fit(prior, self.ri.kde_n, seed)?, true)
                    }
                };
                let saved = fitted.then(|| estimator.clone());
                (
                    RiBackend::Kde {
                        estimator,
                        density: prior.clone(),
                    },
                    saved,
                )
            }
        };
        Ok((self.solver.model(backend)?, fitted))
    }

    pub fn endpoints(&self, prior: &PriorDensity) -> Result<(DVector<f64>, DVector<f64>)> {
        let spec = &self.endpoints;
        let dim = prior.dim();
        match (&spec.start, &spec.end) {
            (Some(start), Some(end)) => {
                if spec.sample_seed.is_some() {
                    return Err(CliError::Config("explicit endpoints take no sample_seed".into()));
                }
                for (name, v) in [("start", start), ("end", end)] {
                    if v.len() != dim {
                        return Err(CliError::Config(format!(
                            "{name} has {} coordinates, the prior has {dim}",
                            v.len()
                        )));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(CliError::Config(format!("{name} has non-finite coordinates")));
                    }
                }
                Ok((DVector::from_column_slice(start), DVector::from_column_slice(end)))
            }
            (None, None) => {
                let seed = spec.sample_seed.unwrap_or(self.solver.seed.wrapping_add(1));
                let draws = prior.sample(2, seed)?;
                Ok((draws.row(0).transpose(), draws.row(1).transpose()))
            }
            _ => Err(CliError::Config("endpoints need both start and end".into())),
        }
    }
}
