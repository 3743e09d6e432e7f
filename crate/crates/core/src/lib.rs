//! Realisticity index of latent points and curves, and interpolation paths
//! that maximize it.
//!
//! The realisticity of a latent point is the probability that a prior draw
//! has no higher density. A curve's index integrates its log along the
//! decoded arclength, which makes it `exp(-length)` under the pullback
//! metric `log^2 ri(z) dG^T dG`. Maximizing it is done by minimizing the
//! discretized energy of that metric over the path's midpoints.

pub mod analysis;
pub mod error;
pub mod generator;
pub mod geodesic;
pub mod prior;
pub mod realisticity;
pub mod special;

pub use analysis::{
    compare, decoded_l2_distances, project_to_endpoint_plane, ri_along_path, PathComparison,
    PathReport,
};
pub use error::{Error, Result};
pub use generator::{load_generator, save_generator, Activation, AnalyticWarp, Generator, Layer};
pub use geodesic::{
    curve_ri, energy_gradient, linear_init, optimize, path_energy, riemann_metric,
    InterpolationPath, OptimizationTrace, OptimizerKind, SegmentNorm, SolverConfig,
};
pub use prior::{semicircle_prior, GaussianMixture, PriorDensity, UniformBox};
pub use realisticity::{
    ri_gaussian_erf_approx, ri_gaussian_exact, ri_uniform, KdeEstimator, RealisticityModel,
    RiBackend,
};

/// CSV formatting for reals: 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
