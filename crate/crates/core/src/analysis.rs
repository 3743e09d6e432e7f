//! Path diagnostics: decoded segment lengths, pointwise realisticity and the
//! projection onto the plane spanned by the endpoints.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_real;
use crate::generator::Generator;
use crate::geodesic::{curve_ri, path_energy, InterpolationPath, SegmentNorm};
use crate::realisticity::RealisticityModel;

/// Minimum angle between the endpoints for the projection basis.
pub const MIN_BASIS_ANGLE: f64 = 1e-6;

/// `|G(x_{i+1}) - G(x_i)|` for every segment.
pub fn decoded_l2_distances(path: &InterpolationPath, generator: &Generator) -> Result<Vec<f64>> {
    let decoded = path
        .points()
        .map(|p| generator.decode(p.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(decoded.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect())
}

/// Raw (un-rescaled) index at every point, endpoints included.
pub fn ri_along_path(path: &InterpolationPath, model: &RealisticityModel) -> Result<Vec<f64>> {
    path.points().map(|p| model.ri(p.as_slice())).collect()
}

/// Coordinates `(x, y)` with `x z_0 + y z_k` equal to the orthogonal
/// projection of each point onto `span{z_0, z_k}`.
pub fn project_to_endpoint_plane(path: &InterpolationPath) -> Result<Vec<(f64, f64)>> {
    let (a, b) = (path.start(), path.end());
    let (aa, bb, ab) = (a.norm_squared(), b.norm_squared(), a.dot(b));
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    let det = aa * bb - ab * ab;
    let sin_sq = det / (aa * bb);
    if !(sin_sq > MIN_BASIS_ANGLE.sin().powi(2)) {
        return Err(Error::DegenerateProjection);
    }
    let k = path.k();
    Ok(path
        .points()
        .enumerate()
        .map(|(i, z)| {
            if i == 0 {
                return (1.0, 0.0);
            }
            if i == k {
                return (0.0, 1.0);
            }
            let (az, bz) = (a.dot(z), b.dot(z));
            ((bb * az - ab * bz) / det, (aa * bz - ab * az) / det)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub k: usize,
    pub decoded_l2: Vec<f64>,
    /// Decoded arclength up to each point, starting at 0.
    pub cumulative_length: Vec<f64>,
    pub ri_values: Vec<f64>,
    pub ri_alpha_values: Vec<f64>,
    pub curve_ri: f64,
    pub energy: f64,
    /// Absent when the endpoints do not span a plane.
    pub projection: Option<Vec<(f64, f64)>>,
}

impl PathReport {
    pub fn build(
        path: &InterpolationPath,
        model: &RealisticityModel,
        generator: &Generator,
        mode: SegmentNorm,
    ) -> Result<Self> {
        let decoded_l2 = decoded_l2_distances(path, generator)?;
        let mut cumulative_length = Vec::with_capacity(decoded_l2.len() + 1);
        let mut acc = 0.0;
        cumulative_length.push(acc);
        for d in &decoded_l2 {
            acc += d;
            cumulative_length.push(acc);
        }
        let ri_values = ri_along_path(path, model)?;
        let ri_alpha_values = ri_values.iter().map(|r| model.rescale(*r)).collect();
        let projection = match project_to_endpoint_plane(path) {
            Ok(p) => Some(p),
            Err(Error::DegenerateProjection) => None,
            Err(e) => return Err(e),
        };
        Ok(PathReport {
            k: path.k(),
            decoded_l2,
            cumulative_length,
            ri_values,
            ri_alpha_values,
            curve_ri: curve_ri(path, model, generator)?,
            energy: path_energy(path, model, generator, mode)?,
            projection,
        })
    }

    /// One row per path point: `index,ri,cumulative_length,proj_x,proj_y`.
    /// Projection columns are empty when the projection is absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,ri,cumulative_length,proj_x,proj_y\n");
        for (i, (ri, len)) in self.ri_values.iter().zip(&self.cumulative_length).enumerate() {
            let proj = match &self.projection {
                Some(p) => format!("{},{}", fmt_real(p[i].0), fmt_real(p[i].1)),
                None => ",".to_string(),
            };
            out.push_str(&format!("{i},{},{},{proj}\n", fmt_real(*ri), fmt_real(*len)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComparison {
    pub linear: PathReport,
    pub optimized: PathReport,
}

/// Reports for two paths between the same endpoints under the same model
/// and decoder.
pub fn compare(
    linear: &InterpolationPath,
    optimized: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
    mode: SegmentNorm,
) -> Result<PathComparison> {
    Error::check_dim(linear.dim(), optimized.dim())?;
    if linear.k() != optimized.k() {
        return Err(Error::InvalidParameter(format!(
            "paths have different segment counts ({} vs {})",
            linear.k(),
            optimized.k()
        )));
    }
    Ok(PathComparison {
        linear: PathReport::build(linear, model, generator, mode)?,
        optimized: PathReport::build(optimized, model, generator, mode)?,
    })
}

/// Component of `z` orthogonal to `span{a, b}` by Gram-Schmidt.
pub fn orthogonal_residual(z: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let e1 = a.normalize();
    let b_perp = b - e1.scale(e1.dot(b));
    let e2 = b_perp.normalize();
    z - e1.scale(e1.dot(z)) - e2.scale(e2.dot(z))
}
