//! Decoders `G: R^D -> R^N` with exact Jacobians.
//!
//! Weight files are JSON, matrices row-major, one entry per layer:
//!
//! ```json
//! {"type": "mlp", "layers": [
//!   {"w": [[0.5, -1.0], [1.0, 0.2], [0.0, 1.0]], "b": [0, 0, 0.1], "act": "tanh"},
//!   {"w": [[1, 0, 0], [0, 1, 1]], "b": [0, 0], "act": "id"}]}
//! ```
//!
//! A `"linear"` file holds exactly one layer with `"act": "id"` (or no
//! `act`). Optional top-level `"in_dim"` / `"out_dim"` are checked against
//! the layer shapes when present.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{matrix_from_rows, matrix_to_rows};

/// Smallest singular value a linear decoder must exceed.
pub const INJECTIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "id")]
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`; relu uses 0 at exactly 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Self {
        Layer {
            weight,
            bias,
            activation,
        }
    }
}

/// Built-in smooth warps used as nonlinear test beds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticWarp {
    Identity { dim: usize },
    /// Rotates `z` by `strength * |z|` radians.
    Swirl2d { strength: f64 },
    /// `z * (1 + beta |z|^2)`.
    Blowup { dim: usize, beta: f64 },
}

impl AnalyticWarp {
    pub const NAMES: [&'static str; 3] = ["identity", "swirl2d", "blowup"];

    /// Looks up a registered warp. `dim` is ignored by `swirl2d`, which is
    /// always two-dimensional.
    pub fn from_name(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<Self> {
        let param = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let allowed: &[&str] = match name {
            "identity" => &[],
            "swirl2d" => &["strength"],
            "blowup" => &["beta"],
            other => return Err(Error::UnknownWarp(other.to_string())),
        };
        if let Some(key) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("warp '{name}' has no parameter '{key}'")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(match name {
            "identity" => AnalyticWarp::Identity { dim },
            "swirl2d" => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, got: dim });
                }
                AnalyticWarp::Swirl2d {
                    strength: param("strength", 1.0),
                }
            }
            _ => AnalyticWarp::Blowup {
                dim,
                beta: param("beta", 0.1),
            },
        })
    }

    fn dim(&self) -> usize {
        match self {
            AnalyticWarp::Identity { dim } | AnalyticWarp::Blowup { dim, .. } => *dim,
            AnalyticWarp::Swirl2d { .. } => 2,
        }
    }

    fn decode(&self, z: &[f64]) -> DVector<f64> {
        match self {
            AnalyticWarp::Identity { .. } => DVector::from_column_slice(z),
            AnalyticWarp::Swirl2d { strength } => {
                let r = z[0].hypot(z[1]);
                let (s, c) = (strength * r).sin_cos();
                DVector::from_vec(vec![c * z[0] - s * z[1], s * z[0] + c * z[1]])
            }
            AnalyticWarp::Blowup { beta, .. } => {
                let scale = 1.0 + beta * z.iter().map(|x| x * x).sum::<f64>();
                DVector::from_iterator(z.len(), z.iter().map(|x| x * scale))
            }
        }
    }

    fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        match self {
            AnalyticWarp::Identity { dim } => DMatrix::identity(*dim, *dim),
            AnalyticWarp::Swirl2d { strength } => {
                let r = z[0].hypot(z[1]);
                let (s, c) = (strength * r).sin_cos();
                let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                if r == 0.0 {
                    return rot;
                }
                // d/dtheta (R z), times grad theta = strength * z / r
                let d_rot_z = DVector::from_vec(vec![-s * z[0] - c * z[1], c * z[0] - s * z[1]]);
                let grad_theta = DVector::from_vec(vec![strength * z[0] / r, strength * z[1] / r]);
                rot + d_rot_z * grad_theta.transpose()
            }
            AnalyticWarp::Blowup { dim, beta } => {
                let zv = DVector::from_column_slice(z);
                let scale = 1.0 + beta * zv.norm_squared();
                DMatrix::from_diagonal_element(*dim, *dim, scale) + (2.0 * beta) * &zv * zv.transpose()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Linear { a: DMatrix<f64>, b: DVector<f64> },
    Mlp { layers: Vec<Layer> },
    Warp(AnalyticWarp),
}

impl Generator {
    /// Affine decoder `z -> A z + b`; `A` must be injective.
    pub fn linear(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() == 0 {
            return Err(Error::MalformedGenerator("empty weight matrix".into()));
        }
        if b.len() != a.nrows() {
            return Err(Error::MalformedGenerator(format!(
                "bias has length {} but weight has {} rows",
                b.len(),
                a.nrows()
            )));
        }
        let sigma_min = if a.nrows() < a.ncols() {
            0.0
        } else {
            a.clone()
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        if !(sigma_min > INJECTIVITY_TOL) {
            return Err(Error::NotInjective { sigma_min });
        }
        Ok(Generator::Linear { a, b })
    }

    pub fn mlp(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MalformedGenerator("network has no layers".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.weight.nrows() == 0 || layer.weight.ncols() == 0 {
                return Err(Error::MalformedGenerator(format!("layer {idx} has an empty weight")));
            }
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::MalformedGenerator(format!(
                    "layer {idx}: bias has length {} but weight has {} rows",
                    layer.bias.len(),
                    layer.weight.nrows()
                )));
            }
            if idx > 0 {
                let fed = layers[idx - 1].weight.nrows();
                if layer.weight.ncols() != fed {
                    return Err(Error::ChainMismatch {
                        layer: idx,
                        expected: layer.weight.ncols(),
                        got: fed,
                    });
                }
            }
        }
        Ok(Generator::Mlp { layers })
    }

    pub fn identity(dim: usize) -> Self {
        Generator::Warp(AnalyticWarp::Identity { dim })
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Generator::Linear { a, .. } => a.ncols(),
            Generator::Mlp { layers } => layers[0].weight.ncols(),
            Generator::Warp(w) => w.dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Generator::Linear { a, .. } => a.nrows(),
            Generator::Mlp { layers } => layers[layers.len() - 1].weight.nrows(),
            Generator::Warp(w) => w.dim(),
        }
    }

    pub fn decode(&self, z: &[f64]) -> Result<DVector<f64>> {
        Error::check_dim(self.in_dim(), z.len())?;
        Ok(match self {
            Generator::Linear { a, b } => a * DVector::from_column_slice(z) + b,
            Generator::Mlp { layers } => {
                let mut h = DVector::from_column_slice(z);
                for layer in layers {
                    h = (&layer.weight * h + &layer.bias).map(|x| layer.activation.apply(x));
                }
                h
            }
            Generator::Warp(w) => w.decode(z),
        })
    }

    /// `N x D` derivative of the decoder at `z`.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim(self.in_dim(), z.len())?;
        Ok(match self {
            Generator::Linear { a, .. } => a.clone(),
            Generator::Mlp { layers } => {
                let mut h = DVector::from_column_slice(z);
                let mut jac = DMatrix::identity(z.len(), z.len());
                for layer in layers {
                    let pre = &layer.weight * &h + &layer.bias;
                    let mut step = layer.weight.clone();
                    for (i, p) in pre.iter().enumerate() {
                        step.row_mut(i).scale_mut(layer.activation.derivative(*p));
                    }
                    jac = step * jac;
                    h = pre.map(|x| layer.activation.apply(x));
                }
                jac
            }
            Generator::Warp(w) => w.jacobian(z),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GeneratorKind {
    Mlp,
    Linear,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default = "default_activation")]
    act: Activation,
}

fn default_activation() -> Activation {
    Activation::Identity
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    #[serde(rename = "type")]
    kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_dim: Option<usize>,
    layers: Vec<LayerRecord>,
}

fn layer_from_record(idx: usize, rec: LayerRecord) -> Result<Layer> {
    let weight = matrix_from_rows(&rec.w)
        .map_err(|_| Error::MalformedGenerator(format!("layer {idx}: ragged weight rows")))?;
    Ok(Layer::new(weight, DVector::from_vec(rec.b), rec.act))
}

impl Generator {
    /// Parses the JSON weight format.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: WeightFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedGenerator(e.to_string()))?;
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, rec)| layer_from_record(i, rec))
            .collect::<Result<Vec<_>>>()?;
        let generator = match file.kind {
            GeneratorKind::Mlp => Generator::mlp(layers)?,
            GeneratorKind::Linear => {
                let [layer]: [Layer; 1] = layers.try_into().map_err(|l: Vec<Layer>| {
                    Error::MalformedGenerator(format!("linear generator needs 1 layer, found {}", l.len()))
                })?;
                if layer.activation != Activation::Identity {
                    return Err(Error::MalformedGenerator(
                        "linear generator layer must use the identity activation".into(),
                    ));
                }
                Generator::linear(layer.weight, layer.bias)?
            }
        };
        for (declared, actual, what) in [
            (file.in_dim, generator.in_dim(), "in_dim"),
            (file.out_dim, generator.out_dim(), "out_dim"),
        ] {
            if let Some(declared) = declared {
                if declared != actual {
                    return Err(Error::MalformedGenerator(format!(
                        "declared {what} {declared} but layers give {actual}"
                    )));
                }
            }
        }
        Ok(generator)
    }

    /// Serializes to the JSON weight format. Analytic warps have no weight
    /// representation.
    pub fn to_json_string(&self) -> Result<String> {
        let (kind, layers) = match self {
            Generator::Linear { a, b } => (
                GeneratorKind::Linear,
                vec![LayerRecord {
                    w: matrix_to_rows(a),
                    b: b.iter().copied().collect(),
                    act: Activation::Identity,
                }],
            ),
            Generator::Mlp { layers } => (
                GeneratorKind::Mlp,
                layers
                    .iter()
                    .map(|l| LayerRecord {
                        w: matrix_to_rows(&l.weight),
                        b: l.bias.iter().copied().collect(),
                        act: l.activation,
                    })
                    .collect(),
            ),
            Generator::Warp(_) => {
                return Err(Error::InvalidParameter(
                    "analytic warps cannot be written as weight files".into(),
                ))
            }
        };
        Ok(serde_json::to_string_pretty(&WeightFile {
            kind,
            in_dim: Some(self.in_dim()),
            out_dim: Some(self.out_dim()),
            layers,
        })?)
    }
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<Generator> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Generator::from_json_str(&text)
}

pub fn save_generator(generator: &Generator, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, generator.to_json_string()?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
