//! Realisticity-optimal interpolation.
//!
//! A path `x = x_0, x_1, ..., x_k = y` is scored by the discretized energy
//!
//! ```text
//! sum_{i=0}^{k-1} log^2((r(x_i) + r(x_{i+1})) / 2) * |e(x_{i+1}) - e(x_i)|^2
//! ```
//!
//! where `r` is the rescaled, floored realisticity index and `e` is either
//! the decoder (`SegmentNorm::Decoded`) or the identity
//! (`SegmentNorm::Latent`). The free midpoints are moved by gradient descent
//! starting from the straight segment. The curve index
//! `exp(sum log(mean r) * |G x_{i+1} - G x_i|)` and the pullback metric
//! `log^2 r(z) * dG(z)^T dG(z)` live here as well, since the energy is the
//! discrete energy of that metric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_real;
use crate::generator::Generator;
use crate::realisticity::{check_scaling, RealisticityModel, RiBackend, DEFAULT_FLOOR_EPS};

pub const DEFAULT_SEGMENTS: usize = 50;
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentNorm {
    /// Segment lengths measured between decoded points.
    #[default]
    Decoded,
    /// Segment lengths measured directly in latent space.
    Latent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Gradient descent with backtracking.
    #[default]
    PlainGd,
    /// Heavy-ball momentum; falls back to a backtracking step whenever the
    /// momentum step does not lower the energy.
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the infinity norm of the gradient drops below this.
    pub grad_tol: f64,
    pub segment_norm_mode: SegmentNorm,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    /// Forwarded to the realisticity model.
    pub alpha: f64,
    pub floor_eps: f64,
    /// Base seed for runs built from this config.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: DEFAULT_SEGMENTS,
            learning_rate: 0.1,
            max_iters: 2000,
            grad_tol: 1e-5,
            segment_norm_mode: SegmentNorm::Decoded,
            optimizer: OptimizerKind::PlainGd,
            momentum: 0.9,
            alpha: 1.0,
            floor_eps: DEFAULT_FLOOR_EPS,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must lie in [0, 1)".into()));
        }
        check_scaling(self.alpha, self.floor_eps)?;
        Ok(())
    }

    /// Realisticity model over `backend` with this config's scaling.
    pub fn model(&self, backend: RiBackend) -> Result<RealisticityModel> {
        RealisticityModel::with_scaling(backend, self.alpha, self.floor_eps)
    }
}

/// Endpoints plus `k - 1` free midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRecord", into = "PathRecord")]
pub struct InterpolationPath {
    start: DVector<f64>,
    end: DVector<f64>,
    midpoints: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    k: usize,
    points: Vec<Vec<f64>>,
}

impl InterpolationPath {
    /// `x_i = (1 - i/k) x + (i/k) y` for `i = 1..k-1`.
    pub fn linear(x: &[f64], y: &[f64], k: usize) -> Result<Self> {
        Error::check_dim(x.len(), y.len())?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if x.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let start = DVector::from_column_slice(x);
        let end = DVector::from_column_slice(y);
        let midpoints = (1..k)
            .map(|i| {
                let t = i as f64 / k as f64;
                start.scale(1.0 - t) + end.scale(t)
            })
            .collect();
        Ok(InterpolationPath {
            start,
            end,
            midpoints,
        })
    }

    /// Builds a path from all `k + 1` points, endpoints included.
    pub fn from_points(mut points: Vec<DVector<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter("a path needs at least two points".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        for p in &points {
            Error::check_dim(dim, p.len())?;
        }
        let end = points.pop().expect("at least two points");
        let start = points.remove(0);
        Ok(InterpolationPath {
            start,
            end,
            midpoints: points,
        })
    }

    pub fn k(&self) -> usize {
        self.midpoints.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.start
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.end
    }

    pub fn midpoints(&self) -> &[DVector<f64>] {
        &self.midpoints
    }

    /// Replaces the midpoints, keeping the endpoints.
    pub fn with_midpoints(&self, midpoints: Vec<DVector<f64>>) -> Result<Self> {
        if midpoints.len() != self.midpoints.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} midpoints, got {}",
                self.midpoints.len(),
                midpoints.len()
            )));
        }
        for m in &midpoints {
            Error::check_dim(self.dim(), m.len())?;
        }
        Ok(InterpolationPath {
            start: self.start.clone(),
            end: self.end.clone(),
            midpoints,
        })
    }

    /// All `k + 1` points in order.
    pub fn points(&self) -> impl Iterator<Item = &DVector<f64>> + '_ {
        std::iter::once(&self.start)
            .chain(self.midpoints.iter())
            .chain(std::iter::once(&self.end))
    }

    fn shifted(&self, direction: &DMatrix<f64>, scale: f64) -> Self {
        let midpoints = self
            .midpoints
            .iter()
            .enumerate()
            .map(|(i, m)| m + direction.row(i).transpose().scale(scale))
            .collect();
        InterpolationPath {
            start: self.start.clone(),
            end: self.end.clone(),
            midpoints,
        }
    }

    /// Largest distance from a midpoint to the straight segment `[x, y]`.
    pub fn max_deviation_from_segment(&self) -> f64 {
        let axis = &self.end - &self.start;
        let len_sq = axis.norm_squared();
        self.midpoints
            .iter()
            .map(|m| {
                let rel = m - &self.start;
                let t = if len_sq > 0.0 {
                    (rel.dot(&axis) / len_sq).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (rel - axis.scale(t)).norm()
            })
            .fold(0.0, f64::max)
    }
}

impl TryFrom<PathRecord> for InterpolationPath {
    type Error = Error;

    fn try_from(rec: PathRecord) -> Result<Self> {
        if rec.points.len() != rec.k + 1 {
            return Err(Error::InvalidParameter(format!(
                "path declares k = {} but holds {} points",
                rec.k,
                rec.points.len()
            )));
        }
        InterpolationPath::from_points(rec.points.into_iter().map(DVector::from_vec).collect())
    }
}

impl From<InterpolationPath> for PathRecord {
    fn from(path: InterpolationPath) -> Self {
        PathRecord {
            k: path.k(),
            points: path.points().map(|p| p.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub energy_per_iteration: Vec<f64>,
    pub grad_norm_per_iteration: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl OptimizationTrace {
    fn record(&mut self, energy: f64, grad_norm: f64) {
        self.energy_per_iteration.push(energy);
        self.grad_norm_per_iteration.push(grad_norm);
        self.iterations_run += 1;
    }

    /// `iter,energy,grad_norm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,energy,grad_norm\n");
        for (i, (e, g)) in self
            .energy_per_iteration
            .iter()
            .zip(&self.grad_norm_per_iteration)
            .enumerate()
        {
            out.push_str(&format!("{i},{},{}\n", fmt_real(*e), fmt_real(*g)));
        }
        out
    }
}

/// Model, decoder and norm mode bundled for repeated energy evaluation.
struct Objective<'a> {
    model: &'a RealisticityModel,
    generator: &'a Generator,
    mode: SegmentNorm,
}

/// Per-point quantities the energy needs: rescaled index and the point in
/// the space where segments are measured.
struct Node {
    ri: f64,
    embedded: DVector<f64>,
}

impl<'a> Objective<'a> {
    fn new(
        path: &InterpolationPath,
        model: &'a RealisticityModel,
        generator: &'a Generator,
        mode: SegmentNorm,
    ) -> Result<Self> {
        check_dims(path.dim(), model, generator)?;
        Ok(Objective {
            model,
            generator,
            mode,
        })
    }

    fn node(&self, z: &DVector<f64>) -> Result<Node> {
        let embedded = match self.mode {
            SegmentNorm::Decoded => self.generator.decode(z.as_slice())?,
            SegmentNorm::Latent => z.clone(),
        };
        Ok(Node {
            ri: self.model.ri_alpha(z.as_slice())?,
            embedded,
        })
    }

    fn nodes(&self, path: &InterpolationPath) -> Result<Vec<Node>> {
        path.points().map(|p| self.node(p)).collect()
    }

    fn segment(a: &Node, b: &Node) -> f64 {
        let w = ((a.ri + b.ri) / 2.0).ln();
        w * w * (&b.embedded - &a.embedded).norm_squared()
    }

    fn energy_of(nodes: &[Node]) -> f64 {
        nodes.windows(2).map(|w| Self::segment(&w[0], &w[1])).sum()
    }

    fn energy(&self, path: &InterpolationPath) -> Result<f64> {
        Ok(Self::energy_of(&self.nodes(path)?))
    }

    /// Central differences; only the two segments adjacent to a perturbed
    /// midpoint change, so the difference is taken over those alone.
    fn gradient(&self, path: &InterpolationPath, nodes: &[Node]) -> Result<DMatrix<f64>> {
        let dim = path.dim();
        let mut grad = DMatrix::zeros(path.midpoints.len(), dim);
        for (i, mid) in path.midpoints.iter().enumerate() {
            let (prev, next) = (&nodes[i], &nodes[i + 2]);
            let h = 1e-4 * (1.0 + mid.norm());
            let mut probe = mid.clone();
            for j in 0..dim {
                probe[j] = mid[j] + h;
                let plus = self.node(&probe)?;
                probe[j] = mid[j] - h;
                let minus = self.node(&probe)?;
                probe[j] = mid[j];
                let local_plus = Self::segment(prev, &plus) + Self::segment(&plus, next);
                let local_minus = Self::segment(prev, &minus) + Self::segment(&minus, next);
                grad[(i, j)] = (local_plus - local_minus) / (2.0 * h);
            }
        }
        Ok(grad)
    }
}

fn check_dims(dim: usize, model: &RealisticityModel, generator: &Generator) -> Result<()> {
    if let Some(d) = model.dim() {
        Error::check_dim(d, dim)?;
    }
    Error::check_dim(generator.in_dim(), dim)
}

pub fn linear_init(x: &[f64], y: &[f64], k: usize) -> Result<InterpolationPath> {
    InterpolationPath::linear(x, y, k)
}

/// The discretized energy, in its `(2/k) E` scaling.
pub fn path_energy(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
    mode: SegmentNorm,
) -> Result<f64> {
    Objective::new(path, model, generator, mode)?.energy(path)
}

/// Gradient of [`path_energy`] with respect to the midpoints, one row per
/// midpoint. Step per midpoint `x_i` is `1e-4 (1 + |x_i|)`.
pub fn energy_gradient(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
    mode: SegmentNorm,
) -> Result<DMatrix<f64>> {
    let objective = Objective::new(path, model, generator, mode)?;
    let nodes = objective.nodes(path)?;
    objective.gradient(path, &nodes)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Minimizes the energy over the midpoints of `path`. Only steps that lower
/// the energy are accepted, so the returned path is the best iterate.
pub fn optimize(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
    config: &SolverConfig,
) -> Result<(InterpolationPath, OptimizationTrace)> {
    config.validate()?;
    let objective = Objective::new(path, model, generator, config.segment_norm_mode)?;
    let mut trace = OptimizationTrace::default();
    let mut current = path.clone();
    let mut nodes = objective.nodes(&current)?;
    let mut energy = Objective::energy_of(&nodes);
    let mut lr = config.learning_rate;
    let mut velocity = DMatrix::zeros(current.midpoints.len(), current.dim());

    for _ in 0..config.max_iters {
        let grad = objective.gradient(&current, &nodes)?;
        let grad_norm = inf_norm(&grad);
        trace.record(energy, grad_norm);
        if !energy.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFiniteEnergy { trace });
        }
        if grad_norm < config.grad_tol {
            trace.converged = true;
            break;
        }

        if config.optimizer == OptimizerKind::Momentum {
            velocity = velocity.scale(config.momentum) - grad.scale(lr);
            let candidate = current.shifted(&velocity, 1.0);
            let cand_nodes = objective.nodes(&candidate)?;
            let cand_energy = Objective::energy_of(&cand_nodes);
            if cand_energy < energy {
                current = candidate;
                nodes = cand_nodes;
                energy = cand_energy;
                continue;
            }
            velocity.fill(0.0);
        }

        let mut step = lr;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = current.shifted(&grad, -step);
            let cand_nodes = objective.nodes(&candidate)?;
            let cand_energy = Objective::energy_of(&cand_nodes);
            if cand_energy < energy {
                current = candidate;
                nodes = cand_nodes;
                energy = cand_energy;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            // no descent within the halving budget: numerically stationary
            break;
        }
        // let the next trial step grow back after a successful one
        lr = step * 1.5;
    }
    Ok((current, trace))
}

/// `exp(sum_i log((r_i + r_{i+1}) / 2) * |G x_{i+1} - G x_i|)` with the
/// model's rescaled, floored index.
pub fn curve_ri(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
) -> Result<f64> {
    Ok((-curve_neg_log_ri(path, model, generator)?).exp())
}

/// `-log` of [`curve_ri`], kept separate because it is the quantity that
/// behaves like a length.
pub fn curve_neg_log_ri(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
) -> Result<f64> {
    let objective = Objective::new(path, model, generator, SegmentNorm::Decoded)?;
    let nodes = objective.nodes(path)?;
    Ok(nodes
        .windows(2)
        .map(|w| {
            let mean = (w[0].ri + w[1].ri) / 2.0;
            -mean.ln() * (&w[1].embedded - &w[0].embedded).norm()
        })
        .sum())
}

/// Pullback metric `log^2 r(z) * dG(z)^T dG(z)`.
pub fn riemann_metric(
    z: &[f64],
    model: &RealisticityModel,
    generator: &Generator,
) -> Result<DMatrix<f64>> {
    check_dims(z.len(), model, generator)?;
    let log_ri = model.ri_alpha(z)?.ln();
    let jac = generator.jacobian(z)?;
    let gram = jac.transpose() * &jac;
    // symmetrize against rounding in the product
    Ok((&gram + gram.transpose()).scale(0.5 * log_ri * log_ri))
}

/// Length of the polyline under [`riemann_metric`], each segment measured
/// with the metric at its midpoint.
pub fn riemannian_length(
    path: &InterpolationPath,
    model: &RealisticityModel,
    generator: &Generator,
) -> Result<f64> {
    let points: Vec<&DVector<f64>> = path.points().collect();
    let mut total = 0.0;
    for w in points.windows(2) {
        let delta = w[1] - w[0];
        let mid = (w[0] + w[1]).scale(0.5);
        let metric = riemann_metric(mid.as_slice(), model, generator)?;
        total += delta.dot(&(&metric * &delta)).max(0.0).sqrt();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realisticity::RiBackend;
    use std::f64::consts::E;

    fn constant(c: f64) -> RealisticityModel {
        RealisticityModel::new(RiBackend::Constant(c)).unwrap()
    }

    #[test]
    fn linear_init_examples() {
        let p = linear_init(&[0.0, 0.0], &[4.0, 0.0], 4).unwrap();
        let mids: Vec<Vec<f64>> = p.midpoints().iter().map(|m| m.iter().copied().collect()).collect();
        assert_eq!(mids, vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);

        let same = linear_init(&[1.5, -2.0], &[1.5, -2.0], 6).unwrap();
        assert!(same.midpoints().iter().all(|m| m.as_slice() == [1.5, -2.0]));

        assert!(linear_init(&[0.0], &[1.0], 1).unwrap().midpoints().is_empty());
        assert!(linear_init(&[0.0], &[1.0, 2.0], 3).is_err());
        assert!(linear_init(&[0.0], &[1.0], 0).is_err());
    }

    #[test]
    fn energy_with_constant_index() {
        let g = Generator::identity(2);
        let m = constant((-1.0f64).exp());
        for k in [1, 2, 5, 50] {
            let p = linear_init(&[0.0, 0.0], &[0.0, 2.0], k).unwrap();
            let e = path_energy(&p, &m, &g, SegmentNorm::Decoded).unwrap();
            assert!((e - 4.0 / k as f64).abs() < 1e-12, "k = {k}: {e}");
        }
        let p = linear_init(&[0.0, 0.0], &[3.0, 1.0], 7).unwrap();
        assert_eq!(path_energy(&p, &constant(1.0), &g, SegmentNorm::Decoded).unwrap(), 0.0);
    }

    #[test]
    fn straight_path_is_stationary() {
        let g = Generator::identity(3);
        let m = constant(0.3);
        let p = linear_init(&[0.0, 1.0, 2.0], &[3.0, -1.0, 0.5], 6).unwrap();
        let grad = energy_gradient(&p, &m, &g, SegmentNorm::Decoded).unwrap();
        assert!(inf_norm(&grad) < 1e-10, "{grad}");

        let single = linear_init(&[0.0], &[1.0], 1).unwrap();
        let grad = energy_gradient(&single, &m, &Generator::identity(1), SegmentNorm::Latent).unwrap();
        assert_eq!(grad.nrows(), 0);
    }

    #[test]
    fn degenerate_endpoints_return_immediately() {
        let g = Generator::identity(2);
        let m = RealisticityModel::new(RiBackend::GaussianExact { dim: 2 }).unwrap();
        let p = linear_init(&[1.0, 1.0], &[1.0, 1.0], 8).unwrap();
        let (out, trace) = optimize(&p, &m, &g, &SolverConfig::default()).unwrap();
        assert_eq!(out, p);
        assert!(trace.converged);
        assert_eq!(trace.iterations_run, 1);
        assert_eq!(trace.energy_per_iteration, vec![0.0]);
    }

    #[test]
    fn curve_ri_examples() {
        let g = Generator::identity(2);
        let p = linear_init(&[0.0, 0.0], &[3.0, 4.0], 9).unwrap();
        assert_eq!(curve_ri(&p, &constant(1.0), &g).unwrap(), 1.0);
        let c: f64 = 0.8;
        assert!((curve_ri(&p, &constant(c), &g).unwrap() - c.powf(5.0)).abs() < 1e-12);
        let zero = linear_init(&[2.0, 2.0], &[2.0, 2.0], 4).unwrap();
        assert_eq!(curve_ri(&zero, &constant(0.1), &g).unwrap(), 1.0);
    }

    #[test]
    fn metric_examples() {
        let g = Generator::identity(2);
        assert_eq!(riemann_metric(&[0.3, 0.1], &constant(1.0), &g).unwrap(), DMatrix::zeros(2, 2));

        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let lin = Generator::linear(a.clone(), DVector::zeros(3)).unwrap();
        let metric = riemann_metric(&[0.3, 0.1], &constant(1.0 / E), &lin).unwrap();
        assert!((metric - a.transpose() * &a).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        let g = Generator::identity(3);
        let m = RealisticityModel::new(RiBackend::GaussianExact { dim: 2 }).unwrap();
        let p = linear_init(&[0.0, 0.0], &[1.0, 1.0], 3).unwrap();
        assert!(path_energy(&p, &m, &g, SegmentNorm::Decoded).is_err());
        assert!(riemann_metric(&[0.0, 0.0], &m, &g).is_err());
    }

    #[test]
    fn path_json_includes_endpoints() {
        let p = linear_init(&[0.0, 1.0], &[2.0, 3.0], 2).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"k":2,"points":[[0.0,1.0],[1.0,2.0],[2.0,3.0]]}"#);
        assert_eq!(serde_json::from_str::<InterpolationPath>(&text).unwrap(), p);
        assert!(serde_json::from_str::<InterpolationPath>(r#"{"k":3,"points":[[0],[1]]}"#).is_err());
        assert!(serde_json::from_str::<InterpolationPath>(r#"{"k":1,"points":[[0],[1,2]]}"#).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let mut t = OptimizationTrace::default();
        t.record(2.0, 0.5);
        t.record(1.0, 0.25);
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,energy,grad_norm");
        assert_eq!(lines[1], "0,2.0000000000000000e0,5.0000000000000000e-1");
        assert_eq!(lines.len(), 3);
    }
}
