use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use ri_interp::{
    compare, fmt_real, linear_init, optimize, project_to_endpoint_plane, InterpolationPath, PathComparison,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Files produced by a command, held in memory until the whole command has
/// succeeded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(format!("{name}: {e}")))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_header(prefix: &str, dim: usize) -> String {
    (0..dim).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",")
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_real).collect::<Vec<_>>().join(",")
}

/// `samples.csv`: one prior draw per row, columns `z0..z{D-1}`.
pub fn cmd_sample_prior(config: &RunConfig) -> Result<Artifacts> {
    let n = config.samples()?;
    let prior = config.prior()?;
    let draws = prior.sample(n, config.solver.seed)?;
    let mut csv = csv_header("z", prior.dim());
    csv.push('\n');
    for row in draws.row_iter() {
        csv.push_str(&csv_row(row.iter().copied()));
        csv.push('\n');
    }
    let mut out = Artifacts::default();
    out.add("samples.csv", csv);
    Ok(out)
}

/// Optimizes the path between the configured endpoints.
///
/// Writes `path.json`, `linear_path.json`, `trace.csv`, `report.json`
/// (linear and optimized reports side by side), one report CSV per path,
/// and `kde.json` when an estimator was fitted.
pub fn cmd_interpolate(config: &RunConfig) -> Result<Artifacts> {
    let prior = config.prior()?;
    let generator = config.generator(prior.dim())?;
    let (start, end) = config.endpoints(&prior)?;
    config.check_model(&prior)?;

    let solver = &config.solver;
    let (model, fitted) = config.model(&prior)?;
    let linear = linear_init(start.as_slice(), end.as_slice(), solver.k)?;
    let (optimized, trace) = optimize(&linear, &model, &generator, solver)?;
    let comparison = compare(&linear, &optimized, &model, &generator, solver.segment_norm_mode)?;

    let mut out = Artifacts::default();
    out.add_json("path.json", &optimized)?;
    out.add_json("linear_path.json", &linear)?;
    out.add("trace.csv", trace.to_csv());
    out.add_json("report.json", &comparison)?;
    add_report_csvs(&mut out, &comparison);
    if let Some(estimator) = fitted {
        out.add_json("kde.json", &estimator)?;
    }
    Ok(out)
}

fn add_report_csvs(out: &mut Artifacts, comparison: &PathComparison) {
    out.add("report_linear.csv", comparison.linear.to_csv());
    out.add("report_optimized.csv", comparison.optimized.to_csv());
}

/// Reads points written by `sample-prior` (or any CSV with a header row and
/// one point per row).
pub fn read_points(path: &Path) -> Result<Vec<DVector<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let coords = record
            .iter()
            .map(|field| field.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), i + 1)))?;
        points.push(DVector::from_vec(coords));
    }
    Ok(points)
}

/// `ri.csv`: raw and rescaled index per input point.
pub fn cmd_ri_eval(config: &RunConfig, points: &[DVector<f64>]) -> Result<Artifacts> {
    let prior = config.prior()?;
    for (i, p) in points.iter().enumerate() {
        if p.len() != prior.dim() {
            return Err(CliError::Config(format!(
                "point {i} has {} coordinates, the prior has {}",
                p.len(),
                prior.dim()
            )));
        }
    }
    config.check_model(&prior)?;
    let (model, _) = config.model(&prior)?;
    let mut csv = String::from("index,ri,ri_alpha\n");
    for (i, p) in points.iter().enumerate() {
        let ri = model.ri(p.as_slice())?;
        csv.push_str(&format!("{i},{}\n", csv_row([ri, model.rescale(ri)])));
    }
    let mut out = Artifacts::default();
    out.add("ri.csv", csv);
    Ok(out)
}

pub fn read_path(path: &Path) -> Result<InterpolationPath> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// `projection.csv`: endpoint-plane coordinates of every path point.
pub fn cmd_project(path: &InterpolationPath) -> Result<Artifacts> {
    let coords = project_to_endpoint_plane(path)?;
    let mut csv = String::from("index,proj_x,proj_y\n");
    for (i, (u, v)) in coords.into_iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", csv_row([u, v])));
    }
    let mut out = Artifacts::default();
    out.add("projection.csv", csv);
    Ok(out)
}

/// `report.json` and per-path report CSVs for two given paths.
pub fn cmd_compare(
    config: &RunConfig,
    linear: &InterpolationPath,
    optimized: &InterpolationPath,
) -> Result<Artifacts> {
    let prior = config.prior()?;
    let generator = config.generator(prior.dim())?;
    for path in [linear, optimized] {
        if path.dim() != prior.dim() {
            return Err(CliError::Config(format!(
                "path points have {} coordinates, the prior has {}",
                path.dim(),
                prior.dim()
            )));
        }
    }
    if linear.k() != optimized.k() {
        return Err(CliError::Config(format!(
            "paths have different segment counts ({} vs {})",
            linear.k(),
            optimized.k()
        )));
    }
    config.check_model(&prior)?;
    let (model, _) = config.model(&prior)?;
    let comparison = compare(linear, optimized, &model, &generator, config.solver.segment_norm_mode)?;
    let mut out = Artifacts::default();
    out.add_json("report.json", &comparison)?;
    add_report_csvs(&mut out, &comparison);
    Ok(out)
}
