use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ri_interp::SegmentNorm;
use ri_interp_cli::commands::{read_path, read_points};
use ri_interp_cli::{
    cmd_compare, cmd_interpolate, cmd_project, cmd_ri_eval, cmd_sample_prior, Artifacts, Overrides, Result,
    RunConfig,
};

/// Realisticity index evaluation and realisticity-optimal latent interpolation.
///
/// Settings are taken from command-line flags first, then the JSON file
/// given by --config, then built-in defaults.
#[derive(Parser)]
#[command(name = "ri-interp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (default: ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base seed for sampling and estimator fitting.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Number of path segments.
    #[arg(long, global = true, value_name = "N")]
    k: Option<usize>,

    /// Realisticity rescaling factor in (0, 1].
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,

    /// Where segment lengths are measured.
    #[arg(long, global = true, value_enum)]
    norm_mode: Option<NormMode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormMode {
    Decoded,
    Latent,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from the prior into samples.csv.
    SamplePrior {
        /// Number of samples (default 1000).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Optimize the path between two endpoints.
    Interpolate,
    /// Evaluate the realisticity index at points from a CSV file.
    RiEval {
        #[arg(long, value_name = "CSV")]
        points: PathBuf,
    },
    /// Project a path onto the plane spanned by its endpoints.
    Project {
        #[arg(long, value_name = "JSON")]
        path: PathBuf,
    },
    /// Report on two paths between the same endpoints.
    Compare {
        #[arg(long, value_name = "JSON")]
        linear: PathBuf,
        #[arg(long, value_name = "JSON")]
        optimized: PathBuf,
    },
}

fn load_config(cli: &Cli, samples: Option<usize>) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        k: cli.k,
        alpha: cli.alpha,
        norm_mode: cli.norm_mode.map(|m| match m {
            NormMode::Decoded => SegmentNorm::Decoded,
            NormMode::Latent => SegmentNorm::Latent,
        }),
        samples,
    });
    Ok(config)
}

fn run(cli: &Cli) -> Result<(Artifacts, PathBuf)> {
    let samples = match cli.command {
        Command::SamplePrior { n } => n,
        _ => None,
    };
    let config = load_config(cli, samples)?;
    let artifacts = match &cli.command {
        Command::SamplePrior { .. } => cmd_sample_prior(&config)?,
        Command::Interpolate => cmd_interpolate(&config)?,
        Command::RiEval { points } => cmd_ri_eval(&config, &read_points(points)?)?,
        Command::Project { path } => cmd_project(&read_path(path)?)?,
        Command::Compare { linear, optimized } => {
            cmd_compare(&config, &read_path(linear)?, &read_path(optimized)?)?
        }
    };
    Ok((artifacts, config.out_dir()))
}

fn report(written: &[PathBuf], dir: &Path) {
    eprintln!("wrote {} file(s) to {}", written.len(), dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(artifacts, dir)| {
        let written = artifacts.write(&dir)?;
        report(&written, &dir);
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ri-interp: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
