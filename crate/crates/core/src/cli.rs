//! Command-line front end: `run`, `depth`, `estimate` and `bounds`.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 1 for
//! failures while computing.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::covariance::{cov_error_bound, cov_mom_estimate, pca_error_bound, CovOptions};
use crate::depth::{
    depth_1d, depth_exact_2d, depth_randomized, tukey_error_bound, tukey_mom, TukeyOptions,
};
use crate::error::{Error, Result};
use crate::harness::{
    emit_csv, emit_json, parse_dataset, run_campaign, EstimatorName, Experiment, ExperimentConfig,
};
use crate::mean::{
    coordinatewise_mom, empirical_mean, geomedian_mom, lm_mom_estimate, mean_error_bound,
    BoundInputs, DescentOptions,
};
use crate::model::{make_direction_pool, Dataset, RngStream};

#[derive(Parser, Debug)]
#[command(
    name = "robust-mom",
    version,
    about = "Median-of-means estimators and bound checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo campaign; writes summary.json and trials.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Halfspace depth of a point in a CSV point cloud.
    Depth {
        #[arg(long)]
        points: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        eta: String,
        /// Defaults to 1d or exact2d by dimension, random otherwise.
        #[arg(long, value_enum)]
        method: Option<DepthMethodArg>,
        /// Directions for the random method.
        #[arg(long, default_value_t = 1000)]
        dirs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the mean (or covariance with cov_mom) of a CSV dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random directions added to the axes.
        #[arg(long, default_value_t = 100)]
        pool: usize,
    },
    /// Evaluate an explicit-constant error bound.
    Bounds {
        #[arg(long)]
        experiment: String,
        /// R for mean-type bounds, σ for covariance and PCA.
        #[arg(long)]
        r: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: Option<usize>,
        /// Eigengap for the PCA bound.
        #[arg(long)]
        gap: Option<f64>,
        /// Lemma 7 alpha; `bounds --experiment lemma7` prints the radius.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DepthMethodArg {
    #[value(name = "exact2d")]
    Exact2d,
    Random,
    #[value(name = "1d")]
    OneD,
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out_dir,
            seed,
        } => run(&config, &out_dir, seed),
        Command::Depth {
            points,
            eta,
            method,
            dirs,
            seed,
        } => depth(&points, &eta, method, dirs, seed),
        Command::Estimate {
            data,
            estimator,
            blocks,
            seed,
            pool,
        } => estimate(&data, &estimator, blocks, seed, pool),
        Command::Bounds {
            experiment,
            r,
            k,
            n,
            dim,
            gap,
            alpha,
        } => {
            println!("{}", bounds(&experiment, r, k, n, dim, gap, alpha)?);
            Ok(())
        }
    }
}

fn run(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let campaign = run_campaign(&config)?;
    std::fs::create_dir_all(out_dir)?;
    emit_json(&campaign.summary, &out_dir.join("summary.json"))?;
    emit_csv(&campaign.records, &out_dir.join("trials.csv"))?;
    let s = &campaign.summary;
    println!(
        "{} experiment: N={} K={} d={} trials={} seed={}",
        s.experiment.name(),
        s.n_samples,
        s.n_blocks,
        s.dim,
        s.n_trials,
        s.seed
    );
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>9} {:>9}",
        "estimator", "median", "q95", "bound", "fail", "cap"
    );
    for e in &s.estimators {
        println!(
            "{:<16} {:>12.6} {:>12.6} {:>12.6} {:>9.4} {:>9.4}",
            e.estimator,
            e.error_quantiles.p50,
            e.error_quantiles.p95,
            e.bound_value,
            e.failure_fraction,
            e.theoretical_failure_cap
        );
    }
    Ok(())
}

fn read_data(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad coordinate `{t}` in --eta")))
        })
        .collect()
}

fn depth(
    points: &Path,
    eta: &str,
    method: Option<DepthMethodArg>,
    dirs: usize,
    seed: u64,
) -> Result<()> {
    let data = read_data(points)?;
    let eta = parse_point(eta)?;
    if eta.len() != data.dim() {
        return Err(Error::Config(format!(
            "--eta has {} coordinates but the points have {}",
            eta.len(),
            data.dim()
        )));
    }
    let method = method.unwrap_or(match data.dim() {
        1 => DepthMethodArg::OneD,
        2 => DepthMethodArg::Exact2d,
        _ => DepthMethodArg::Random,
    });
    let result = match method {
        DepthMethodArg::OneD => {
            if data.dim() != 1 {
                return Err(Error::Config("--method 1d needs one-column points".into()));
            }
            depth_1d(data.values(), eta[0])?
        }
        DepthMethodArg::Exact2d => {
            if data.dim() != 2 {
                return Err(Error::Config(
                    "--method exact2d needs two-column points".into(),
                ));
            }
            depth_exact_2d(&data, &eta)?
        }
        DepthMethodArg::Random => {
            if dirs == 0 {
                return Err(Error::Config("--dirs must be positive".into()));
            }
            depth_randomized(&data, &eta, dirs, &RngStream::new(seed, 0))?
        }
    };
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn estimate(path: &Path, estimator: &str, blocks: usize, seed: u64, n_random: usize) -> Result<()> {
    let data = read_data(path)?;
    let name: EstimatorName = estimator.parse()?;
    if blocks == 0 || blocks > data.n_samples() {
        return Err(Error::InvalidBlockCount {
            k: blocks,
            n: data.n_samples(),
        });
    }
    let rng = RngStream::new(seed, 0);
    let pool = || make_direction_pool(data.dim(), n_random, None, &rng.fork(4));
    let output = match name {
        EstimatorName::LmMom => {
            let est = lm_mom_estimate(&data, blocks, &pool()?, &DescentOptions::default(), &rng)?;
            json!({"estimator": name.name(), "n_blocks": blocks, "estimate": est.point, "certificate": est.achieved_eps})
        }
        EstimatorName::CoordwiseMom => {
            json!({"estimator": name.name(), "n_blocks": blocks, "estimate": coordinatewise_mom(&data, blocks, &rng)?})
        }
        EstimatorName::GeomedianMom => {
            json!({"estimator": name.name(), "n_blocks": blocks, "estimate": geomedian_mom(&data, blocks, &rng)?})
        }
        EstimatorName::TukeyMom => {
            let est = tukey_mom(&data, blocks, &rng, &TukeyOptions::default())?;
            json!({"estimator": name.name(), "n_blocks": blocks, "estimate": est.point, "depth": est.depth})
        }
        EstimatorName::EmpiricalMean => {
            json!({"estimator": name.name(), "estimate": empirical_mean(&data)})
        }
        EstimatorName::CovMom => {
            let est = cov_mom_estimate(&data, blocks, &pool()?, &CovOptions::default(), &rng)?;
            json!({"estimator": name.name(), "n_blocks": blocks, "estimate": est.matrix, "certificate": est.achieved_eps})
        }
        EstimatorName::EmpiricalCov => {
            return Err(Error::Config(
                "empirical_cov is only available inside campaigns".into(),
            ))
        }
    };
    println!("{}", serde_json::to_string(&output)?);
    Ok(())
}

fn bounds(
    experiment: &str,
    r: f64,
    k: usize,
    n: usize,
    dim: Option<usize>,
    gap: Option<f64>,
    alpha: f64,
) -> Result<f64> {
    let experiment: Experiment = experiment.parse()?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Config(format!(
            "--r must be a finite non-negative number, got {r}"
        )));
    }
    if k == 0 || n == 0 || k > n {
        return Err(Error::InvalidBlockCount { k, n });
    }
    let need_dim =
        || dim.ok_or_else(|| Error::Config("--dim is required for this experiment".into()));
    Ok(match experiment {
        Experiment::Mean => mean_error_bound(&BoundInputs {
            r_weak: r,
            n_blocks: k,
            n_samples: n,
            dim: dim.unwrap_or(1),
        }),
        Experiment::Tukey => tukey_error_bound(r, k, n, need_dim()?),
        Experiment::Covariance => cov_error_bound(r, k, n),
        Experiment::Pca => {
            let gap = gap.ok_or_else(|| Error::Config("--gap is required for pca".into()))?;
            if !(gap > 0.0) {
                return Err(Error::Config(format!("--gap must be positive, got {gap}")));
            }
            pca_error_bound(gap, r, k, n)
        }
        Experiment::Lemma7 => {
            if !(alpha > 1.0) {
                return Err(Error::Config(format!("--alpha must exceed 1, got {alpha}")));
            }
            r * (4.0 * alpha / (n / k) as f64).sqrt()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        assert_eq!(
            bounds("mean", 1.0, 100, 10_000, None, None, 2.0).unwrap(),
            0.8
        );
        assert_eq!(
            bounds("tukey", 1.0, 64, 2000, Some(2), None, 2.0).unwrap(),
            4.0 * (0.032f64).sqrt()
        );
        assert!(bounds("tukey", 1.0, 64, 2000, None, None, 2.0)
            .unwrap_err()
            .is_config());
        assert!(bounds("pca", 1.0, 50, 6000, None, None, 2.0)
            .unwrap_err()
            .is_config());
        assert!(bounds("nope", 1.0, 50, 6000, None, None, 2.0)
            .unwrap_err()
            .is_config());
        assert!(bounds("mean", 1.0, 0, 6000, None, None, 2.0)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(cli_main(["robust-mom", "bounds", "--bogus"]), 2);
        assert_eq!(cli_main(["robust-mom"]), 2);
        assert_eq!(
            cli_main(["robust-mom", "run", "--config", "/nonexistent/missing.json"]),
            2
        );
        assert_eq!(cli_main(["robust-mom", "--help"]), 0);
    }

    #[test]
    fn eta_parsing() {
        assert_eq!(parse_point("1, -2.5").unwrap(), vec![1.0, -2.5]);
        assert!(parse_point("1,x").is_err());
    }
}
