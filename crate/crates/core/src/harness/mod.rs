//! Seeded Monte Carlo campaigns that compare estimators with their
//! explicit-constant error bounds.
//!
//! Trial `t` draws everything from `RngStream::new(seed, t)` and its forks, so
//! a campaign is reproducible bit for bit regardless of thread count.

mod config;
mod report;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{BlockSpec, EstimatorName, Experiment, ExperimentConfig, PoolConfig};
pub use report::{
    emit_csv, emit_json, format_csv, parse_csv, parse_dataset, read_summary, CSV_HEADER,
};

use crate::blocking::{block_means, partition};
use crate::contamination::{contaminate, DistributionKind, DistributionSpec};
use crate::covariance::{
    cov_mom_estimate, sigma_weak_oracle, span_projector, CenterMode, CovOptions,
};
use crate::depth::tukey_mom;
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, sym_eigendecomposition};
use crate::mean::{
    coordinatewise_mom, empirical_mean, geomedian_mom, lm_mom_estimate, DescentOptions,
};
use crate::model::{distance, dot_unchecked, make_direction_pool, Dataset, RngStream, SymMatrix};

const SAMPLE_TAG: u64 = 1;
const CONTAMINATION_TAG: u64 = 2;
const ESTIMATE_TAG: u64 = 3;
const POOL_TAG: u64 = 4;
/// Stream id reserved for the one-off ground-truth oracles.
const ORACLE_STREAM: u64 = u64::MAX;

/// One estimator on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub estimator: String,
    /// Euclidean error for mean-type experiments, operator norm for
    /// covariance and PCA, worst bad-block fraction for `lemma7`.
    pub error: f64,
    pub bound: f64,
    /// `error <= bound`.
    pub within_bound: bool,
    /// Achieved objective, Tukey depth, or fewest good blocks, when defined.
    pub certificate: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Quantiles {
    /// Lower empirical quantiles: the `ceil(q n)`-th order statistic.
    pub fn of(values: &[f64]) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let rank = ((p * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            sorted[rank.min(sorted.len()) - 1]
        };
        Some(Quantiles {
            p50: q(0.5),
            p90: q(0.9),
            p95: q(0.95),
            p99: q(0.99),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub n_trials: usize,
    pub error_quantiles: Quantiles,
    /// Fraction of trials with `within_bound == false`.
    pub failure_fraction: f64,
    pub theoretical_failure_cap: f64,
    pub bound_value: f64,
    pub min_certificate: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSource {
    Analytic,
    Oracle,
}

/// Quantities computed once per campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `R` for mean-type experiments, `σ` for covariance and PCA.
    pub scale: f64,
    pub scale_source: ScaleSource,
    /// Eigengap `λ_k - λ_{k+1}` of the target matrix (PCA only).
    pub gap: Option<f64>,
    /// `gap >= 16 σ sqrt(K/N)` (PCA only).
    pub gap_condition_met: Option<bool>,
    /// Threshold `r` of the block events (lemma7 only).
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub experiment: Experiment,
    pub n_samples: usize,
    pub n_blocks: usize,
    pub block_size: usize,
    pub dim: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub library_version: String,
    pub truth: GroundTruth,
    pub estimators: Vec<EstimatorSummary>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub summary: CampaignSummary,
    /// Ordered by trial id, then by estimator.
    pub records: Vec<TrialRecord>,
}

/// Everything a trial needs that does not depend on the trial's draws.
struct Plan {
    n_blocks: usize,
    estimators: Vec<EstimatorName>,
    truth: GroundTruth,
    bound: f64,
    cap: f64,
    mean: Vec<f64>,
    /// Covariance or second moment, whichever the covariance estimators target.
    target_matrix: Option<SymMatrix>,
    /// Top-k eigenprojector of `target_matrix` (PCA only).
    target_projector: Option<SymMatrix>,
}

pub fn run_campaign(config: &ExperimentConfig) -> Result<Campaign> {
    config.validate()?;
    let plan = plan(config)?;
    let trials = run_trials(config.n_trials, |t| run_trial(config, &plan, t))?;
    let records: Vec<TrialRecord> = trials.into_iter().flatten().collect();
    let summary = summarize(config, &plan, &records);
    Ok(Campaign { summary, records })
}

fn plan(config: &ExperimentConfig) -> Result<Plan> {
    let n = config.n_samples;
    let d = config.dim;
    let k = config.resolve_blocks()?;
    let dist = &config.distribution;
    let covariance = dist
        .covariance()
        .ok_or_else(|| Error::Config("distribution has no finite covariance".into()))?;
    let lambda_max =
        |m: &SymMatrix| -> Result<f64> { Ok(sym_eigendecomposition(m)?.eigvals[0].max(0.0)) };
    let ratio = (k as f64 / n as f64).sqrt();
    let mut truth = GroundTruth {
        scale: 0.0,
        scale_source: ScaleSource::Analytic,
        gap: None,
        gap_condition_met: None,
        radius: None,
    };
    let mut target_matrix = None;
    let mut target_projector = None;
    let (bound, cap) = match config.experiment {
        Experiment::Mean | Experiment::Tukey | Experiment::Lemma7 => {
            // sup_v E<Y - μ, v>² is the top eigenvalue of the covariance
            truth.scale = lambda_max(&covariance)?.sqrt();
            match config.experiment {
                Experiment::Mean => (8.0 * truth.scale * ratio, (-(k as f64) / 128.0).exp()),
                Experiment::Tukey => (
                    (8.0 * d as f64).sqrt() * truth.scale * ratio,
                    (-(k as f64) / (32.0 * (d * d) as f64)).exp(),
                ),
                _ => {
                    let alpha = config.lemma7_alpha;
                    let m = (n / k) as f64;
                    let r = config
                        .lemma7_radius
                        .unwrap_or(truth.scale * (4.0 * alpha / m).sqrt());
                    truth.radius = Some(r);
                    (1.0 / alpha, (-(k as f64) / (8.0 * alpha * alpha)).exp())
                }
            }
        }
        Experiment::Covariance | Experiment::Pca => {
            let centered = config.cov_center == CenterMode::MomMean;
            let target = if centered {
                covariance
            } else {
                dist.second_moment().expect("finite covariance")
            };
            let (sigma, source) = sigma_for(config, &target, centered)?;
            truth.scale = sigma;
            truth.scale_source = source;
            let cap = (-(k as f64) / 128.0).exp();
            let bound = if config.experiment == Experiment::Pca {
                let r = config.pca_rank;
                let eig = sym_eigendecomposition(&target)?;
                let gap = eig.eigvals[r - 1] - eig.eigvals[r];
                if !(gap > 0.0) {
                    return Err(Error::Config(format!(
                        "target spectrum has no gap after the top {r} eigenvalues"
                    )));
                }
                truth.gap = Some(gap);
                truth.gap_condition_met = Some(gap >= 16.0 * sigma * ratio);
                target_projector = Some(span_projector(&eig.eigvecs[..r], d));
                8.0 / gap * sigma * ratio
            } else {
                8.0 * sigma * ratio
            };
            target_matrix = Some(target);
            (bound, cap)
        }
    };
    Ok(Plan {
        n_blocks: k,
        estimators: config.resolved_estimators(),
        truth,
        bound,
        cap,
        mean: dist.mean.clone(),
        target_matrix,
        target_projector,
    })
}

/// `σ` from the Gaussian fourth-moment identity when it applies, otherwise
/// from the Monte Carlo oracle.
fn sigma_for(
    config: &ExperimentConfig,
    target: &SymMatrix,
    centered: bool,
) -> Result<(f64, ScaleSource)> {
    let dist = &config.distribution;
    let zero_mean = dist.mean.iter().all(|&m| m == 0.0);
    match &dist.kind {
        DistributionKind::PointMass => return Ok((0.0, ScaleSource::Analytic)),
        DistributionKind::Gaussian { scale } if centered || zero_mean => {
            let top = sym_eigendecomposition(scale)?.eigvals[0].max(0.0);
            return Ok((2f64.sqrt() * top, ScaleSource::Analytic));
        }
        _ => {}
    }
    let rng = RngStream::new(config.seed, ORACLE_STREAM);
    let pool = make_direction_pool(
        config.dim,
        config.pool.n_random.max(200),
        None,
        &rng.fork(POOL_TAG),
    )?;
    let sampler: DistributionSpec = if centered {
        dist.centered()
    } else {
        dist.clone()
    };
    let sigma = sigma_weak_oracle(
        &sampler,
        target,
        &pool,
        config.oracle_samples,
        &rng.fork(SAMPLE_TAG),
    )?;
    Ok((sigma, ScaleSource::Oracle))
}

fn thread_count() -> usize {
    std::env::var("ROBUST_MOM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

#[cfg(feature = "parallel")]
fn run_trials<T, F>(n_trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| (0..n_trials as u64).into_par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_trials<T, F>(n_trials: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T>,
{
    let _ = thread_count();
    (0..n_trials as u64).map(f).collect()
}

fn run_trial(config: &ExperimentConfig, plan: &Plan, trial_id: u64) -> Result<Vec<TrialRecord>> {
    let stream = RngStream::new(config.seed, trial_id);
    let n = config.n_samples;
    let k = plan.n_blocks;
    let estimate_rng = stream.fork(ESTIMATE_TAG);
    let clean =
        crate::contamination::sample_clean(&config.distribution, n, &stream.fork(SAMPLE_TAG))?;
    // every MOM estimator re-derives this partition from `estimate_rng`, so
    // block-targeted adversaries attack the blocks actually used
    let part = partition(n, k, &estimate_rng)?;
    let data = contaminate(
        &clean,
        &config.contamination,
        Some(&part),
        &stream.fork(CONTAMINATION_TAG),
    )?
    .data;
    let pool = make_direction_pool(
        config.dim,
        config.pool.n_random,
        config.pool.use_data_hint.then_some(&data),
        &stream.fork(POOL_TAG),
    )?;

    let record =
        |estimator: &str, error: f64, certificate: Option<f64>, started: Option<Instant>| {
            TrialRecord {
                trial_id,
                estimator: estimator.to_owned(),
                error,
                bound: plan.bound,
                within_bound: error <= plan.bound,
                certificate,
                wall_time_ms: started.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3),
            }
        };
    let clock = || config.record_timing.then(Instant::now);

    if config.experiment == Experiment::Lemma7 {
        let started = clock();
        let means = block_means(&data, &part)?;
        let r = plan.truth.radius.expect("lemma7 radius");
        let mut worst_bad = 0usize;
        let mut fewest_good = k;
        for v in pool.iter() {
            let offset = dot_unchecked(&plan.mean, v);
            let bad = means
                .project(v)
                .iter()
                .filter(|p| (*p - offset).abs() > r)
                .count();
            worst_bad = worst_bad.max(bad);
            fewest_good = fewest_good.min(k - bad);
        }
        let error = worst_bad as f64 / k as f64;
        return Ok(vec![record(
            "lemma7",
            error,
            Some(fewest_good as f64),
            started,
        )]);
    }

    let mut out = Vec::with_capacity(plan.estimators.len());
    for &e in &plan.estimators {
        let started = clock();
        let (error, certificate) = match e {
            EstimatorName::LmMom => {
                let est =
                    lm_mom_estimate(&data, k, &pool, &DescentOptions::default(), &estimate_rng)?;
                (est.point.distance(&plan.mean), Some(est.achieved_eps))
            }
            EstimatorName::CoordwiseMom => (
                coordinatewise_mom(&data, k, &estimate_rng)?.distance(&plan.mean),
                None,
            ),
            EstimatorName::GeomedianMom => (
                geomedian_mom(&data, k, &estimate_rng)?.distance(&plan.mean),
                None,
            ),
            EstimatorName::TukeyMom => {
                let est = tukey_mom(&data, k, &estimate_rng, &config.tukey)?;
                (est.point.distance(&plan.mean), Some(est.depth as f64))
            }
            EstimatorName::EmpiricalMean => (distance(&empirical_mean(&data), &plan.mean), None),
            EstimatorName::CovMom => {
                let opts = CovOptions {
                    center: config.cov_center,
                    ..CovOptions::default()
                };
                let est = cov_mom_estimate(&data, k, &pool, &opts, &estimate_rng)?;
                let error = match &plan.target_projector {
                    Some(truth) => {
                        let eig = sym_eigendecomposition(&est.matrix)?;
                        let p = span_projector(&eig.eigvecs[..config.pca_rank], config.dim);
                        operator_norm(&p.sub(truth)?)?
                    }
                    None => operator_norm(
                        &est.matrix
                            .sub(plan.target_matrix.as_ref().expect("target"))?,
                    )?,
                };
                (error, Some(est.achieved_eps))
            }
            EstimatorName::EmpiricalCov => {
                let est = empirical_second_moment(&data, config.cov_center == CenterMode::MomMean);
                let target = plan.target_matrix.as_ref().expect("target");
                (operator_norm(&est.sub(target)?)?, None)
            }
        };
        out.push(record(e.name(), error, certificate, started));
    }
    Ok(out)
}

/// Sample covariance (1/N normalization) or raw second moment.
fn empirical_second_moment(data: &Dataset, centered: bool) -> SymMatrix {
    let d = data.dim();
    let n = data.n_samples() as f64;
    let mean = if centered {
        empirical_mean(data).into_inner()
    } else {
        vec![0.0; d]
    };
    let mut acc = SymMatrix::zeros(d);
    let mut row = vec![0.0; d];
    for x in data.rows() {
        for ((r, a), m) in row.iter_mut().zip(x).zip(&mean) {
            *r = a - m;
        }
        acc.add_outer(1.0 / n, &row);
    }
    acc.symmetrize();
    acc
}

fn summarize(config: &ExperimentConfig, plan: &Plan, records: &[TrialRecord]) -> CampaignSummary {
    let mut names: Vec<&str> = plan.estimators.iter().map(|e| e.name()).collect();
    if config.experiment == Experiment::Lemma7 {
        names = vec!["lemma7"];
    }
    let estimators = names
        .into_iter()
        .map(|name| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == name).collect();
            let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
            let failures = rows.iter().filter(|r| !r.within_bound).count();
            EstimatorSummary {
                estimator: name.to_owned(),
                n_trials: rows.len(),
                error_quantiles: Quantiles::of(&errors).expect("at least one trial"),
                failure_fraction: failures as f64 / rows.len() as f64,
                theoretical_failure_cap: plan.cap,
                bound_value: plan.bound,
                min_certificate: rows
                    .iter()
                    .filter_map(|r| r.certificate)
                    .min_by(f64::total_cmp),
            }
        })
        .collect();
    CampaignSummary {
        experiment: config.experiment,
        n_samples: config.n_samples,
        n_blocks: plan.n_blocks,
        block_size: config.n_samples / plan.n_blocks,
        dim: config.dim,
        n_trials: config.n_trials,
        seed: config.seed,
        library_version: env!("CARGO_PKG_VERSION").to_owned(),
        truth: plan.truth.clone(),
        estimators,
        config: config.clone(),
    }
}
