//! Browser demo for `robust-mom`.
//!
//! Three operations are exported to JavaScript, each taking and returning
//! JSON (or flat arrays for the depth map):
//!
//! * [`simulate_cloud`]: a contaminated 2-D sample with every mean estimator
//!   and the block means it was computed from.
//! * [`depth_map`]: exact halfspace depth of each cell of a grid.
//! * [`concentration_curve`]: Monte Carlo error quantiles against the
//!   `8 R sqrt(K/N)` bound for a range of block counts.
//!
//! The plain Rust functions are usable natively; the `wasm-bindgen` wrappers
//! only exist on `wasm32`.

use serde::{Deserialize, Serialize};

use robust_mom::blocking::{block_means, partition};
use robust_mom::contamination::{
    contaminate, sample_clean, AdversaryStrategy, ContaminationModel, ContaminationSpec,
    DistributionSpec,
};
use robust_mom::depth::{depth_exact_2d, tukey_mom_from_means, TukeyOptions};
use robust_mom::harness::{
    run_campaign, BlockSpec, EstimatorName, Experiment, ExperimentConfig, PoolConfig,
};
use robust_mom::mean::{
    coordinatewise_median, empirical_mean, geometric_median, lm_mom_from_means, DescentOptions,
    GeoMedianOptions,
};
use robust_mom::model::make_direction_pool;
use robust_mom::{Dataset, Error, Result, RngStream, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Gaussian,
    StudentT,
}

fn distribution(shape: Shape, df: f64) -> DistributionSpec {
    match shape {
        Shape::Gaussian => DistributionSpec::standard_gaussian(2),
        Shape::StudentT => DistributionSpec::student_t(vec![0.0, 0.0], SymMatrix::identity(2), df),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudRequest {
    pub shape: Shape,
    #[serde(default = "default_df")]
    pub df: f64,
    pub n_samples: usize,
    pub n_blocks: usize,
    pub eps_corrupt: f64,
    pub magnitude: f64,
    #[serde(default = "default_strategy")]
    pub strategy: AdversaryStrategy,
    pub seed: u64,
}

fn default_df() -> f64 {
    3.0
}

fn default_strategy() -> AdversaryStrategy {
    AdversaryStrategy::FarPointMass
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPoint {
    pub name: String,
    pub point: [f64; 2],
    /// Distance to the true mean, the origin.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudResult {
    pub points: Vec<[f64; 2]>,
    pub outliers: Vec<usize>,
    pub block_means: Vec<[f64; 2]>,
    pub estimates: Vec<NamedPoint>,
    /// Depth of the Tukey median-of-means point among the block means.
    pub tukey_depth: usize,
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

pub fn simulate_cloud(req: &CloudRequest) -> Result<CloudResult> {
    let rng = RngStream::new(req.seed, 0);
    let clean = sample_clean(
        &distribution(req.shape, req.df),
        req.n_samples,
        &rng.fork(1),
    )?;
    let part = partition(req.n_samples, req.n_blocks, &rng.fork(3))?;
    let spec = ContaminationSpec {
        model: ContaminationModel::Adversarial,
        eps_corrupt: req.eps_corrupt,
        strategy: Some(req.strategy),
        magnitude: req.magnitude,
        outlier_distribution: None,
    };
    let sample = contaminate(&clean, &spec, Some(&part), &rng.fork(2))?;
    let data = &sample.data;
    let means = block_means(data, &part)?;
    let pool = make_direction_pool(2, 100, None, &rng.fork(4))?;

    let lm = lm_mom_from_means(&means, &pool, &DescentOptions::default())?;
    let tukey = tukey_mom_from_means(&means, &rng.fork(5), &TukeyOptions::default())?;
    let named = |name: &str, p: &[f64]| NamedPoint {
        name: name.to_owned(),
        point: pair(p),
        error: p[0].hypot(p[1]),
    };
    let estimates = vec![
        named("empirical_mean", &empirical_mean(data)),
        named("lm_mom", &lm.point),
        named("coordwise_mom", &coordinatewise_median(&means)),
        named(
            "geomedian_mom",
            &geometric_median(means.as_dataset(), &GeoMedianOptions::default())?,
        ),
        named("tukey_mom", &tukey.point),
    ];
    Ok(CloudResult {
        points: data.rows().map(pair).collect(),
        outliers: sample.outlier_indices,
        block_means: means.as_dataset().rows().map(pair).collect(),
        estimates,
        tukey_depth: tukey.depth,
    })
}

/// Depth of every grid cell center among `xy` (interleaved x, y), row-major
/// from the top-left corner.
pub fn depth_map(
    xy: &[f64],
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<Vec<u32>> {
    if !xy.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "coordinates must come in pairs".into(),
        ));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("grid must be non-empty".into()));
    }
    let points = Dataset::new(xy.len() / 2, 2, xy.to_vec())?;
    let dx = (x_range.1 - x_range.0) / nx as f64;
    let dy = (y_range.1 - y_range.0) / ny as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = y_range.1 - (j as f64 + 0.5) * dy;
        for i in 0..nx {
            let x = x_range.0 + (i as f64 + 0.5) * dx;
            out.push(depth_exact_2d(&points, &[x, y])?.depth as u32);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    pub shape: Shape,
    #[serde(default = "default_df")]
    pub df: f64,
    pub n_samples: usize,
    pub block_counts: Vec<usize>,
    pub n_trials: usize,
    #[serde(default)]
    pub eps_corrupt: f64,
    #[serde(default)]
    pub magnitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_blocks: usize,
    pub bound: f64,
    pub lm_mom_q90: f64,
    pub empirical_mean_q90: f64,
    pub lm_mom_failure: f64,
    pub failure_cap: f64,
}

pub fn concentration_curve(req: &CurveRequest) -> Result<Vec<CurvePoint>> {
    req.block_counts
        .iter()
        .map(|&k| {
            let config = ExperimentConfig {
                experiment: Experiment::Mean,
                distribution: distribution(req.shape, req.df),
                contamination: ContaminationSpec {
                    model: ContaminationModel::Adversarial,
                    eps_corrupt: req.eps_corrupt,
                    strategy: Some(AdversaryStrategy::FarPointMass),
                    magnitude: req.magnitude,
                    outlier_distribution: None,
                },
                n_samples: req.n_samples,
                n_blocks: BlockSpec::Fixed(k),
                dim: 2,
                pool: PoolConfig {
                    n_random: 60,
                    use_data_hint: false,
                },
                n_trials: req.n_trials,
                seed: req.seed,
                estimators: vec![EstimatorName::LmMom, EstimatorName::EmpiricalMean],
                pca_rank: 1,
                cov_center: robust_mom::covariance::CenterMode::MomMean,
                lemma7_alpha: 2.0,
                lemma7_radius: None,
                oracle_samples: 10_000,
                tukey: TukeyOptions::default(),
                record_timing: false,
            };
            let campaign = run_campaign(&config)?;
            let find = |name: &str| {
                campaign
                    .summary
                    .estimators
                    .iter()
                    .find(|e| e.estimator == name)
                    .expect("requested estimator")
            };
            let lm = find("lm_mom");
            Ok(CurvePoint {
                n_blocks: k,
                bound: lm.bound_value,
                lm_mom_q90: lm.error_quantiles.p90,
                empirical_mean_q90: find("empirical_mean").error_quantiles.p90,
                lm_mom_failure: lm.failure_fraction,
                failure_cap: lm.theoretical_failure_cap,
            })
        })
        .collect()
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    fn js_err(e: impl std::fmt::Display) -> JsError {
        JsError::new(&e.to_string())
    }

    /// `CloudRequest` JSON in, `CloudResult` JSON out.
    #[wasm_bindgen]
    pub fn simulate(request: &str) -> Result<String, JsError> {
        let req: super::CloudRequest = serde_json::from_str(request).map_err(js_err)?;
        let out = super::simulate_cloud(&req).map_err(js_err)?;
        serde_json::to_string(&out).map_err(js_err)
    }

    #[wasm_bindgen]
    #[allow(clippy::too_many_arguments)]
    pub fn depth_map(
        xy: &[f64],
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Vec<u32>, JsError> {
        super::depth_map(xy, (x_min, x_max), (y_min, y_max), nx, ny).map_err(js_err)
    }

    /// `CurveRequest` JSON in, list of `CurvePoint` JSON out.
    #[wasm_bindgen]
    pub fn concentration(request: &str) -> Result<String, JsError> {
        let req: super::CurveRequest = serde_json::from_str(request).map_err(js_err)?;
        let out = super::concentration_curve(&req).map_err(js_err)?;
        serde_json::to_string(&out).map_err(js_err)
    }
}
