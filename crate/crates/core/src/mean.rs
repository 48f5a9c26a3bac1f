//! Median-of-means estimators of a mean vector.
//!
//! The main estimator looks for a point `y` whose projection on every pool
//! direction `v` is close to the median of the projected block means:
//!
//! ```text
//! eps(y) = max_v | Med_k <X̄_k, v> - <y, v> |
//! ```
//!
//! Any `y` with `eps(y) <= eps` lies in the intersection of the slabs
//! `S_v(eps)`, so the value `eps(y)` doubles as a membership certificate.

use serde::{Deserialize, Serialize};

use crate::blocking::{block_means, lower_median_in_place, partition, BlockMeans};
use crate::contamination::{sample_clean, DistributionSpec};
use crate::error::{Error, Result};
use crate::model::{
    check_dims, distance, dot_unchecked, norm, Dataset, DirectionPool, RngStream, Vector,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub point: Vector,
    /// Largest residual between a directional median and the point's projection.
    pub achieved_eps: f64,
    pub n_blocks: usize,
    pub pool_size: usize,
    pub iterations: usize,
    /// Best objective after each iteration, starting with the initial point.
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Multiplier applied to the step after a non-improving move.
    pub step_decay: f64,
    pub tol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iters: 500,
            step_decay: 0.5,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `R = sup_v E[<Y - μ, v>²]^{1/2}`.
    pub r_weak: f64,
    pub n_blocks: usize,
    pub n_samples: usize,
    pub dim: usize,
}

/// Lower medians of the projected block means, one per pool direction.
pub(crate) struct DirectionalMedians<'a> {
    pool: &'a DirectionPool,
    medians: Vec<f64>,
}

impl<'a> DirectionalMedians<'a> {
    pub(crate) fn new(means: &BlockMeans, pool: &'a DirectionPool) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Empty("direction pool"));
        }
        check_dims(means.dim(), pool.dim())?;
        let medians = pool
            .iter()
            .map(|v| lower_median_in_place(&mut means.project(v)))
            .collect();
        Ok(DirectionalMedians { pool, medians })
    }

    /// Objective value and the first direction attaining it.
    pub(crate) fn evaluate(&self, y: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (v, m)) in self.pool.iter().zip(&self.medians).enumerate() {
            let r = (m - dot_unchecked(y, v)).abs();
            if r > best.0 {
                best = (r, i);
            }
        }
        best
    }

    pub(crate) fn residual(&self, y: &[f64], i: usize) -> f64 {
        self.medians[i] - dot_unchecked(y, self.pool.direction(i))
    }
}

/// Smallest `eps` such that `y` lies in every slab `S_v(eps)` of the pool.
pub fn mom_objective(y: &[f64], means: &BlockMeans, pool: &DirectionPool) -> Result<f64> {
    check_dims(means.dim(), y.len())?;
    Ok(DirectionalMedians::new(means, pool)?.evaluate(y).0)
}

/// Coordinatewise lower median of the block means.
pub fn coordinatewise_median(means: &BlockMeans) -> Vector {
    let entries = (0..means.dim())
        .map(|j| {
            let mut col: Vec<f64> = (0..means.n_blocks()).map(|k| means.mean(k)[j]).collect();
            lower_median_in_place(&mut col)
        })
        .collect();
    Vector::new(entries).expect("medians of finite block means are finite")
}

/// Minimizes the slab objective over `y` by subgradient steps along the
/// worst direction, starting from the coordinatewise median of the block
/// means. The step is halved (by `step_decay`) whenever a move fails to
/// improve the best objective seen.
pub fn lm_mom_from_means(
    means: &BlockMeans,
    pool: &DirectionPool,
    opts: &DescentOptions,
) -> Result<MeanEstimate> {
    let medians = DirectionalMedians::new(means, pool)?;
    let mut y = coordinatewise_median(means).into_inner();
    let (mut best, mut arg) = medians.evaluate(&y);
    let mut history = vec![best];
    let mut step = best;
    let mut iterations = 0;
    let mut candidate = vec![0.0; y.len()];
    while iterations < opts.max_iters && best > opts.tol && step > opts.tol {
        iterations += 1;
        let v = pool.direction(arg);
        let signed = step * medians.residual(&y, arg).signum();
        for ((c, yi), vi) in candidate.iter_mut().zip(&y).zip(v) {
            *c = yi + signed * vi;
        }
        let (value, next_arg) = medians.evaluate(&candidate);
        if value < best {
            std::mem::swap(&mut y, &mut candidate);
            best = value;
            arg = next_arg;
        } else {
            step *= opts.step_decay;
        }
        history.push(best);
    }
    Ok(MeanEstimate {
        point: Vector::new(y)?,
        achieved_eps: best,
        n_blocks: means.n_blocks(),
        pool_size: pool.len(),
        iterations,
        history,
    })
}

pub fn lm_mom_estimate(
    data: &Dataset,
    n_blocks: usize,
    pool: &DirectionPool,
    opts: &DescentOptions,
    rng: &RngStream,
) -> Result<MeanEstimate> {
    let part = partition(data.n_samples(), n_blocks, rng)?;
    let means = block_means(data, &part)?;
    lm_mom_from_means(&means, pool, opts)
}

/// Coordinatewise median of block means under one shared partition.
pub fn coordinatewise_mom(data: &Dataset, n_blocks: usize, rng: &RngStream) -> Result<Vector> {
    let part = partition(data.n_samples(), n_blocks, rng)?;
    Ok(coordinatewise_median(&block_means(data, &part)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoMedianOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GeoMedianOptions {
    fn default() -> Self {
        GeoMedianOptions {
            tol: 1e-9,
            max_iters: 1000,
        }
    }
}

const COINCIDENT: f64 = 1e-12;

/// Weiszfeld iteration with the Vardi–Zhang correction at data points.
/// If the nearest input point satisfies the optimality condition at exit,
/// that point is returned exactly.
pub fn geometric_median(points: &Dataset, opts: &GeoMedianOptions) -> Result<Vector> {
    let d = points.dim();
    let n = points.n_samples() as f64;
    let mut y: Vec<f64> = (0..d)
        .map(|j| points.rows().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let scale = points
        .rows()
        .map(|r| distance(r, &y))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut weighted = vec![0.0; d];
    let mut pull = vec![0.0; d];
    for _ in 0..opts.max_iters {
        weighted.iter_mut().for_each(|w| *w = 0.0);
        pull.iter_mut().for_each(|w| *w = 0.0);
        let mut inv_sum = 0.0;
        let mut coincident = 0usize;
        for p in points.rows() {
            let dist = distance(p, &y);
            if dist < COINCIDENT {
                coincident += 1;
                continue;
            }
            inv_sum += 1.0 / dist;
            for j in 0..d {
                weighted[j] += p[j] / dist;
                pull[j] += (p[j] - y[j]) / dist;
            }
        }
        let pull_norm = norm(&pull);
        if inv_sum == 0.0 || (coincident > 0 && pull_norm <= coincident as f64) {
            break;
        }
        if pull_norm <= opts.tol * n {
            break;
        }
        let mut next: Vec<f64> = weighted.iter().map(|w| w / inv_sum).collect();
        if coincident > 0 {
            let gamma = (coincident as f64 / pull_norm).min(1.0);
            for j in 0..d {
                next[j] = (1.0 - gamma) * next[j] + gamma * y[j];
            }
        }
        let moved = distance(&next, &y);
        y = next;
        if moved <= opts.tol * scale {
            break;
        }
    }

    if let Some(p) = nearest_optimal_point(points, &y) {
        y = p.to_vec();
    }
    Vector::new(y)
}

/// The input point nearest to `y`, if the subgradient condition
/// `|Σ_{p_i ≠ p} (p_i - p)/|p_i - p|| <= #{p_i = p}` makes it a minimizer.
fn nearest_optimal_point<'a>(points: &'a Dataset, y: &[f64]) -> Option<&'a [f64]> {
    let p = points
        .rows()
        .min_by(|a, b| distance(a, y).total_cmp(&distance(b, y)))?;
    let mut pull = vec![0.0; p.len()];
    let mut same = 0usize;
    for q in points.rows() {
        let dist = distance(q, p);
        if dist < COINCIDENT {
            same += 1;
        } else {
            for j in 0..p.len() {
                pull[j] += (q[j] - p[j]) / dist;
            }
        }
    }
    (norm(&pull) <= same as f64).then_some(p)
}

/// Geometric median of the block means.
pub fn geomedian_mom(data: &Dataset, n_blocks: usize, rng: &RngStream) -> Result<Vector> {
    let part = partition(data.n_samples(), n_blocks, rng)?;
    let means = block_means(data, &part)?;
    geometric_median(means.as_dataset(), &GeoMedianOptions::default())
}

pub fn empirical_mean(data: &Dataset) -> Vector {
    let n = data.n_samples() as f64;
    let mut sum = vec![0.0; data.dim()];
    for row in data.rows() {
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    Vector::new(sum.into_iter().map(|s| s / n).collect()).expect("mean of finite rows")
}

/// `8 R sqrt(K / N)`: with probability at least `1 - exp(-K/128)` the
/// estimator lands within this distance of the true mean.
pub fn mean_error_bound(inputs: &BoundInputs) -> f64 {
    8.0 * inputs.r_weak * (inputs.n_blocks as f64 / inputs.n_samples as f64).sqrt()
}

/// Monte Carlo estimate of `R = sup_v E[<Y - μ, v>²]^{1/2}` over the pool.
pub fn r_weak_oracle(
    sampler: &DistributionSpec,
    mu: &[f64],
    pool: &DirectionPool,
    n_mc: usize,
    rng: &RngStream,
) -> Result<f64> {
    if n_mc < 1000 {
        return Err(Error::param(format!(
            "oracle needs at least 1000 draws, got {n_mc}"
        )));
    }
    check_dims(sampler.dim, mu.len())?;
    check_dims(sampler.dim, pool.dim())?;
    let draws = sample_clean(sampler, n_mc, rng)?;
    let centered = draws.translated(&mu.iter().map(|m| -m).collect::<Vec<_>>())?;
    let best = pool
        .iter()
        .map(|v| {
            centered
                .rows()
                .map(|r| dot_unchecked(r, v).powi(2))
                .sum::<f64>()
                / n_mc as f64
        })
        .fold(0.0f64, f64::max);
    Ok(best.sqrt())
}
