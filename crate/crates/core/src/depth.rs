//! Halfspace (Tukey) depth and the Tukey median-of-means.
//!
//! Depth of `η` among points `x_1..x_n` is the smallest number of points in
//! a closed halfspace whose boundary passes through `η`:
//! `min_u #{i : <x_i - η, u> <= 0}`. It is exact in one and two dimensions
//! and approximated from a finite direction set otherwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::blocking::{block_means, partition, BlockMeans};
use crate::error::{Error, Result};
use crate::mean::{coordinatewise_median, geometric_median, GeoMedianOptions};
use crate::model::{
    check_dims, dot_unchecked, random_unit, Dataset, DirectionPool, RngStream, Vector,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    pub depth: usize,
    pub depth_fraction: f64,
    /// A direction `u` attaining the minimum count.
    pub witness_direction: Vector,
}

impl DepthResult {
    fn new(depth: usize, n: usize, witness: Vec<f64>) -> Result<Self> {
        Ok(DepthResult {
            depth,
            depth_fraction: depth as f64 / n as f64,
            witness_direction: Vector::new(witness)?,
        })
    }
}

/// Number of points in the closed halfspace `{x : <x - η, u> <= 0}`.
pub fn halfspace_count(points: &Dataset, eta: &[f64], u: &[f64]) -> usize {
    let offset = dot_unchecked(eta, u);
    points
        .rows()
        .filter(|x| dot_unchecked(x, u) - offset <= 0.0)
        .count()
}

pub fn depth_1d(points: &[f64], eta: f64) -> Result<DepthResult> {
    if points.is_empty() {
        return Err(Error::Empty("depth of an empty point set"));
    }
    let below = points.iter().filter(|&&x| x <= eta).count();
    let above = points.iter().filter(|&&x| x >= eta).count();
    let (depth, sign) = if below <= above {
        (below, 1.0)
    } else {
        (above, -1.0)
    };
    DepthResult::new(depth, points.len(), vec![sign])
}

/// Exact planar depth by an angular sweep around `η`.
///
/// The complement of a closed halfplane through `η` is an open one, so the
/// depth is `n` minus the largest number of points whose angles around `η`
/// fit in a half-open arc `[θ, θ + π)`. Points equal to `η` are in every
/// closed halfplane.
pub fn depth_exact_2d(points: &Dataset, eta: &[f64]) -> Result<DepthResult> {
    check_dims(2, points.dim())?;
    check_dims(2, eta.len())?;
    let n = points.n_samples();
    let mut angles: Vec<f64> = points
        .rows()
        .filter_map(|x| {
            let (dx, dy) = (x[0] - eta[0], x[1] - eta[1]);
            if dx == 0.0 && dy == 0.0 {
                None
            } else {
                let t = dy.atan2(dx);
                Some(if t <= -PI { PI } else { t })
            }
        })
        .collect();
    if angles.is_empty() {
        return DepthResult::new(n, n, vec![1.0, 0.0]);
    }
    angles.sort_by(f64::total_cmp);
    let m = angles.len();
    let unrolled = |j: usize| {
        if j < m {
            angles[j]
        } else {
            angles[j - m] + 2.0 * PI
        }
    };

    let mut best = (0usize, 0usize);
    let mut end = 0usize;
    for i in 0..m {
        end = end.max(i);
        while end < i + m && unrolled(end) < angles[i] + PI {
            end += 1;
        }
        if end - i > best.0 {
            best = (end - i, i);
        }
    }
    let (open_count, start) = best;

    // rotate the open halfplane slightly clockwise so its boundary clears
    // both the first included angle and the last included one
    let theta = angles[start];
    let prev = if start == 0 {
        angles[m - 1] - 2.0 * PI
    } else {
        angles[start - 1]
    };
    let last_included = unrolled(start + open_count - 1);
    let slack = (theta - prev).min(theta + PI - last_included).min(PI / 2.0);
    let phi = theta + PI / 2.0 - 0.5 * slack;
    DepthResult::new(n - open_count, n, vec![phi.cos(), phi.sin()])
}

/// Depth minimized over the given directions and their negations.
pub fn depth_with_directions(
    points: &Dataset,
    eta: &[f64],
    directions: &DirectionPool,
) -> Result<DepthResult> {
    check_dims(points.dim(), eta.len())?;
    check_dims(points.dim(), directions.dim())?;
    let n = points.n_samples();
    let mut best = (usize::MAX, 0usize, 1.0f64);
    for (i, v) in directions.iter().enumerate() {
        let offset = dot_unchecked(eta, v);
        let (mut le, mut ge) = (0usize, 0usize);
        for x in points.rows() {
            let s = dot_unchecked(x, v) - offset;
            le += usize::from(s <= 0.0);
            ge += usize::from(s >= 0.0);
        }
        if le < best.0 {
            best = (le, i, 1.0);
        }
        if ge < best.0 {
            best = (ge, i, -1.0);
        }
    }
    let witness = directions
        .direction(best.1)
        .iter()
        .map(|x| x * best.2)
        .collect();
    DepthResult::new(best.0, n, witness)
}

/// Random approximation from `n_dirs` uniform directions. Never below the
/// exact depth, since it minimizes over a subset of directions.
pub fn depth_randomized(
    points: &Dataset,
    eta: &[f64],
    n_dirs: usize,
    rng: &RngStream,
) -> Result<DepthResult> {
    let directions = random_directions(points.dim(), n_dirs, rng)?;
    depth_with_directions(points, eta, &directions)
}

pub fn random_directions(dim: usize, n_dirs: usize, rng: &RngStream) -> Result<DirectionPool> {
    if n_dirs == 0 {
        return Err(Error::param("need at least one random direction"));
    }
    let mut gen = rng.rng();
    let dirs: Vec<Vec<f64>> = (0..n_dirs).map(|_| random_unit(dim, &mut gen)).collect();
    DirectionPool::from_directions(dim, &dirs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMethod {
    Exact1d,
    Exact2d,
    Randomized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TukeyOptions {
    pub n_dirs: usize,
    pub n_anneal_iters: usize,
}

impl Default for TukeyOptions {
    fn default() -> Self {
        TukeyOptions {
            n_dirs: 512,
            n_anneal_iters: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TukeyMomEstimate {
    pub point: Vector,
    /// Depth of `point` among the block means.
    pub depth: usize,
    pub n_blocks: usize,
    pub method: DepthMethod,
    pub candidates_evaluated: usize,
    /// Direction set used by the randomized method.
    pub directions: Option<DirectionPool>,
}

impl TukeyMomEstimate {
    /// Recomputes the depth of the returned point with the stored method.
    pub fn recompute_depth(&self, means: &BlockMeans) -> Result<usize> {
        DepthEvaluator {
            points: means.as_dataset(),
            method: self.method,
            directions: self.directions.as_ref(),
        }
        .depth(&self.point)
    }
}

struct DepthEvaluator<'a> {
    points: &'a Dataset,
    method: DepthMethod,
    directions: Option<&'a DirectionPool>,
}

impl DepthEvaluator<'_> {
    fn depth(&self, eta: &[f64]) -> Result<usize> {
        Ok(match self.method {
            DepthMethod::Exact1d => depth_1d(self.points.values(), eta[0])?.depth,
            DepthMethod::Exact2d => depth_exact_2d(self.points, eta)?.depth,
            DepthMethod::Randomized => {
                let dirs = self
                    .directions
                    .ok_or(Error::Empty("randomized depth directions"))?;
                depth_with_directions(self.points, eta, dirs)?.depth
            }
        })
    }
}

/// Deepest point found among the block means, scanning a fixed candidate
/// order: the coordinatewise median, the geometric median, every block mean,
/// then a coordinate line search over midpoints of projected block-mean gaps
/// and finally `n_anneal_iters` shrinking random perturbations. A candidate
/// replaces the incumbent only when strictly deeper.
pub fn tukey_mom(
    data: &Dataset,
    n_blocks: usize,
    rng: &RngStream,
    opts: &TukeyOptions,
) -> Result<TukeyMomEstimate> {
    let part = partition(data.n_samples(), n_blocks, rng)?;
    let means = block_means(data, &part)?;
    tukey_mom_from_means(&means, &rng.fork(TUKEY_TAG), opts)
}

const TUKEY_TAG: u64 = 0x0074_756b_6579;

pub fn tukey_mom_from_means(
    means: &BlockMeans,
    rng: &RngStream,
    opts: &TukeyOptions,
) -> Result<TukeyMomEstimate> {
    let d = means.dim();
    let k = means.n_blocks();
    let points = means.as_dataset();
    let method = match d {
        1 => DepthMethod::Exact1d,
        2 => DepthMethod::Exact2d,
        _ => DepthMethod::Randomized,
    };
    let directions = match method {
        DepthMethod::Randomized => Some(random_directions(d, opts.n_dirs, &rng.fork(1))?),
        _ => None,
    };
    let eval = DepthEvaluator {
        points,
        method,
        directions: directions.as_ref(),
    };

    let mut evaluated = 0usize;
    let mut best_point = coordinatewise_median(means).into_inner();
    let mut best_depth = eval.depth(&best_point)?;
    evaluated += 1;
    let mut consider =
        |candidate: &[f64], best_point: &mut Vec<f64>, best_depth: &mut usize| -> Result<()> {
            let depth = eval.depth(candidate)?;
            evaluated += 1;
            if depth > *best_depth {
                *best_depth = depth;
                best_point.copy_from_slice(candidate);
            }
            Ok(())
        };

    if d > 1 {
        let geo = geometric_median(points, &GeoMedianOptions::default())?;
        consider(&geo, &mut best_point, &mut best_depth)?;
        for row in points.rows() {
            consider(row, &mut best_point, &mut best_depth)?;
        }
        for j in 0..d {
            let mut coords: Vec<f64> = points.rows().map(|r| r[j]).collect();
            coords.sort_by(f64::total_cmp);
            coords.dedup();
            let mut candidate = best_point.clone();
            for w in coords.windows(2) {
                candidate.copy_from_slice(&best_point);
                candidate[j] = 0.5 * (w[0] + w[1]);
                consider(&candidate, &mut best_point, &mut best_depth)?;
            }
        }
        if opts.n_anneal_iters > 0 {
            let spread = robust_spread(points);
            let mut gen = rng.fork(2).rng();
            let shrink = 1e-3f64.powf(1.0 / opts.n_anneal_iters as f64);
            let mut scale = spread;
            let mut candidate = best_point.clone();
            for _ in 0..opts.n_anneal_iters {
                let dir = random_unit(d, &mut gen);
                for ((c, b), u) in candidate.iter_mut().zip(&best_point).zip(&dir) {
                    *c = b + scale * u;
                }
                consider(&candidate, &mut best_point, &mut best_depth)?;
                scale *= shrink;
            }
        }
    }

    Ok(TukeyMomEstimate {
        point: Vector::new(best_point)?,
        depth: best_depth,
        n_blocks: k,
        method,
        candidates_evaluated: evaluated,
        directions,
    })
}

/// Mean over coordinates of the median absolute deviation, floored so a
/// constant point set still yields a positive perturbation scale.
fn robust_spread(points: &Dataset) -> f64 {
    let d = points.dim();
    let mut total = 0.0;
    for j in 0..d {
        let mut col: Vec<f64> = points.rows().map(|r| r[j]).collect();
        let med = crate::blocking::lower_median_in_place(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|x| (x - med).abs()).collect();
        total += crate::blocking::lower_median_in_place(&mut dev);
    }
    (total / d as f64).max(1e-12)
}

/// `sqrt(8d) R sqrt(K / N)`, holding with probability at least
/// `1 - exp(-K / (32 d²))`.
pub fn tukey_error_bound(r_weak: f64, n_blocks: usize, n_samples: usize, dim: usize) -> f64 {
    (8.0 * dim as f64).sqrt() * r_weak * (n_blocks as f64 / n_samples as f64).sqrt()
}

/// True when at least `((α - 1)/α) K` of the block statistics are false.
/// Requires `K >= 1` and `α > 1`.
pub fn block_majority_check(block_stats: &[bool], alpha: f64) -> bool {
    let k = block_stats.len() as f64;
    let n_false = block_stats.iter().filter(|&&s| !s).count() as f64;
    n_false * alpha >= (alpha - 1.0) * k
}
