//! Block partitions, block means and block second moments, plus the
//! lower median used for every median of block statistics.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{check_dims, Dataset, RngStream, SymMatrix};

/// `K` disjoint blocks of equal size `m = floor(N / K)`; the remaining
/// `N - K m` indices are discarded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    n_samples: usize,
    block_size: usize,
    assignments: Vec<Vec<usize>>,
    discarded: Vec<usize>,
}

impl BlockPartition {
    pub fn n_blocks(&self) -> usize {
        self.assignments.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.assignments[k]
    }

    pub fn blocks(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.assignments.iter().map(Vec::as_slice)
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }

    fn from_order(order: Vec<usize>, n_blocks: usize) -> Self {
        let n_samples = order.len();
        let block_size = n_samples / n_blocks;
        let assignments = order[..n_blocks * block_size]
            .chunks_exact(block_size)
            .map(<[usize]>::to_vec)
            .collect();
        let discarded = order[n_blocks * block_size..].to_vec();
        BlockPartition {
            n_samples,
            block_size,
            assignments,
            discarded,
        }
    }

    fn validate_for(&self, data: &Dataset) -> Result<()> {
        let n = data.n_samples();
        for block in &self.assignments {
            if let Some(&index) = block.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        Ok(())
    }
}

fn check_block_count(n_samples: usize, n_blocks: usize) -> Result<()> {
    if n_blocks == 0 || n_blocks > n_samples {
        Err(Error::InvalidBlockCount {
            k: n_blocks,
            n: n_samples,
        })
    } else {
        Ok(())
    }
}

/// Uniformly permutes `0..N` and cuts it into `K` runs of `floor(N/K)`.
pub fn partition(n_samples: usize, n_blocks: usize, rng: &RngStream) -> Result<BlockPartition> {
    check_block_count(n_samples, n_blocks)?;
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng.rng());
    Ok(BlockPartition::from_order(order, n_blocks))
}

/// Deterministic split into consecutive index runs, without shuffling.
pub fn partition_sequential(n_samples: usize, n_blocks: usize) -> Result<BlockPartition> {
    check_block_count(n_samples, n_blocks)?;
    Ok(BlockPartition::from_order(
        (0..n_samples).collect(),
        n_blocks,
    ))
}

/// Per-block arithmetic means, one row per block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeans {
    means: Dataset,
}

impl BlockMeans {
    pub fn n_blocks(&self) -> usize {
        self.means.n_samples()
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        self.means.row(k)
    }

    pub fn as_dataset(&self) -> &Dataset {
        &self.means
    }

    /// Projections `<X̄_k, v>` for every block.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.means.project(v)
    }
}

/// Per-block second-moment matrices `(1/m) Σ (X_i - c)(X_i - c)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMoments {
    moments: Vec<SymMatrix>,
}

impl BlockMoments {
    /// Wraps precomputed block matrices, which must share one dimension.
    pub fn from_matrices(moments: Vec<SymMatrix>) -> Result<Self> {
        let first = moments.first().ok_or(Error::Empty("block moments"))?;
        let d = first.dim();
        for m in &moments {
            check_dims(d, m.dim())?;
        }
        Ok(BlockMoments { moments })
    }
}

impl BlockMoments {
    pub fn n_blocks(&self) -> usize {
        self.moments.len()
    }

    pub fn dim(&self) -> usize {
        self.moments[0].dim()
    }

    pub fn moment(&self, k: usize) -> &SymMatrix {
        &self.moments[k]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &SymMatrix> + '_ {
        self.moments.iter()
    }
}

pub fn block_means(data: &Dataset, part: &BlockPartition) -> Result<BlockMeans> {
    part.validate_for(data)?;
    let d = data.dim();
    let m = part.block_size() as f64;
    let mut values = Vec::with_capacity(part.n_blocks() * d);
    for block in part.blocks() {
        let mut sum = vec![0.0; d];
        for &i in block {
            for (s, x) in sum.iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        values.extend(sum.into_iter().map(|s| s / m));
    }
    Ok(BlockMeans {
        means: Dataset::new(part.n_blocks(), d, values)?,
    })
}

pub fn block_second_moments(
    data: &Dataset,
    part: &BlockPartition,
    center: Option<&[f64]>,
) -> Result<BlockMoments> {
    part.validate_for(data)?;
    let d = data.dim();
    if let Some(c) = center {
        check_dims(d, c.len())?;
    }
    let zero = vec![0.0; d];
    let c = center.unwrap_or(&zero);
    let m = part.block_size() as f64;
    let mut centered = vec![0.0; d];
    let moments = part
        .blocks()
        .map(|block| {
            let mut acc = vec![0.0; d * d];
            for &i in block {
                for (z, (x, ci)) in centered.iter_mut().zip(data.row(i).iter().zip(c)) {
                    *z = x - ci;
                }
                for a in 0..d {
                    for b in a..d {
                        acc[a * d + b] += centered[a] * centered[b];
                    }
                }
            }
            for a in 0..d {
                for b in a..d {
                    let v = acc[a * d + b] / m;
                    acc[a * d + b] = v;
                    acc[b * d + a] = v;
                }
            }
            SymMatrix::from_raw(d, acc)
        })
        .collect();
    Ok(BlockMoments { moments })
}

/// The smallest `x_i` with at least half the values on each side of it,
/// i.e. the `ceil(n/2)`-th order statistic.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of an empty list"));
    }
    let mut buf = values.to_vec();
    Ok(lower_median_in_place(&mut buf))
}

/// Same as [`lower_median`] but reorders `buf` instead of copying.
pub(crate) fn lower_median_in_place(buf: &mut [f64]) -> f64 {
    let idx = buf.len().div_ceil(2) - 1;
    let (_, v, _) = buf.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// Constants of the block-count rule `K >= C (VC ∨ |O| ∨ 128 log(1/δ))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockCountRule {
    pub c_vc: f64,
    pub c_out: f64,
}

impl Default for BlockCountRule {
    fn default() -> Self {
        BlockCountRule {
            c_vc: 4.0,
            c_out: 16.0,
        }
    }
}

/// `K = min(floor(N/2), max(ceil(128 ln(1/δ)), c_vc (d+1), c_out |O|, 1))`.
pub fn choose_block_count(
    delta: f64,
    dim: usize,
    corrupt_count: usize,
    n_samples: usize,
    rule: BlockCountRule,
) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    // ln(1/e) is not exactly -1 in floating point; absorb the rounding before ceil
    let confidence = (128.0 * (1.0 / delta).ln() - 1e-9).ceil();
    let vc = (rule.c_vc * (dim as f64 + 1.0) - 1e-9).ceil();
    let outliers = (rule.c_out * corrupt_count as f64 - 1e-9).ceil();
    let wanted = confidence.max(vc).max(outliers).max(1.0) as usize;
    let k = wanted.min(n_samples / 2);
    if k == 0 || n_samples / k < 1 {
        return Err(Error::InsufficientSamples { n: n_samples });
    }
    Ok(k)
}
