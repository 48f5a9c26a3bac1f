//! Shared value types: datasets, vectors, symmetric matrices, RNG streams
//! and the finite direction pools that stand in for the unit sphere.

use std::ops::Deref;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Differences shorter than this are dropped when building direction pools.
const MIN_DIRECTION_NORM: f64 = 1e-12;

/// Maximum number of hint pairs turned into pool directions.
const MAX_HINT_PAIRS: usize = 50;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// `N` samples in `d` dimensions, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_samples: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(n_samples: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Empty("dataset has no samples"));
        }
        if dim == 0 {
            return Err(Error::param("dataset dimension must be positive"));
        }
        if values.len() != n_samples * dim {
            return Err(Error::DimensionMismatch {
                expected: n_samples * dim,
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Dataset {
            n_samples,
            dim,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("dataset has no samples"))?;
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Dataset::new(rows.len(), dim, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Returns a copy with every row shifted by `t`.
    pub fn translated(&self, t: &[f64]) -> Result<Dataset> {
        if t.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: t.len(),
            });
        }
        let values = self
            .values
            .chunks_exact(self.dim)
            .flat_map(|row| row.iter().zip(t).map(|(a, b)| a + b))
            .collect();
        Dataset::new(self.n_samples, self.dim, values)
    }

    pub fn scaled(&self, c: f64) -> Result<Dataset> {
        Dataset::new(
            self.n_samples,
            self.dim,
            self.values.iter().map(|v| v * c).collect(),
        )
    }

    /// Single-column view of a projection `<x_i, v>` for every row.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.rows().map(|row| dot_unchecked(row, v)).collect()
    }

    pub(crate) fn set_row(&mut self, i: usize, row: &[f64]) {
        self.values[i * self.dim..(i + 1) * self.dim].copy_from_slice(row);
    }
}

/// A finite real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("vector has no entries"));
        }
        check_finite(&entries)?;
        Ok(Vector(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        distance(&self.0, other)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.0
    }
}

/// Dense symmetric `d x d` matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, checking symmetry relative to
    /// the largest absolute entry.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        check_finite(&data)?;
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..dim {
            for j in (i + 1)..dim {
                asym = asym.max((data[i * dim + j] - data[j * dim + i]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(entries.len());
        for (i, v) in entries.iter().enumerate() {
            m.data[i * entries.len() + i] = *v;
        }
        m
    }

    /// `u ⊗ u`.
    pub fn outer(u: &[f64]) -> Self {
        let dim = u.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in u {
            for b in u {
                data.push(a * b);
            }
        }
        SymMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `uᵀ A u`.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        self.data
            .chunks_exact(self.dim)
            .zip(u)
            .map(|(row, ui)| ui * dot_unchecked(row, u))
            .sum()
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dims(self.dim, other.dim)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c * (u ⊗ u)`, symmetric by construction.
    pub(crate) fn add_outer(&mut self, c: f64, u: &[f64]) {
        for i in 0..self.dim {
            let ci = c * u[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] += ci * u[j];
            }
        }
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        SymMatrix { dim, data }
    }

    /// Averages the matrix with its transpose to remove rounding asymmetry.
    pub(crate) fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let avg = 0.5 * (self.data[i * self.dim + j] + self.data[j * self.dim + i]);
                self.data[i * self.dim + j] = avg;
                self.data[j * self.dim + i] = avg;
            }
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        SymMatrix::new(dim, data)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.data.chunks_exact(m.dim).map(<[f64]>::to_vec).collect()
    }
}

/// Counter-based random stream. Two streams with different `(seed, stream_id)`
/// are independent; the same pair always reproduces the same sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives an independent child stream for a named sub-task.
    pub fn fork(&self, tag: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Finite set of unit vectors, deduplicated up to sign.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionPool {
    dim: usize,
    directions: Vec<f64>,
}

impl DirectionPool {
    /// Normalizes and sign-deduplicates the given directions. Near-zero
    /// vectors are skipped; the first representative of each `±v` pair wins.
    pub fn from_directions<R: AsRef<[f64]>>(dim: usize, directions: &[R]) -> Result<Self> {
        let mut pool = DirectionPool {
            dim,
            directions: Vec::new(),
        };
        for v in directions {
            let v = v.as_ref();
            check_dims(dim, v.len())?;
            check_finite(v)?;
            pool.push(v);
        }
        if pool.is_empty() {
            return Err(Error::Empty("direction pool"));
        }
        Ok(pool)
    }

    /// The `d` coordinate axes.
    pub fn axes(dim: usize) -> Self {
        let mut directions = vec![0.0; dim * dim];
        for i in 0..dim {
            directions[i * dim + i] = 1.0;
        }
        DirectionPool { dim, directions }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.directions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.directions.chunks_exact(self.dim)
    }

    fn push(&mut self, v: &[f64]) -> bool {
        let n = norm(v);
        if n < MIN_DIRECTION_NORM {
            return false;
        }
        let unit: Vec<f64> = v.iter().map(|x| x / n).collect();
        let duplicate = self.iter().any(|w| {
            let same = w.iter().zip(&unit).all(|(a, b)| (a - b).abs() <= 1e-12);
            let opposite = w.iter().zip(&unit).all(|(a, b)| (a + b).abs() <= 1e-12);
            same || opposite
        });
        if !duplicate {
            self.directions.extend_from_slice(&unit);
        }
        !duplicate
    }
}

/// Standard-normal draw normalized onto the unit sphere. Retries on the
/// (measure zero) all-zero draw.
pub(crate) fn random_unit<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n >= MIN_DIRECTION_NORM {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Builds the direction pool used by the projection-median estimators:
/// the coordinate axes, `n_random` uniform directions on the sphere and, when
/// a hint dataset is supplied, normalized differences of up to 50 random
/// pairs of its rows.
pub fn make_direction_pool(
    dim: usize,
    n_random: usize,
    dataset_hint: Option<&Dataset>,
    rng: &RngStream,
) -> Result<DirectionPool> {
    if dim == 0 {
        return Err(Error::param("direction pool dimension must be positive"));
    }
    let mut pool = DirectionPool::axes(dim);
    let mut gen = rng.rng();
    for _ in 0..n_random {
        let v = random_unit(dim, &mut gen);
        pool.push(&v);
    }
    if let Some(hint) = dataset_hint {
        check_dims(dim, hint.dim())?;
        let n = hint.n_samples();
        if n >= 2 {
            let total_pairs = n * (n - 1) / 2;
            let take = total_pairs.min(MAX_HINT_PAIRS);
            for p in index::sample(&mut gen, total_pairs, take).into_iter() {
                let (i, j) = unrank_pair(p, n);
                let diff: Vec<f64> = hint
                    .row(i)
                    .iter()
                    .zip(hint.row(j))
                    .map(|(a, b)| a - b)
                    .collect();
                pool.push(&diff);
            }
        }
    }
    Ok(pool)
}

/// Maps `p in [0, n(n-1)/2)` onto the pair `(i, j)` with `i < j`.
fn unrank_pair(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while p >= n - 1 - i {
        p -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + p)
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trace duality `[A, B] = Tr(Aᵀ B)`.
pub fn trace_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(dot_unchecked(a.as_slice(), b.as_slice()))
}

pub fn norm(v: &[f64]) -> f64 {
    dot_unchecked(v, v).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
