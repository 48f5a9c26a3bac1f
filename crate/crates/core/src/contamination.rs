//! Clean-data samplers and the Huber and adversarial contamination models.
//!
//! Every sampler is a pure function of its spec and an [`RngStream`]. The
//! corrupted index set is always reported exactly so that experiments can
//! check the `K >= 16 |O|` rule against the real outlier count.

use rand::seq::index;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocking::BlockPartition;
use crate::error::{Error, Result};
use crate::linalg::sym_eigendecomposition;
use crate::model::{check_dims, Dataset, RngStream, SymMatrix};

/// Shape of the clean distribution. Scale matrices are second-moment
/// matrices about the mean: Student-t draws are rescaled so that their
/// covariance equals `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Gaussian {
        scale: SymMatrix,
    },
    StudentT {
        scale: SymMatrix,
        df: f64,
    },
    /// Independent Pareto(1, tail_index) coordinates shifted to `mean`.
    Pareto {
        tail_index: f64,
    },
    /// Independent `exp(log_sigma * Z)` coordinates shifted to `mean`.
    Lognormal {
        log_sigma: f64,
    },
    PointMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub dim: usize,
    pub mean: Vec<f64>,
    #[serde(flatten)]
    pub kind: DistributionKind,
}

impl DistributionSpec {
    pub fn gaussian(mean: Vec<f64>, scale: SymMatrix) -> Self {
        DistributionSpec {
            dim: mean.len(),
            mean,
            kind: DistributionKind::Gaussian { scale },
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        DistributionSpec::gaussian(vec![0.0; dim], SymMatrix::identity(dim))
    }

    pub fn student_t(mean: Vec<f64>, scale: SymMatrix, df: f64) -> Self {
        DistributionSpec {
            dim: mean.len(),
            mean,
            kind: DistributionKind::StudentT { scale, df },
        }
    }

    pub fn point_mass(mean: Vec<f64>) -> Self {
        DistributionSpec {
            dim: mean.len(),
            mean,
            kind: DistributionKind::PointMass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::param("distribution dimension must be positive"));
        }
        check_dims(self.dim, self.mean.len())?;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("distribution mean must be finite"));
        }
        match &self.kind {
            DistributionKind::Gaussian { scale } => check_dims(self.dim, scale.dim()),
            DistributionKind::StudentT { scale, df } => {
                check_dims(self.dim, scale.dim())?;
                if !(*df > 2.0) || !df.is_finite() {
                    return Err(Error::param(format!(
                        "student_t needs df > 2 for a finite second moment, got {df}"
                    )));
                }
                Ok(())
            }
            DistributionKind::Pareto { tail_index } => {
                if !(*tail_index > 1.0) || !tail_index.is_finite() {
                    return Err(Error::param(format!(
                        "pareto tail index must exceed 1 for a finite mean, got {tail_index}"
                    )));
                }
                Ok(())
            }
            DistributionKind::Lognormal { log_sigma } => {
                if !(*log_sigma >= 0.0) || !log_sigma.is_finite() {
                    return Err(Error::param("lognormal log_sigma must be finite and >= 0"));
                }
                Ok(())
            }
            DistributionKind::PointMass => Ok(()),
        }
    }

    /// Closed-form covariance, `None` when the second moment is infinite.
    pub fn covariance(&self) -> Option<SymMatrix> {
        match &self.kind {
            DistributionKind::Gaussian { scale } | DistributionKind::StudentT { scale, .. } => {
                Some(scale.clone())
            }
            DistributionKind::Pareto { tail_index: a } => (*a > 2.0).then(|| {
                let var = a / ((a - 1.0).powi(2) * (a - 2.0));
                SymMatrix::diagonal(&vec![var; self.dim])
            }),
            DistributionKind::Lognormal { log_sigma: s } => {
                let s2 = s * s;
                let var = (s2.exp() - 1.0) * s2.exp();
                Some(SymMatrix::diagonal(&vec![var; self.dim]))
            }
            DistributionKind::PointMass => Some(SymMatrix::zeros(self.dim)),
        }
    }

    /// `E[Y Yᵀ] = Σ + μ μᵀ`.
    pub fn second_moment(&self) -> Option<SymMatrix> {
        let mut m = self.covariance()?;
        m.add_outer(1.0, &self.mean);
        Some(m)
    }

    /// Same distribution recentred at the origin.
    pub fn centered(&self) -> DistributionSpec {
        DistributionSpec {
            dim: self.dim,
            mean: vec![0.0; self.dim],
            kind: self.kind.clone(),
        }
    }

    fn sampler(&self) -> Result<Sampler<'_>> {
        self.validate()?;
        let shape = match &self.kind {
            DistributionKind::Gaussian { scale } => Shape::Gaussian(sqrt_psd(scale)?),
            DistributionKind::StudentT { scale, df } => Shape::StudentT {
                factor: sqrt_psd(scale)?,
                chi: ChiSquared::new(*df).map_err(|e| Error::param(e.to_string()))?,
                df: *df,
            },
            DistributionKind::Pareto { tail_index } => Shape::Pareto {
                dist: Pareto::new(1.0, *tail_index).map_err(|e| Error::param(e.to_string()))?,
                offset: tail_index / (tail_index - 1.0),
            },
            DistributionKind::Lognormal { log_sigma } => Shape::Lognormal {
                sigma: *log_sigma,
                offset: (0.5 * log_sigma * log_sigma).exp(),
            },
            DistributionKind::PointMass => Shape::PointMass,
        };
        Ok(Sampler {
            shape,
            mean: &self.mean,
        })
    }
}

/// Symmetric square root of a PSD matrix, row-major. Negative eigenvalues
/// from rounding are clipped to zero.
fn sqrt_psd(scale: &SymMatrix) -> Result<Vec<f64>> {
    let eig = sym_eigendecomposition(scale)?;
    let d = scale.dim();
    let mut out = vec![0.0; d * d];
    for (lambda, v) in eig.eigvals.iter().zip(&eig.eigvecs) {
        let s = lambda.max(0.0).sqrt();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] += s * v[i] * v[j];
            }
        }
    }
    Ok(out)
}

/// Zero-mean draw shape; the mean is added afterwards.
enum Shape {
    Gaussian(Vec<f64>),
    StudentT {
        factor: Vec<f64>,
        chi: ChiSquared<f64>,
        df: f64,
    },
    Pareto {
        dist: Pareto<f64>,
        offset: f64,
    },
    Lognormal {
        sigma: f64,
        offset: f64,
    },
    PointMass,
}

struct Sampler<'a> {
    shape: Shape,
    mean: &'a [f64],
}

impl Sampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.shape {
            Shape::Gaussian(factor) => correlated_normal(factor, rng, out),
            Shape::StudentT { factor, chi, df } => {
                correlated_normal(factor, rng, out);
                let w: f64 = chi.sample(rng);
                let c = ((df - 2.0) / df).sqrt() / (w / df).sqrt();
                out.iter_mut().for_each(|x| *x *= c);
            }
            Shape::Pareto { dist, offset } => {
                for x in out.iter_mut() {
                    *x = dist.sample(rng) - offset;
                }
            }
            Shape::Lognormal { sigma, offset } => {
                for x in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x = (sigma * z).exp() - offset;
                }
            }
            Shape::PointMass => out.iter_mut().for_each(|x| *x = 0.0),
        }
        for (x, m) in out.iter_mut().zip(self.mean) {
            *x += m;
        }
    }
}

fn correlated_normal<R: Rng + ?Sized>(factor: &[f64], rng: &mut R, out: &mut [f64]) {
    let d = out.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..d {
        out[i] = factor[i * d..(i + 1) * d]
            .iter()
            .zip(&z)
            .map(|(a, b)| a * b)
            .sum();
    }
}

/// `n` i.i.d. draws from `spec`.
pub fn sample_clean(spec: &DistributionSpec, n: usize, rng: &RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::param("sample count must be positive"));
    }
    let sampler = spec.sampler()?;
    let mut gen = rng.rng();
    let mut values = vec![0.0; n * spec.dim];
    for row in values.chunks_exact_mut(spec.dim) {
        sampler.draw(&mut gen, row);
    }
    Dataset::new(n, spec.dim, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// All outliers at one far point `center + magnitude (1,…,1)/√d`.
    FarPointMass,
    /// Each outlier is its clean row shifted by `magnitude` along `(1,…,1)/√d`.
    MeanShift,
    /// Far point mass, with outlier indices packed into as few blocks of the
    /// partition hint as possible.
    BlockConcentrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationModel {
    Huber,
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub model: ContaminationModel,
    pub eps_corrupt: f64,
    #[serde(default)]
    pub strategy: Option<AdversaryStrategy>,
    #[serde(default)]
    pub magnitude: f64,
    /// Outlier distribution for the Huber model; defaults to a point mass at
    /// `magnitude (1,…,1)/√d`.
    #[serde(default)]
    pub outlier_distribution: Option<DistributionSpec>,
}

impl ContaminationSpec {
    pub fn none() -> Self {
        ContaminationSpec {
            model: ContaminationModel::Adversarial,
            eps_corrupt: 0.0,
            strategy: None,
            magnitude: 0.0,
            outlier_distribution: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_fraction(self.eps_corrupt)?;
        if !self.magnitude.is_finite() {
            return Err(Error::param("contamination magnitude must be finite"));
        }
        if let Some(q) = &self.outlier_distribution {
            q.validate()?;
            check_dims(dim, q.dim)?;
        }
        Ok(())
    }

    /// Number of corrupted rows for the adversarial model.
    pub fn corrupt_count(&self, n: usize) -> usize {
        corrupt_count(self.eps_corrupt, n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContaminatedSample {
    pub data: Dataset,
    /// Sorted indices of replaced rows.
    pub outlier_indices: Vec<usize>,
    pub clean_reference: Option<Dataset>,
}

fn check_fraction(eps: f64) -> Result<()> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "contamination fraction must lie in [0, 1), got {eps}"
        )))
    }
}

/// `floor(eps N)`, tolerant of the rounding in products such as `0.29 * 100`.
pub fn corrupt_count(eps: f64, n: usize) -> usize {
    (eps * n as f64 + 1e-9).floor() as usize
}

/// Replaces each row independently with probability `eps` by a draw from `q`.
pub fn huber_contaminate(
    clean: &Dataset,
    eps: f64,
    q_spec: &DistributionSpec,
    rng: &RngStream,
) -> Result<ContaminatedSample> {
    check_fraction(eps)?;
    check_dims(clean.dim(), q_spec.dim)?;
    let sampler = q_spec.sampler()?;
    let mut gen = rng.rng();
    let mut data = clean.clone();
    let mut outliers = Vec::new();
    let mut row = vec![0.0; clean.dim()];
    for i in 0..clean.n_samples() {
        if gen.random::<f64>() < eps {
            sampler.draw(&mut gen, &mut row);
            data.set_row(i, &row);
            outliers.push(i);
        }
    }
    Ok(ContaminatedSample {
        data,
        outlier_indices: outliers,
        clean_reference: Some(clean.clone()),
    })
}

/// Replaces exactly `floor(eps N)` rows. `center_hint` overrides the
/// coordinatewise median of the clean rows as the anchor of the far point;
/// `partition_hint` is the block structure attacked by `BlockConcentrated`.
pub fn adversarial_corrupt(
    clean: &Dataset,
    eps: f64,
    strategy: AdversaryStrategy,
    magnitude: f64,
    center_hint: Option<&[f64]>,
    partition_hint: Option<&BlockPartition>,
    rng: &RngStream,
) -> Result<ContaminatedSample> {
    check_fraction(eps)?;
    let n = clean.n_samples();
    let d = clean.dim();
    let count = corrupt_count(eps, n);
    if count == 0 {
        return Ok(ContaminatedSample {
            data: clean.clone(),
            outlier_indices: Vec::new(),
            clean_reference: Some(clean.clone()),
        });
    }
    let mut gen = rng.rng();
    let mut outliers: Vec<usize> = match (strategy, partition_hint) {
        (AdversaryStrategy::BlockConcentrated, Some(part)) => {
            let mut chosen: Vec<usize> = part.blocks().flatten().copied().take(count).collect();
            // spill into discarded rows only if blocks are exhausted
            chosen.extend(part.discarded().iter().copied().take(count - chosen.len()));
            chosen
        }
        (AdversaryStrategy::BlockConcentrated, None) => (0..count).collect(),
        _ => index::sample(&mut gen, n, count).into_vec(),
    };
    outliers.sort_unstable();
    if let Some(&index) = outliers.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, n });
    }

    let shift = magnitude / (d as f64).sqrt();
    let mut data = clean.clone();
    match strategy {
        AdversaryStrategy::FarPointMass | AdversaryStrategy::BlockConcentrated => {
            let anchor = match center_hint {
                Some(c) => {
                    check_dims(d, c.len())?;
                    c.to_vec()
                }
                None => coordinatewise_median(clean),
            };
            let target: Vec<f64> = anchor.iter().map(|c| c + shift).collect();
            for &i in &outliers {
                data.set_row(i, &target);
            }
        }
        AdversaryStrategy::MeanShift => {
            for &i in &outliers {
                let row: Vec<f64> = clean.row(i).iter().map(|x| x + shift).collect();
                data.set_row(i, &row);
            }
        }
    }
    Ok(ContaminatedSample {
        data,
        outlier_indices: outliers,
        clean_reference: Some(clean.clone()),
    })
}

/// Applies `spec` to `clean`. The Huber model without an explicit outlier
/// distribution uses a point mass at `magnitude (1,…,1)/√d`; the adversarial
/// model defaults to `FarPointMass`.
pub fn contaminate(
    clean: &Dataset,
    spec: &ContaminationSpec,
    partition_hint: Option<&BlockPartition>,
    rng: &RngStream,
) -> Result<ContaminatedSample> {
    spec.validate(clean.dim())?;
    match spec.model {
        ContaminationModel::Huber => {
            let d = clean.dim();
            let q = spec.outlier_distribution.clone().unwrap_or_else(|| {
                DistributionSpec::point_mass(vec![spec.magnitude / (d as f64).sqrt(); d])
            });
            huber_contaminate(clean, spec.eps_corrupt, &q, rng)
        }
        ContaminationModel::Adversarial => adversarial_corrupt(
            clean,
            spec.eps_corrupt,
            spec.strategy.unwrap_or(AdversaryStrategy::FarPointMass),
            spec.magnitude,
            None,
            partition_hint,
            rng,
        ),
    }
}

fn coordinatewise_median(data: &Dataset) -> Vec<f64> {
    (0..data.dim())
        .map(|j| {
            let mut col: Vec<f64> = data.rows().map(|r| r[j]).collect();
            crate::blocking::lower_median_in_place(&mut col)
        })
        .collect()
}
