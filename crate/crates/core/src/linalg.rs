//! Symmetric eigendecomposition and matrix norms.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{check_dims, trace_inner, SymMatrix, SYMMETRY_TOL};

#[derive(Clone, Debug)]
pub struct Eigen {
    /// Non-increasing.
    pub eigvals: Vec<f64>,
    /// Orthonormal, `eigvecs[j]` pairs with `eigvals[j]`.
    pub eigvecs: Vec<Vec<f64>>,
}

impl Eigen {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.eigvals.len();
        let mut m = SymMatrix::zeros(d);
        for (l, v) in self.eigvals.iter().zip(&self.eigvecs) {
            m.add_outer(*l, v);
        }
        m.symmetrize();
        m
    }
}

pub fn sym_eigendecomposition(a: &SymMatrix) -> Result<Eigen> {
    let d = a.dim();
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, a.as_slice()));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    Ok(Eigen {
        eigvals: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigvecs: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    })
}

/// Spectral norm, the largest absolute eigenvalue.
pub fn operator_norm(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eigendecomposition(a)?
        .eigvals
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs())))
}

pub fn frobenius_error(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub fn frobenius_norm(a: &SymMatrix) -> f64 {
    trace_inner(a, a).unwrap_or(0.0).sqrt()
}
