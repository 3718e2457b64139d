use nalgebra::{DMatrix, DVector};

use super::{DataMatrix, SubspaceKind, SubspaceModel};
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, symmetric_eigen};

/// Eigenvalues below this fraction of the largest are treated as exact zeros.
const NULL_RATIO: f64 = 1e-10;

/// Principal components of the sample covariance (normalized by `M - 1`).
///
/// With fewer samples than dimensions the `M x M` Gram matrix is decomposed
/// instead and its eigenvectors lifted back into sample space.
pub fn fit_pca(data: &DataMatrix, k: usize) -> Result<SubspaceModel> {
    let m = data.n_samples();
    let dim = data.dim();
    if m < 2 {
        return Err(Error::param("data", "PCA needs at least 2 samples"));
    }
    let k_max = (m - 1).min(dim);
    if k == 0 || k > k_max {
        return Err(Error::param("k", format!("{k} not in 1..={k_max}")));
    }
    let mean = data.mean();
    let x = data.centered(&mean);
    if x.amax() == 0.0 {
        return Err(Error::Degenerate("all samples identical (zero covariance)".into()));
    }
    let denom = (m - 1) as f64;

    let (mut basis, eigenvalues) = if m < dim {
        gram_route(&x, k, denom)?
    } else {
        let cov = x.transpose() * &x / denom;
        let eig = symmetric_eigen(&cov)?;
        let values = eig.values[..k].iter().map(|v| v.max(0.0)).collect();
        (eig.vectors.columns(0, k).into_owned(), values)
    };
    canonicalize_signs(&mut basis);
    SubspaceModel::from_parts(SubspaceKind::Pca, mean, basis, eigenvalues)
}

fn gram_route(x: &DMatrix<f64>, k: usize, denom: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let dim = x.ncols();
    let gram = x * x.transpose() / denom;
    let eig = symmetric_eigen(&gram)?;
    let top = eig.values[0];
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for j in 0..k {
        let lambda = eig.values[j];
        if lambda <= NULL_RATIO * top {
            break;
        }
        let lifted = x.transpose() * eig.vectors.column(j) / (denom * lambda).sqrt();
        columns.push(lifted);
        values.push(lambda);
    }
    orthonormalize(&mut columns);
    // Rank-deficient data: complete the basis with directions of zero variance.
    let mut axis = 0;
    while columns.len() < k && axis < dim {
        let mut e = DVector::zeros(dim);
        e[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in &columns {
                let proj = c.dot(&e);
                e -= c * proj;
            }
        }
        let norm = e.norm();
        if norm > 1e-6 {
            columns.push(e / norm);
            values.push(0.0);
        }
    }
    Ok((DMatrix::from_columns(&columns), values))
}

/// Modified Gram–Schmidt in place; removes round-off drift from lifted vectors.
fn orthonormalize(columns: &mut [DVector<f64>]) {
    for i in 0..columns.len() {
        let (done, rest) = columns.split_at_mut(i);
        let c = &mut rest[0];
        for prev in done.iter() {
            let proj = prev.dot(c);
            *c -= prev * proj;
        }
        let norm = c.norm();
        *c /= norm;
    }
}
