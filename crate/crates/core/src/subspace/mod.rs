//! Linear and kernel subspace feature extractors.
//!
//! [`fit_pca`] (eigenfaces), [`fit_lda`] (Fisher discriminant), [`fit_pclda`]
//! (Fisher discriminant in a PCA-reduced space) all produce a
//! [`SubspaceModel`]; [`fit_kpca`] produces a [`KernelModel`].

mod kpca;
mod lda;
mod pca;

pub use kpca::{center_kernel_matrix, fit_kpca, Kernel, KernelModel};
pub use lda::{fit_lda, fit_pclda, fit_pclda_stages, scatter_matrices, PcldaStages, Scatter};
pub use pca::fit_pca;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Training samples, one row per sample, with optional class labels.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    rows: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
}

impl DataMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::param("data", "empty data matrix"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("data", "non-finite entry"));
        }
        Ok(DataMatrix {
            rows,
            labels: None,
            n_classes: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::mismatch(dim, bad.len()));
        }
        DataMatrix::new(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
    }

    /// Attaches labels in `[0, C)`; every class in that range must occur.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows.nrows() {
            return Err(Error::mismatch(self.rows.nrows(), labels.len()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::param("labels", format!("class {missing} has no samples")));
        }
        self.labels = Some(labels);
        self.n_classes = n_classes;
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    pub(crate) fn mean(&self) -> DVector<f64> {
        self.rows.row_mean().transpose()
    }

    pub(crate) fn centered(&self, mean: &DVector<f64>) -> DMatrix<f64> {
        let mut x = self.rows.clone();
        for mut row in x.row_iter_mut() {
            row -= mean.transpose();
        }
        x
    }
}

/// Coefficients of a sample in a learned subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(components: Vec<f64>) -> Self {
        FeatureVector(components)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<DVector<f64>> for FeatureVector {
    fn from(v: DVector<f64>) -> Self {
        FeatureVector(v.iter().copied().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    Pca,
    Lda,
    Pclda,
}

impl SubspaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SubspaceKind::Pca => "pca",
            SubspaceKind::Lda => "lda",
            SubspaceKind::Pclda => "pclda",
        }
    }
}

/// Affine projection `f = basisᵀ (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    kind: SubspaceKind,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl SubspaceModel {
    pub fn from_parts(
        kind: SubspaceKind,
        mean: DVector<f64>,
        basis: DMatrix<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::mismatch(mean.len(), basis.nrows()));
        }
        if eigenvalues.len() != basis.ncols() {
            return Err(Error::mismatch(basis.ncols(), eigenvalues.len()));
        }
        Ok(SubspaceModel {
            kind,
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Result<FeatureVector> {
        if x.len() != self.dim() {
            return Err(Error::mismatch(self.dim(), x.len()));
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok((self.basis.transpose() * centered).into())
    }

    pub fn reconstruct(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        if f.len() != self.n_components() {
            return Err(Error::mismatch(self.n_components(), f.len()));
        }
        let out = &self.mean + &self.basis * DVector::from_column_slice(f.components());
        Ok(out.iter().copied().collect())
    }
}

/// A fitted extractor of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Extractor {
    Linear(SubspaceModel),
    Kernel(KernelModel),
}

impl Extractor {
    pub fn name(&self) -> &'static str {
        match self {
            Extractor::Linear(m) => m.kind().name(),
            Extractor::Kernel(_) => "kpca",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Extractor::Linear(m) => m.dim(),
            Extractor::Kernel(m) => m.dim(),
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<FeatureVector> {
        match self {
            Extractor::Linear(m) => m.project(x),
            Extractor::Kernel(m) => m.project(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_must_cover_classes() {
        let d = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(d.clone().with_labels(vec![0, 2, 2]).is_err());
        assert!(d.clone().with_labels(vec![0, 1]).is_err());
        assert_eq!(d.with_labels(vec![1, 0, 1]).unwrap().n_classes(), 2);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(DataMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn project_length_mismatch() {
        let m = SubspaceModel::from_parts(
            SubspaceKind::Pca,
            DVector::zeros(3),
            DMatrix::identity(3, 2),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(m.project(&[1.0, 2.0]).is_err());
        assert!(m.reconstruct(&FeatureVector::new(vec![1.0])).is_err());
    }
}
