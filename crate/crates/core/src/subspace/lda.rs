use nalgebra::{DMatrix, DVector};

use super::{fit_pca, DataMatrix, SubspaceKind, SubspaceModel};
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, symmetric_eigen};

/// Ridge added to the within-class scatter, relative to its mean diagonal.
pub const SW_RIDGE: f64 = 1e-6;

/// Between-class (`between`) and within-class (`within`) scatter with the
/// overall sample mean.
#[derive(Debug, Clone)]
pub struct Scatter {
    pub mean: DVector<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

fn labelled(data: &DataMatrix) -> Result<&[usize]> {
    data.labels().ok_or_else(|| Error::param("labels", "LDA requires class labels"))
}

/// `S_B = Σ_c M_c (m_c - m)(m_c - m)ᵀ`, `S_W = Σ_c Σ_{x ∈ X_c} (x - m_c)(x - m_c)ᵀ`.
pub fn scatter_matrices(data: &DataMatrix) -> Result<Scatter> {
    let labels = labelled(data)?;
    let dim = data.dim();
    let c = data.n_classes();
    let rows = data.rows();
    let mean = data.mean();

    let mut class_sums = vec![DVector::<f64>::zeros(dim); c];
    let mut counts = vec![0usize; c];
    for (i, &l) in labels.iter().enumerate() {
        class_sums[l] += rows.row(i).transpose();
        counts[l] += 1;
    }
    let class_means: Vec<DVector<f64>> = class_sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s / n as f64)
        .collect();

    let mut between = DMatrix::zeros(dim, dim);
    for (mc, &n) in class_means.iter().zip(&counts) {
        let d = mc - &mean;
        between += (&d * d.transpose()) * n as f64;
    }
    let mut within = DMatrix::zeros(dim, dim);
    for (i, &l) in labels.iter().enumerate() {
        let d = rows.row(i).transpose() - &class_means[l];
        within += &d * d.transpose();
    }
    Ok(Scatter {
        mean,
        between,
        within,
    })
}

/// Fisher discriminant: top-`k` eigenvectors of `(S_W + τI)⁻¹ S_B`, computed
/// through the Cholesky-symmetrized problem `L⁻¹ S_B L⁻ᵀ y = λ y`, `w = L⁻ᵀ y`.
/// Directions are scaled to unit length; eigenvalues are the Fisher ratios.
pub fn fit_lda(data: &DataMatrix, k: usize) -> Result<SubspaceModel> {
    let labels = labelled(data)?;
    let c = data.n_classes();
    if c < 2 {
        return Err(Error::param("labels", "LDA needs at least 2 classes"));
    }
    let mut counts = vec![0usize; c];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(small) = counts.iter().position(|&n| n < 2) {
        return Err(Error::param("labels", format!("class {small} has fewer than 2 samples")));
    }
    if k == 0 || k > c - 1 {
        return Err(Error::param("k", format!("{k} not in 1..={}", c - 1)));
    }

    let dim = data.dim();
    let Scatter {
        mean,
        between,
        within,
    } = scatter_matrices(data)?;
    let tr_b = between.trace();
    let tr_w = within.trace();
    if !(tr_b > 1e-12 * (tr_b + tr_w)) {
        return Err(Error::Degenerate("between-class scatter is zero (identical class means)".into()));
    }

    let tau = SW_RIDGE * tr_w / dim as f64;
    let regularized = &within + DMatrix::identity(dim, dim) * tau;
    let chol = regularized
        .cholesky()
        .ok_or_else(|| Error::SingularScatter("not positive definite after ridge".into()))?;
    let l = chol.l();
    let diag_max = l.diagonal().amax();
    let diag_min = l.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    if !(diag_min > 1e-7 * diag_max) {
        return Err(Error::SingularScatter(format!(
            "condition too large (pivot ratio {:e})",
            diag_min / diag_max
        )));
    }
    let half = l
        .solve_lower_triangular(&between)
        .ok_or_else(|| Error::SingularScatter("triangular solve failed".into()))?;
    let sym = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::SingularScatter("triangular solve failed".into()))?;
    let eig = symmetric_eigen(&sym)?;

    let lt = l.transpose();
    let mut columns = Vec::with_capacity(k);
    for j in 0..k {
        let w = lt
            .solve_upper_triangular(&eig.vectors.column(j).into_owned())
            .ok_or_else(|| Error::SingularScatter("triangular solve failed".into()))?;
        let norm = w.norm();
        columns.push(w / norm);
    }
    let mut basis = DMatrix::from_columns(&columns);
    canonicalize_signs(&mut basis);
    let eigenvalues = eig.values[..k].iter().map(|v| v.max(0.0)).collect();
    SubspaceModel::from_parts(SubspaceKind::Lda, mean, basis, eigenvalues)
}

/// The two stages of a PCLDA fit alongside the composed model.
#[derive(Debug, Clone)]
pub struct PcldaStages {
    pub model: SubspaceModel,
    pub pca: SubspaceModel,
    pub lda: SubspaceModel,
}

/// PCA down to `pca_k` dimensions, then LDA in that space, composed into one
/// linear map with basis `B_pca · B_lda`.
pub fn fit_pclda(data: &DataMatrix, pca_k: usize, lda_k: usize) -> Result<SubspaceModel> {
    fit_pclda_stages(data, pca_k, lda_k).map(|s| s.model)
}

pub fn fit_pclda_stages(data: &DataMatrix, pca_k: usize, lda_k: usize) -> Result<PcldaStages> {
    let labels = labelled(data)?.to_vec();
    let m = data.n_samples();
    let c = data.n_classes();
    if m <= c || pca_k > m - c {
        return Err(Error::param(
            "pca_k",
            format!("{pca_k} exceeds M - C = {} (within-class scatter would be singular)", m.saturating_sub(c)),
        ));
    }
    let pca = fit_pca(data, pca_k)?;
    let centered = data.centered(pca.mean());
    let reduced = centered * pca.basis();
    let reduced = DataMatrix::new(reduced)?.with_labels(labels)?;
    let lda = fit_lda(&reduced, lda_k)?;
    let basis = pca.basis() * lda.basis();
    // The PCA scores of the training set are centred, so the LDA-stage mean
    // is zero up to round-off.
    let model = SubspaceModel::from_parts(
        SubspaceKind::Pclda,
        pca.mean().clone(),
        basis,
        lda.eigenvalues().to_vec(),
    )?;
    Ok(PcldaStages { model, pca, lda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn clusters(centres: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &(x, y)) in centres.iter().enumerate() {
            for _ in 0..per {
                rows.push(vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
                labels.push(c);
            }
        }
        DataMatrix::from_rows(&rows).unwrap().with_labels(labels).unwrap()
    }

    #[test]
    fn two_class_direction_matches_closed_form() {
        let data = clusters(&[(0.0, 0.0), (1.0, 0.0)], 40, 0.3, 1);
        let model = fit_lda(&data, 1).unwrap();
        let s = scatter_matrices(&data).unwrap();
        let labels = data.labels().unwrap();
        let mean_of = |c: usize| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            idx.iter().map(|&i| data.rows().row(i).transpose()).sum::<DVector<f64>>() / idx.len() as f64
        };
        let analytic = s.within.clone().try_inverse().unwrap() * (mean_of(0) - mean_of(1));
        let w = model.basis().column(0);
        let cos = w.dot(&analytic) / (w.norm() * analytic.norm());
        assert!(cos.abs() >= 0.9999, "cos {cos}");
        assert!(w[0].abs() > 0.9);
    }

    #[test]
    fn identical_means_are_degenerate() {
        let rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let data = DataMatrix::from_rows(&rows).unwrap().with_labels(vec![0, 0, 1, 1]).unwrap();
        assert!(matches!(fit_lda(&data, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn three_clusters_match_closed_form_2x2_eigenvalues() {
        let data = clusters(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 10, 0.1, 2);
        let model = fit_lda(&data, 2).unwrap();
        let s = scatter_matrices(&data).unwrap();
        let tau = SW_RIDGE * s.within.trace() / 2.0;
        let sw = &s.within + DMatrix::identity(2, 2) * tau;
        // Oracle: eigenvalues of the 2x2 matrix Sw⁻¹ Sb from its characteristic polynomial.
        let m = sw.clone().try_inverse().unwrap() * &s.between;
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr / 4.0 - det).sqrt();
        let expected = [tr / 2.0 + disc, tr / 2.0 - disc];
        for (a, b) in model.eigenvalues().iter().zip(expected) {
            assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
        // And each direction satisfies the generalized eigen-equation.
        for j in 0..2 {
            let w = model.basis().column(j).into_owned();
            let r = &s.between * &w - (&sw * &w) * model.eigenvalues()[j];
            assert!(r.norm() < 1e-8 * s.between.norm());
        }
    }

    #[test]
    fn precondition_errors() {
        let data = clusters(&[(0.0, 0.0), (1.0, 0.0)], 3, 0.1, 3);
        assert!(fit_lda(&data, 2).is_err());
        let unlabelled = DataMatrix::new(data.rows().clone()).unwrap();
        assert!(fit_lda(&unlabelled, 1).is_err());
        let singleton = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![1.1]])
            .unwrap()
            .with_labels(vec![0, 1, 1])
            .unwrap();
        assert!(fit_lda(&singleton, 1).is_err());
    }

    #[test]
    fn zero_within_scatter_is_singular() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let data = DataMatrix::from_rows(&rows).unwrap().with_labels(vec![0, 0, 1, 1]).unwrap();
        assert!(matches!(fit_lda(&data, 1), Err(Error::SingularScatter(_))));
    }

    #[test]
    fn pclda_rejects_large_pca_k() {
        let data = clusters(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 2, 0.1, 4);
        assert!(fit_pclda(&data, 4, 1).is_err());
    }
}
