use nalgebra::{DMatrix, DVector};

use super::{DataMatrix, FeatureVector};
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, max_asymmetry, symmetric_eigen};

/// Eigenvalues (covariance-normalized) must exceed this to be retained.
pub const KPCA_EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `xᵀy`
    Linear,
    /// `(xᵀy + coef0)^degree`
    Polynomial { degree: u32, coef0: f64 },
    /// `exp(-gamma ‖x - y‖²)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, y),
            Kernel::Polynomial { degree, coef0 } => (dot(x, y) + coef0).powi(degree as i32),
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// RBF with `gamma = 1 / (dim · var)`, `var` the variance of all entries.
    pub fn rbf_auto(data: &DataMatrix) -> Kernel {
        let n = data.rows().len() as f64;
        let mean = data.rows().sum() / n;
        let var = data.rows().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let gamma = if var > 0.0 {
            1.0 / (data.dim() as f64 * var)
        } else {
            1.0 / data.dim() as f64
        };
        Kernel::Rbf { gamma }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Double-centres a kernel matrix: `K - 1K - K1 + 1K1` with `1` the matrix of `1/M`.
pub fn center_kernel_matrix(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::mismatch(format!("{n}x{n}"), format!("{}x{}", n, k.ncols())));
    }
    let asym = max_asymmetry(k);
    if asym > 1e-10 {
        return Err(Error::Asymmetric(asym));
    }
    let (row_means, grand) = kernel_means(k);
    Ok(DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - row_means[j] + grand))
}

fn kernel_means(k: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = k.nrows() as f64;
    let row_means = DVector::from_iterator(k.nrows(), k.row_iter().map(|r| r.sum() / n));
    let grand = row_means.sum() / n;
    (row_means, grand)
}

/// Kernel PCA model with everything needed for out-of-sample projection.
///
/// `dual_coeffs` column `j` is `v_j · sqrt(M - 1) / λ_j` for the unit
/// eigenvector `v_j` of the centred kernel matrix with raw eigenvalue `λ_j`:
/// the unit-norm feature-space axis, further divided by the square root of
/// its variance so every component of the training scores has unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    training: DMatrix<f64>,
    kernel: Kernel,
    dual_coeffs: DMatrix<f64>,
    kernel_row_means: DVector<f64>,
    kernel_grand_mean: f64,
    eigenvalues: Vec<f64>,
}

impl KernelModel {
    pub fn from_parts(
        training: DMatrix<f64>,
        kernel: Kernel,
        dual_coeffs: DMatrix<f64>,
        kernel_row_means: DVector<f64>,
        kernel_grand_mean: f64,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let m = training.nrows();
        if dual_coeffs.nrows() != m || kernel_row_means.len() != m {
            return Err(Error::mismatch(
                m,
                format!("dual {} / means {}", dual_coeffs.nrows(), kernel_row_means.len()),
            ));
        }
        if eigenvalues.len() != dual_coeffs.ncols() {
            return Err(Error::mismatch(dual_coeffs.ncols(), eigenvalues.len()));
        }
        Ok(KernelModel {
            training,
            kernel,
            dual_coeffs,
            kernel_row_means,
            kernel_grand_mean,
            eigenvalues,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn training_vectors(&self) -> &DMatrix<f64> {
        &self.training
    }

    pub fn dual_coeffs(&self) -> &DMatrix<f64> {
        &self.dual_coeffs
    }

    pub fn kernel_row_means(&self) -> &DVector<f64> {
        &self.kernel_row_means
    }

    pub fn kernel_grand_mean(&self) -> f64 {
        self.kernel_grand_mean
    }

    /// Variance of each retained component in feature space (`λ_j / (M - 1)`).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.training.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.dual_coeffs.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Result<FeatureVector> {
        if x.len() != self.dim() {
            return Err(Error::mismatch(self.dim(), x.len()));
        }
        let m = self.training.nrows();
        let kx: Vec<f64> = self
            .training
            .row_iter()
            .map(|row| {
                let t: Vec<f64> = row.iter().copied().collect();
                self.kernel.eval(x, &t)
            })
            .collect();
        let kx_mean = kx.iter().sum::<f64>() / m as f64;
        let centred = DVector::from_iterator(
            m,
            kx.iter()
                .zip(self.kernel_row_means.iter())
                .map(|(k, r)| k - kx_mean - r + self.kernel_grand_mean),
        );
        Ok((self.dual_coeffs.transpose() * centred).into())
    }
}

pub fn fit_kpca(data: &DataMatrix, kernel: Kernel, k: usize) -> Result<KernelModel> {
    let m = data.n_samples();
    if m < 2 {
        return Err(Error::param("data", "kernel PCA needs at least 2 samples"));
    }
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let rows: Vec<Vec<f64>> = (0..m).map(|i| data.row(i)).collect();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval(&rows[i], &rows[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let (row_means, grand) = kernel_means(&gram);
    let centred = center_kernel_matrix(&gram)?;
    let eig = symmetric_eigen(&centred)?;

    let denom = (m - 1) as f64;
    let positive = eig
        .values
        .iter()
        .take_while(|&&l| l / denom > KPCA_EIGEN_TOLERANCE)
        .count();
    if positive == 0 {
        return Err(Error::Degenerate("centred kernel matrix has no positive eigenvalues".into()));
    }
    if k > positive {
        return Err(Error::Degenerate(format!(
            "requested {k} components but only {positive} eigenvalues are positive"
        )));
    }
    let mut vectors = eig.vectors.columns(0, k).into_owned();
    canonicalize_signs(&mut vectors);
    let mut dual = vectors;
    for (j, mut col) in dual.column_iter_mut().enumerate() {
        col *= denom.sqrt() / eig.values[j];
    }
    let eigenvalues = eig.values[..k].iter().map(|l| l / denom).collect();
    KernelModel::from_parts(data.rows().clone(), kernel, dual, row_means, grand, eigenvalues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(m: usize, dim: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(m, dim, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn centering_trivial_cases() {
        let one = center_kernel_matrix(&DMatrix::from_element(1, 1, 3.7)).unwrap();
        assert_eq!(one[(0, 0)], 0.0);
        let ones = center_kernel_matrix(&DMatrix::from_element(4, 4, 1.0)).unwrap();
        assert!(ones.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_matches_four_term_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let k = &b + b.transpose();
        let kc = center_kernel_matrix(&k).unwrap();
        let n = 4.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut expected = k[(i, j)];
                for l in 0..4 {
                    expected -= k[(l, j)] / n + k[(i, l)] / n;
                    for q in 0..4 {
                        expected += k[(l, q)] / (n * n);
                    }
                }
                assert!((kc[(i, j)] - expected).abs() <= 1e-12);
            }
        }
        for i in 0..4 {
            assert!(kc.row(i).sum().abs() <= 1e-8);
            assert!(kc.column(i).sum().abs() <= 1e-8);
        }
    }

    #[test]
    fn centering_rejects_asymmetric() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(center_kernel_matrix(&k), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn training_samples_reproduce_fit_scores_with_unit_variance() {
        let data = random_data(12, 6, 1);
        let model = fit_kpca(&data, Kernel::rbf_auto(&data), 5).unwrap();
        let scores: Vec<FeatureVector> = (0..12).map(|i| model.project(&data.row(i)).unwrap()).collect();
        for j in 0..5 {
            let col: Vec<f64> = scores.iter().map(|f| f.components()[j]).collect();
            let mean = col.iter().sum::<f64>() / 12.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 11.0;
            assert!(mean.abs() < 1e-8);
            assert!((var - 1.0).abs() < 1e-6, "component {j}: variance {var}");
        }
        // Row i of the in-sample score matrix K_c · dual.
        let rows: Vec<Vec<f64>> = (0..12).map(|i| data.row(i)).collect();
        let gram = DMatrix::from_fn(12, 12, |i, j| model.kernel().eval(&rows[i], &rows[j]));
        let fit_scores = center_kernel_matrix(&gram).unwrap() * model.dual_coeffs();
        for (i, f) in scores.iter().enumerate() {
            for j in 0..5 {
                assert!((f.components()[j] - fit_scores[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn repeated_sample_has_no_spectrum() {
        let data = DataMatrix::from_rows(&vec![vec![0.2, 0.4, 0.1]; 5]).unwrap();
        assert!(matches!(fit_kpca(&data, Kernel::Linear, 1), Err(Error::Degenerate(_))));
        assert!(matches!(fit_kpca(&data, Kernel::Rbf { gamma: 1.0 }, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn tiny_gamma_flattens_kernel() {
        let data = random_data(4, 3, 2);
        let kernel = Kernel::Rbf { gamma: 1e-8 };
        let rows: Vec<Vec<f64>> = (0..4).map(|i| data.row(i)).collect();
        let gram = DMatrix::from_fn(4, 4, |i, j| kernel.eval(&rows[i], &rows[j]));
        assert!((gram.add_scalar(-1.0)).amax() < 1e-7);
        let centred = center_kernel_matrix(&gram).unwrap();
        let spec = symmetric_eigen(&centred).unwrap();
        assert!(spec.values.iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn too_many_components() {
        let data = random_data(5, 3, 3);
        // Linear kernel on 3-D data: at most 3 positive eigenvalues.
        assert!(fit_kpca(&data, Kernel::Linear, 4).is_err());
        assert!(fit_kpca(&data, Kernel::Linear, 3).is_ok());
    }

    #[test]
    fn polynomial_kernel_value() {
        let k = Kernel::Polynomial { degree: 2, coef0: 1.0 };
        assert_eq!(k.eval(&[1.0, 2.0], &[3.0, 0.5]), 25.0);
    }
}
