//! Randomized truncated SVD of sparse count matrices.
//!
//! Range finder on a Gaussian sketch with oversampling, refined by subspace
//! (power) iterations with re-orthonormalization at every step. Iteration
//! stops once the top-k singular value estimates settle. No centering is
//! applied, so sparsity is preserved.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::linalg::{jacobi_left_svd, orthonormalize, CsrMatrix, DenseMatrix, SparseVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdConfig {
    pub oversample: usize,
    pub min_power_iter: usize,
    pub max_power_iter: usize,
    /// Relative change of the top-k singular values below which iteration stops.
    pub tol: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            oversample: 10,
            min_power_iter: 2,
            max_power_iter: 100,
            tol: 1e-12,
        }
    }
}

/// Top-k right singular basis of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdProjection {
    /// `k × V`, orthonormal rows.
    pub components: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub power_iterations: usize,
}

impl SvdProjection {
    pub fn k(&self) -> usize {
        self.components.rows
    }

    pub fn input_dim(&self) -> usize {
        self.components.cols
    }

    /// `components · x`.
    pub fn project(&self, x: &SparseVector) -> Result<Vec<f64>, FeatureError> {
        if x.dim != self.input_dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim,
            });
        }
        Ok((0..self.k()).map(|r| x.dot_dense(self.components.row(r))).collect())
    }
}

/// Sketch singular values and right basis of `a` for a subspace `q` (m × l):
/// `B = qᵀ a`, returned as right singular vectors (columns, V × l) and values.
fn small_svd(a: &CsrMatrix, q: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    // Bᵀ = aᵀ q = Qb · R, and R = Ur Σ Vrᵀ gives B = Vr Σ (Qb Ur)ᵀ.
    let bt = a.tmul_dense(q);
    let qb = orthonormalize(&bt);
    let r = qb.transpose().matmul(&bt);
    let (ur, sigma) = jacobi_left_svd(&r);
    (qb.matmul(&ur), sigma)
}

pub fn fit_truncated_svd(
    matrix: &CsrMatrix,
    k: usize,
    seed: u64,
    config: &SvdConfig,
) -> Result<SvdProjection, FeatureError> {
    let (m, n) = (matrix.n_rows, matrix.n_cols);
    if k == 0 || k > m.min(n) {
        return Err(FeatureError::RankTooLarge { k, rows: m, cols: n });
    }
    let l = (k + config.oversample).min(m.min(n));
    let mut r = rng::seeded(seed);
    let omega = DenseMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut r));
    let mut q = orthonormalize(&matrix.mul_dense(&omega));
    let mut previous: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let (basis, sigma) = loop {
        if iterations >= config.min_power_iter {
            let (basis, sigma) = small_svd(matrix, &q);
            let settled = previous.as_ref().is_some_and(|p| {
                p.iter()
                    .zip(&sigma)
                    .take(k)
                    .all(|(a, b)| (a - b).abs() <= config.tol * b.abs().max(f64::MIN_POSITIVE))
            });
            if settled || iterations >= config.max_power_iter.max(config.min_power_iter) {
                break (basis, sigma);
            }
            previous = Some(sigma);
        }
        let z = orthonormalize(&matrix.tmul_dense(&q));
        q = orthonormalize(&matrix.mul_dense(&z));
        iterations += 1;
    };
    let components = DenseMatrix::from_fn(k, n, |i, j| basis[(j, i)]);
    Ok(SvdProjection {
        components,
        singular_values: sigma[..k].to_vec(),
        power_iterations: iterations,
    })
}

pub fn project_svd(vector: &SparseVector, proj: &SvdProjection) -> Result<Vec<f64>, FeatureError> {
    proj.project(vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_has_unit_singular_values() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let a = CsrMatrix::from_dense_rows(&rows);
        let p = fit_truncated_svd(&a, 4, 1, &SvdConfig::default()).unwrap();
        for s in &p.singular_values {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_errors() {
        let a = CsrMatrix::from_dense_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert!(matches!(fit_truncated_svd(&a, 3, 0, &SvdConfig::default()), Err(FeatureError::RankTooLarge { .. })));
        assert!(matches!(fit_truncated_svd(&a, 0, 0, &SvdConfig::default()), Err(FeatureError::RankTooLarge { .. })));
    }

    #[test]
    fn projection_dimension_checked_and_zero_maps_to_zero() {
        let a = CsrMatrix::from_dense_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]]);
        let p = fit_truncated_svd(&a, 1, 3, &SvdConfig::default()).unwrap();
        assert!(matches!(p.project(&SparseVector::empty(2)), Err(FeatureError::DimensionMismatch { .. })));
        assert_eq!(p.project(&SparseVector::empty(3)).unwrap(), vec![0.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = CsrMatrix::from_dense_rows(&[vec![1.0, 0.0, 2.0, 1.0], vec![0.0, 1.0, 1.0, 0.0], vec![3.0, 0.0, 0.0, 1.0]]);
        let p1 = fit_truncated_svd(&a, 2, 5, &SvdConfig::default()).unwrap();
        let p2 = fit_truncated_svd(&a, 2, 5, &SvdConfig::default()).unwrap();
        assert_eq!(p1, p2);
    }
}
