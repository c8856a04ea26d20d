//! Kernel matrices: construction, centering and Hadamard products.
//!
//! The Gaussian kernel uses the `exp(-d² / (2σ²))` convention throughout.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance, relative to the largest absolute entry (floored at 1).
const SYMMETRY_TOL: f64 = 1e-12;
/// Largest matrix for which the debug-build PSD assertion runs.
const DEBUG_PSD_MAX_N: usize = 256;

/// A symmetric n×n kernel (Gram) matrix, optionally centered.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl KernelMatrix {
    /// Wraps `values` after checking that it is square, finite and symmetric.
    pub fn new(values: DMatrix<f64>, centered: bool) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Size(format!(
                "kernel matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("kernel matrix has non-finite entries".into()));
        }
        let scale = values.amax().max(1.0);
        let n = values.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (values[(i, j)] - values[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Numeric(format!(
                        "kernel matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let km = Self { values, centered };
        km.debug_check_psd();
        Ok(km)
    }

    /// Wraps a matrix that is symmetric by construction. Exact symmetry is
    /// enforced by averaging with the transpose.
    pub(crate) fn from_symmetric(mut values: DMatrix<f64>, centered: bool) -> Self {
        let n = values.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (values[(i, j)] + values[(j, i)]);
                values[(i, j)] = avg;
                values[(j, i)] = avg;
            }
        }
        let km = Self { values, centered };
        km.debug_check_psd();
        km
    }

    fn debug_check_psd(&self) {
        if cfg!(debug_assertions) && self.n() <= DEBUG_PSD_MAX_N && self.n() > 0 {
            let (min, max) = extreme_eigenvalues(&self.values);
            debug_assert!(
                min >= -1e-8 * max.abs().max(1e-300) - 1e-12,
                "kernel matrix is not PSD: min eigenvalue {min}, max {max}"
            );
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// `Tr[K²]`, the squared Frobenius norm of a symmetric matrix.
    pub fn trace_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `Tr[A B]` for symmetric `A = self` and `B = other`.
    pub fn trace_product(&self, other: &KernelMatrix) -> Result<f64> {
        same_size(self, other)?;
        Ok(self.values.component_mul(&other.values).sum())
    }

    /// Smallest eigenvalue; O(n³).
    pub fn min_eigenvalue(&self) -> f64 {
        extreme_eigenvalues(&self.values).0
    }
}

pub(crate) fn same_size(a: &KernelMatrix, b: &KernelMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::Size(format!(
            "kernel matrices of different sizes: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// (smallest, largest) eigenvalue of a symmetric matrix.
pub(crate) fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelParams {
    width: f64,
}

impl GaussianKernelParams {
    pub fn new(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Input(format!("Gaussian width must be positive, got {width}")));
        }
        Ok(Self { width })
    }

    pub fn width(&self) -> f64 {
        self.width
    }
}

fn validate_samples(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() < 2 {
        return Err(Error::Size(format!("need at least 2 samples, got {}", data.nrows())));
    }
    if data.ncols() == 0 {
        return Err(Error::Size("data has no columns".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("data contains non-finite values".into()));
    }
    Ok(())
}

/// Squared Euclidean distances between all rows of `data`.
pub(crate) fn squared_distances(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    data.row(i)
                        .iter()
                        .zip(data.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Gaussian kernel matrix over the rows of `data` (n×d).
pub fn gaussian_kernel_matrix(
    data: &DMatrix<f64>,
    params: GaussianKernelParams,
) -> Result<KernelMatrix> {
    validate_samples(data)?;
    let inv = 1.0 / (2.0 * params.width * params.width);
    let values = squared_distances(data).map(|d2| (-d2 * inv).exp());
    Ok(KernelMatrix::from_symmetric(values, false))
}

/// Median-heuristic width: `σ² = median_{i<j} ‖x_i − x_j‖² / 2`, taking the
/// lower median when the number of pairs is even.
pub fn median_heuristic_width(data: &DMatrix<f64>) -> Result<GaussianKernelParams> {
    validate_samples(data)?;
    let d2 = squared_distances(data);
    let n = data.nrows();
    let mut pairs: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(d2[(i, j)]);
        }
    }
    if pairs.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("all data points are identical".into()));
    }
    let mid = (pairs.len() - 1) / 2;
    let (_, median, _) = pairs.select_nth_unstable_by(mid, f64::total_cmp);
    let mut median = *median;
    if median == 0.0 {
        // More than half the pairs coincide; fall back to the median of the
        // nonzero distances so the width stays positive.
        let mut nonzero: Vec<f64> = pairs.into_iter().filter(|&v| v > 0.0).collect();
        let mid = (nonzero.len() - 1) / 2;
        median = *nonzero.select_nth_unstable_by(mid, f64::total_cmp).1;
    }
    GaussianKernelParams::new((median / 2.0).sqrt())
}

/// `H K H` with `H = I − 11ᵀ/n`.
pub fn center(k: &KernelMatrix) -> KernelMatrix {
    KernelMatrix::from_symmetric(center_values(&k.values), true)
}

/// `H A H` for any square matrix, PSD or not.
pub(crate) fn center_values(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let nf = n as f64;
    let row_means: Vec<f64> = a.row_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = a.column_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Elementwise product of two uncentered kernels on the same samples: the
/// kernel of the concatenated variable `(a, b)`.
pub fn product_kernel(ka: &KernelMatrix, kb: &KernelMatrix) -> Result<KernelMatrix> {
    same_size(ka, kb)?;
    if ka.centered || kb.centered {
        return Err(Error::Input("product_kernel expects uncentered kernels".into()));
    }
    Ok(KernelMatrix::from_symmetric(ka.values.component_mul(&kb.values), false))
}
