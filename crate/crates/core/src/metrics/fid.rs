use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::WindowFeatureSet;
use crate::error::{Error, Result};

/// Dimensions kept by the PCA fitted on the real descriptors.
pub const FID_PCA_DIMS: usize = 64;
/// Diagonal loading added to every covariance.
pub const FID_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Sample mean and unbiased covariance of the rows, plus the ridge.
    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::Metric(format!("need at least 2 feature vectors, got {n}")));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let centered = &rows - &mean;
        let mut cov = centered.t().dot(&centered) / (n - 1) as f64;
        cov.diag_mut().mapv_inplace(|v| v + FID_RIDGE);
        Ok(Gaussian {
            mean: to_vector(&mean),
            cov: to_matrix(&cov),
        })
    }
}

fn to_vector(a: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

fn to_matrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`. The cross trace is
/// the sum of singular values of `sqrt(S_a) sqrt(S_b)`, which avoids squaring
/// the covariances.
pub fn frechet_distance(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::Metric(format!(
            "feature dimensions differ: {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    let cross: f64 = (psd_sqrt(&a.cov) * psd_sqrt(&b.cov)).singular_values().sum();
    let d = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Principal directions of the real descriptors as a `dim x k` matrix with
/// `k <= FID_PCA_DIMS`, computed through the Gram matrix when there are fewer
/// rows than dimensions.
fn principal_directions(real: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let (n, d) = real.dim();
    let mean = real.mean_axis(Axis(0)).expect("non-empty");
    let centered = &real - &mean;
    let (values, vectors) = if n < d {
        let gram = to_matrix(&centered.dot(&centered.t()));
        let eig = SymmetricEigen::new(gram);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let eig = SymmetricEigen::new(to_matrix(&centered.t().dot(&centered)));
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let top = values[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| values[i] > 1e-10 * top && values[i] > 0.0)
        .take(FID_PCA_DIMS)
        .collect();
    let mut basis = Array2::zeros((d, kept.len().max(1)));
    for (k, &i) in kept.iter().enumerate() {
        if n < d {
            // right singular vector: X^T u / sqrt(lambda)
            let u = Array1::from_iter(vectors.column(i).iter().copied());
            let v = centered.t().dot(&u) / values[i].sqrt();
            basis.column_mut(k).assign(&v);
        } else {
            for r in 0..d {
                basis[[r, k]] = vectors[(r, i)];
            }
        }
    }
    if kept.is_empty() {
        basis[[0, 0]] = 1.0;
    }
    (mean, basis)
}

/// Fréchet distance between Gaussians fitted to PCA projections of the two
/// descriptor sets, with the projection fitted on `real`.
pub fn fid_descriptors(real: ArrayView2<'_, f64>, generated: ArrayView2<'_, f64>) -> Result<f64> {
    fid_blocks(&[real], &[generated])
}

fn fid_blocks(real: &[ArrayView2<'_, f64>], generated: &[ArrayView2<'_, f64>]) -> Result<f64> {
    let dims: Vec<usize> = real.iter().chain(generated).map(|b| b.ncols()).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Metric("descriptor dimensions differ between sets".into()));
    }
    let rows = |blocks: &[ArrayView2<'_, f64>]| blocks.iter().map(|b| b.nrows()).sum::<usize>();
    if rows(real) < 2 || rows(generated) < 2 {
        return Err(Error::Metric("fid needs at least 2 windows per set".into()));
    }
    let real_rows = ndarray::concatenate(Axis(0), real).map_err(|e| Error::Metric(e.to_string()))?;
    let (mean, basis) = principal_directions(real_rows.view());
    let project = |blocks: &[ArrayView2<'_, f64>]| -> Result<Array2<f64>> {
        let parts: Vec<Array2<f64>> = blocks.iter().map(|b| (b - &mean).dot(&basis)).collect();
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Metric(e.to_string()))
    };
    frechet_distance(
        &Gaussian::fit(project(real)?.view())?,
        &Gaussian::fit(project(generated)?.view())?,
    )
}

fn blocks(set: &WindowFeatureSet) -> Vec<ArrayView2<'_, f64>> {
    (0..set.clips.len()).map(|c| set.descriptors(c)).collect()
}

/// FID between two window sets; the PCA is fitted on `real`.
pub fn fid(real: &WindowFeatureSet, generated: &WindowFeatureSet) -> Result<f64> {
    if real.window != generated.window || real.width() != generated.width() {
        return Err(Error::Metric("window feature sets have different layouts".into()));
    }
    fid_blocks(&blocks(real), &blocks(generated))
}
