//! Principal component analysis through a thin SVD of the centred data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k x d`, one unit-norm principal axis per row, by decreasing variance.
    pub components: Matrix,
    /// Variance captured by each axis (`σ_i² / (n - 1)`).
    pub explained_variance: Vec<f64>,
}

/// Fits the top `k` principal axes of `data` (one observation per row).
///
/// Each axis is oriented so that its first coordinate with magnitude above
/// `1e-12` is positive.
pub fn pca_fit(data: &Matrix, k: usize) -> Result<Pca> {
    let (n, d) = (data.rows(), data.cols());
    if k == 0 || k > n.min(d) {
        return param_err(format!("k = {k} must lie in 1..={}", n.min(d)));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| data.get(i, j) - mean[j]);
    let svd = centred.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Data("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (n.max(2) - 1) as f64;
    let mut comps = Vec::with_capacity(k * d);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
        if let Some(lead) = axis.iter().find(|v| v.abs() > 1e-12) {
            if *lead < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
        }
        comps.extend(axis);
        let s = svd.singular_values[idx];
        explained.push(s * s / denom);
    }
    Ok(Pca {
        mean,
        components: Matrix::new(k, d, comps)?,
        explained_variance: explained,
    })
}

impl Pca {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.components.cols()
    }

    /// Scores of each row: `(x - mean) Wᵀ`.
    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols() != self.dim() {
            return shape_err(format!("PCA fitted on {} columns, got {}", self.dim(), data.cols()));
        }
        let k = self.k();
        let mut out = Vec::with_capacity(data.rows() * k);
        let mut centred = vec![0.0; self.dim()];
        for i in 0..data.rows() {
            for ((c, x), m) in centred.iter_mut().zip(data.row(i)).zip(&self.mean) {
                *c = x - m;
            }
            for a in 0..k {
                out.push(self.components.row(a).iter().zip(&centred).map(|(w, c)| w * c).sum());
            }
        }
        Matrix::new(data.rows(), k, out)
    }

    /// Maps scores back to the original space, adding the mean.
    pub fn inverse(&self, scores: &Matrix) -> Result<Matrix> {
        if scores.cols() != self.k() {
            return shape_err(format!("PCA has {} components, got {} columns", self.k(), scores.cols()));
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(scores.rows() * d);
        for i in 0..scores.rows() {
            let mut row = self.mean.clone();
            for (a, &z) in scores.row(i).iter().enumerate() {
                for (r, w) in row.iter_mut().zip(self.components.row(a)) {
                    *r += z * w;
                }
            }
            out.extend(row);
        }
        Matrix::new(scores.rows(), d, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RandomSource;

    #[test]
    fn rejects_large_k() {
        let m = Matrix::zeros(3, 5);
        assert!(pca_fit(&m, 4).is_err());
        assert!(pca_fit(&m, 0).is_err());
    }

    #[test]
    fn full_rank_reconstruction_is_identity() {
        let mut rs = RandomSource::new(3);
        let data = Matrix::new(12, 4, rs.sample_standard_normal(48)).unwrap();
        let pca = pca_fit(&data, 4).unwrap();
        let back = pca.inverse(&pca.transform(&data).unwrap()).unwrap();
        assert!(back.sub(&data).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn leading_coordinate_is_positive() {
        let mut rs = RandomSource::new(8);
        let data = Matrix::new(20, 6, rs.sample_standard_normal(120)).unwrap();
        let pca = pca_fit(&data, 3).unwrap();
        for a in 0..3 {
            let lead = pca.components.row(a).iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
    }
}
