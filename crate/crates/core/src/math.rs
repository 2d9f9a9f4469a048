//! Scalar special functions, log-density kernels, a dense row-major matrix
//! and the seeded random source everything else draws from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(1 + exp(x))` without overflow for large `x` or underflow loss for
/// very negative `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic sigmoid.
#[inline]
pub fn softplus_deriv(x: f64) -> f64 {
    sigmoid(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] on `(0, ∞)`: the pre-activation whose softplus is `s`.
pub fn inverse_softplus(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return param_err(format!("inverse_softplus needs a finite positive value, got {s}"));
    }
    Ok(s + (-(-s).exp_m1()).ln())
}

/// Log density of `N(mean, var)` at `x`.
pub fn log_gaussian_pdf(x: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return param_err(format!("variance must be positive, got {var}"));
    }
    Ok(ln_normal(x, mean, var))
}

/// Unchecked Gaussian log density used in the hot loops; `var > 0` is an
/// invariant of every caller.
#[inline]
pub(crate) fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

/// `log Σ exp(t_i)`, shifted by the largest term.
pub fn log_sum_exp(log_terms: &[f64]) -> Result<f64> {
    if log_terms.is_empty() {
        return param_err("log_sum_exp of an empty list");
    }
    if log_terms.iter().any(|t| t.is_nan() || *t == f64::INFINITY) {
        return param_err("log_sum_exp terms must lie in [-inf, +inf)");
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return param_err("log_sum_exp: every term is -inf");
    }
    Ok(lse_unchecked(log_terms, max))
}

#[inline]
pub(crate) fn lse_unchecked(log_terms: &[f64], max: f64) -> f64 {
    let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return shape_err(format!("matrix dimensions must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return shape_err(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return shape_err("ragged rows");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return shape_err(format!("row {bad} out of range for {} rows", self.rows));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Contiguous row range `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return shape_err(format!("row range {start}..{end} invalid for {} rows", self.rows));
        }
        Self::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return shape_err(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Seeded pseudo-random source.
///
/// Backed by ChaCha8 keyed from a 64-bit seed. Independent sub-streams are
/// derived with [`RandomSource::child`], which mixes the parent seed with the
/// child id through SplitMix64; a child therefore depends only on
/// `(parent seed, id)` and never on how many draws the parent has made.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, id: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(id.wrapping_add(1))))
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One `{0, 1}` draw; `rate` is checked by the callers.
    #[inline]
    pub(crate) fn bernoulli_unchecked(&mut self, rate: f64) -> bool {
        self.uniform() < rate
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn sample_standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    pub fn sample_bernoulli(&mut self, rate: f64, n: usize) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&rate) {
            return param_err(format!("Bernoulli rate must lie in [0, 1], got {rate}"));
        }
        Ok((0..n)
            .map(|_| if self.bernoulli_unchecked(rate) { 1.0 } else { 0.0 })
            .collect())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
