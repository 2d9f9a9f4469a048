//! Scale-mixture Gaussian transition kernel and the closed-form predicted
//! prior obtained by pushing the previous variational posterior through it.
//!
//! Per weight the kernel is
//! `π N(w | μ + α(w' - μ), σ²) + (1 - π) N(w | μ + α(w' - μ), σ²/c²)`.
//! Crossing its two components with the two posterior components gives a
//! four-component mixture whose terms follow from [`gaussian_push_through`].

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::math::{softplus, RandomSource, LN_2PI};
use crate::posterior::VariationalParams;

/// How the kernel's attraction point `μ` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    ZeroVector,
    FixedVector(Vec<f64>),
    /// `μ = m_{t-1}`, read once before each step's optimization.
    PreviousMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub pi: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub c: f64,
    pub mu: MuMode,
}

impl KernelParams {
    pub fn new(pi: f64, alpha: f64, sigma: f64, c: f64, mu: MuMode) -> Result<Self> {
        let k = Self {
            pi,
            alpha,
            sigma,
            c,
            mu,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return param_err(format!("kernel pi must lie in (0, 1), got {}", self.pi));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return param_err(format!("kernel alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return param_err(format!("kernel sigma must be positive, got {}", self.sigma));
        }
        if !(self.c > 1.0 && self.c.is_finite()) {
            return param_err(format!("kernel c must exceed 1, got {}", self.c));
        }
        if let MuMode::FixedVector(v) = &self.mu {
            if v.iter().any(|x| !x.is_finite()) {
                return param_err("fixed mu contains non-finite values");
            }
        }
        Ok(())
    }

    /// `μ` as a concrete vector for a weight vector of length `prev_mean.len()`.
    pub fn resolve_mu(&self, prev_mean: &[f64]) -> Result<Vec<f64>> {
        match &self.mu {
            MuMode::ZeroVector => Ok(vec![0.0; prev_mean.len()]),
            MuMode::PreviousMean => Ok(prev_mean.to_vec()),
            MuMode::FixedVector(v) if v.len() == prev_mean.len() => Ok(v.clone()),
            MuMode::FixedVector(v) => shape_err(format!(
                "fixed mu has {} entries but the network has {} weights",
                v.len(),
                prev_mean.len()
            )),
        }
    }

    /// Variance of the wide and narrow kernel components.
    pub fn noise_variances(&self) -> [f64; 2] {
        let wide = self.sigma * self.sigma;
        [wide, wide / (self.c * self.c)]
    }
}

/// Law of `μ - α(μ - W) + noise` for `W ~ N(mean1, var1)` and independent
/// `noise ~ N(0, var2)`: returns `(μ - α(μ - mean1), var2 + α² var1)`.
pub fn gaussian_push_through(mean1: f64, var1: f64, mu: f64, alpha: f64, var2: f64) -> Result<(f64, f64)> {
    if !(var1 >= 0.0) {
        return param_err(format!("var1 must be non-negative, got {var1}"));
    }
    if !(var2 > 0.0) {
        return param_err(format!("var2 must be positive, got {var2}"));
    }
    Ok(push_through(mean1, var1, mu, alpha, var2))
}

#[inline]
fn push_through(mean1: f64, var1: f64, mu: f64, alpha: f64, var2: f64) -> (f64, f64) {
    (mu - alpha * (mu - mean1), var2 + alpha * alpha * var1)
}

/// Per-weight four-component Gaussian mixture.
///
/// Component order: (posterior mean component, wide kernel),
/// (posterior zero component, wide), (mean, narrow), (zero, narrow).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPrior {
    pub log_weight: Vec<[f64; 4]>,
    pub mean: Vec<[f64; 4]>,
    pub var: Vec<[f64; 4]>,
    // log_weight - ½ log(2π var) and 1/var, cached for density evaluation.
    log_norm: Vec<[f64; 4]>,
    inv_var: Vec<[f64; 4]>,
}

impl PredictedPrior {
    /// Builds a prior from explicit components, checking that each weight's
    /// mixture weights sum to one and every variance is positive.
    pub fn from_components(log_weight: Vec<[f64; 4]>, mean: Vec<[f64; 4]>, var: Vec<[f64; 4]>) -> Result<Self> {
        if log_weight.len() != mean.len() || mean.len() != var.len() {
            return shape_err("component arrays differ in length");
        }
        for (lw, vv) in log_weight.iter().zip(&var) {
            let total: f64 = lw.iter().map(|l| l.exp()).sum();
            if (total - 1.0).abs() > 1e-12 {
                return param_err(format!("mixture weights sum to {total}, not 1"));
            }
            if vv.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return param_err("component variances must be positive and finite");
            }
        }
        let mut log_norm = Vec::with_capacity(var.len());
        let mut inv_var = Vec::with_capacity(var.len());
        for (lw, vv) in log_weight.iter().zip(&var) {
            let mut ln = [0.0; 4];
            let mut iv = [0.0; 4];
            for k in 0..4 {
                ln[k] = lw[k] - 0.5 * (LN_2PI + vv[k].ln());
                iv[k] = 1.0 / vv[k];
            }
            log_norm.push(ln);
            inv_var.push(iv);
        }
        Ok(Self {
            log_weight,
            mean,
            var,
            log_norm,
            inv_var,
        })
    }

    /// A diagonal Gaussian written as a degenerate mixture (all mass on the
    /// first component).
    pub fn gaussian(mean: &[f64], var: &[f64]) -> Result<Self> {
        if mean.len() != var.len() {
            return shape_err("mean and variance lengths differ");
        }
        let ninf = f64::NEG_INFINITY;
        Self::from_components(
            vec![[0.0, ninf, ninf, ninf]; mean.len()],
            mean.iter().map(|&m| [m; 4]).collect(),
            var.iter().map(|&v| [v; 4]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// One weight's log density and its derivative.
    #[inline]
    pub(crate) fn log_density_scalar(&self, v: usize, w: f64) -> (f64, f64) {
        let ln = &self.log_norm[v];
        let iv = &self.inv_var[v];
        let mu = &self.mean[v];
        let mut terms = [0.0; 4];
        let mut max = f64::NEG_INFINITY;
        for k in 0..4 {
            let d = w - mu[k];
            terms[k] = ln[k] - 0.5 * d * d * iv[k];
            max = max.max(terms[k]);
        }
        let mut total = 0.0;
        let mut dsum = 0.0;
        for k in 0..4 {
            let e = (terms[k] - max).exp();
            total += e;
            dsum += e * (mu[k] - w) * iv[k];
        }
        (max + total.ln(), dsum / total)
    }
}

/// The push-forward of `prev` through the kernel, in closed form.
pub fn predicted_prior(kernel: &KernelParams, prev: &VariationalParams) -> Result<PredictedPrior> {
    kernel.validate()?;
    let mu = kernel.resolve_mu(&prev.mean)?;
    let [wide, narrow] = kernel.noise_variances();
    let (ln_pi, ln_1m_pi) = (kernel.pi.ln(), (1.0 - kernel.pi).ln());
    let n = prev.len();
    let mut log_weight = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    for v in 0..n {
        let p = prev.keep()[v];
        let s = softplus(prev.s_tilde[v]);
        let s2 = s * s;
        let (ln_p, ln_1m_p) = (p.ln(), if p < 1.0 { (1.0 - p).ln() } else { f64::NEG_INFINITY });
        let (m_on, v_wide) = push_through(prev.mean[v], s2, mu[v], kernel.alpha, wide);
        let (m_off, _) = push_through(0.0, s2, mu[v], kernel.alpha, wide);
        let (_, v_narrow) = push_through(0.0, s2, mu[v], kernel.alpha, narrow);
        log_weight.push([ln_p + ln_pi, ln_1m_p + ln_pi, ln_p + ln_1m_pi, ln_1m_p + ln_1m_pi]);
        mean.push([m_on, m_off, m_on, m_off]);
        var.push([v_wide, v_wide, v_narrow, v_narrow]);
    }
    PredictedPrior::from_components(log_weight, mean, var)
}

/// `log Pπ̃(w)` summed over weights, with its gradient in `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPrior {
    pub value: f64,
    pub d_w: Vec<f64>,
}

pub fn log_prior_density(prior: &PredictedPrior, w: &[f64]) -> Result<LogPrior> {
    if w.len() != prior.len() {
        return shape_err(format!(
            "weight vector has {} entries, prior {}",
            w.len(),
            prior.len()
        ));
    }
    let mut value = 0.0;
    let mut d_w = Vec::with_capacity(w.len());
    for (v, &x) in w.iter().enumerate() {
        let (lp, d) = prior.log_density_scalar(v, x);
        value += lp;
        d_w.push(d);
    }
    Ok(LogPrior { value, d_w })
}

/// Draws `w ~ p(w_prev, ·)`. `prev_mean` supplies `μ` under
/// [`MuMode::PreviousMean`].
pub fn sample_transition(
    w_prev: &[f64],
    kernel: &KernelParams,
    prev_mean: &[f64],
    rs: &mut RandomSource,
) -> Result<Vec<f64>> {
    kernel.validate()?;
    if w_prev.len() != prev_mean.len() {
        return shape_err("w_prev and prev_mean lengths differ");
    }
    let mu = kernel.resolve_mu(prev_mean)?;
    let [wide, narrow] = kernel.noise_variances();
    let (sd_wide, sd_narrow) = (wide.sqrt(), narrow.sqrt());
    Ok(w_prev
        .iter()
        .zip(&mu)
        .map(|(&wp, &m)| {
            let sd = if rs.bernoulli_unchecked(kernel.pi) { sd_wide } else { sd_narrow };
            m + kernel.alpha * (wp - m) + sd * rs.standard_normal()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{inverse_softplus, log_gaussian_pdf};
    use std::collections::BTreeMap;

    #[test]
    fn push_through_examples() {
        assert_eq!(gaussian_push_through(0.4, 0.09, 1.0, 0.0, 0.01).unwrap(), (1.0, 0.01));
        let (m, v) = gaussian_push_through(0.4, 0.09, 1.0, 1.0, 0.01).unwrap();
        assert_eq!(m, 0.4);
        assert!((v - 0.1).abs() < 1e-15);
        let (m, v) = gaussian_push_through(0.4, 0.09, 1.0, 0.5, 0.01).unwrap();
        assert!((m - 0.7).abs() < 1e-15);
        assert!((v - 0.0325).abs() < 1e-15);
        assert!(gaussian_push_through(0.0, -1.0, 0.0, 0.5, 0.01).is_err());
        assert!(gaussian_push_through(0.0, 1.0, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelParams::new(0.0, 0.5, 1.0, 2.0, MuMode::ZeroVector).is_err());
        assert!(KernelParams::new(0.5, 1.5, 1.0, 2.0, MuMode::ZeroVector).is_err());
        assert!(KernelParams::new(0.5, 0.5, 0.0, 2.0, MuMode::ZeroVector).is_err());
        assert!(KernelParams::new(0.5, 0.5, 1.0, 1.0, MuMode::ZeroVector).is_err());
        let k = KernelParams::new(0.5, 0.5, 1.0, 2.0, MuMode::FixedVector(vec![0.0; 3])).unwrap();
        let prev = VariationalParams::with_keep(vec![0.0; 2], vec![0.0; 2], BTreeMap::new(), vec![1.0; 2]).unwrap();
        assert!(predicted_prior(&k, &prev).is_err());
    }

    #[test]
    fn degenerate_prior_matches_gaussian() {
        let prior = PredictedPrior::gaussian(&[0.3], &[0.25]).unwrap();
        let lp = log_prior_density(&prior, &[1.1]).unwrap();
        assert!((lp.value - log_gaussian_pdf(1.1, 0.3, 0.25).unwrap()).abs() < 1e-12);
        assert!((lp.d_w[0] - (0.3 - 1.1) / 0.25).abs() < 1e-12);
    }

    #[test]
    fn pure_random_walk_single_component() {
        // p = 1, alpha = 1: both surviving components sit at m_{t-1}; with pi
        // close to 1 the narrow one carries negligible mass.
        let k = KernelParams::new(1.0 - 1e-15, 1.0, 0.2, 3.0, MuMode::FixedVector(vec![5.0])).unwrap();
        let prev = VariationalParams::with_keep(vec![0.4], vec![inverse_softplus(0.3).unwrap()], BTreeMap::new(), vec![1.0])
            .unwrap();
        let prior = predicted_prior(&k, &prev).unwrap();
        assert!((prior.mean[0][0] - 0.4).abs() < 1e-15);
        assert!((prior.var[0][0] - (0.04 + 0.09)).abs() < 1e-12);
        assert_eq!(prior.log_weight[0][1], f64::NEG_INFINITY);
    }

    #[test]
    fn symmetric_prior_has_zero_gradient_at_origin() {
        let k = KernelParams::new(0.3, 0.0, 0.5, 10.0, MuMode::ZeroVector).unwrap();
        let prev = VariationalParams::with_keep(vec![2.0], vec![0.1], BTreeMap::new(), vec![0.5]).unwrap();
        let prior = predicted_prior(&k, &prev).unwrap();
        assert_eq!(log_prior_density(&prior, &[0.0]).unwrap().d_w[0], 0.0);
    }

    #[test]
    fn weights_sum_to_one() {
        let k = KernelParams::new(0.37, 0.8, 0.5, 10.0, MuMode::PreviousMean).unwrap();
        let prev = VariationalParams::with_keep(vec![2.0, -1.0], vec![0.1, -2.0], BTreeMap::new(), vec![0.3, 1.0]).unwrap();
        let prior = predicted_prior(&k, &prev).unwrap();
        for lw in &prior.log_weight {
            let total: f64 = lw.iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
