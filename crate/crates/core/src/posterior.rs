//! Factorized variational DropConnect posterior.
//!
//! Each weight `v` follows `p N(m, s²) + (1 - p) N(0, s²)` with
//! `s = softplus(s_tilde)`. Sampling uses `w = η m + ξ s` where
//! `η ~ Bernoulli(p)` and `ξ ~ N(0, 1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::math::{ln_normal, sigmoid, softplus, RandomSource};
use crate::net::NetworkShape;

/// Variational parameters `θ = (m, s_tilde)` plus the fixed DropConnect rates.
///
/// `drop_rates` maps an affine-layer index to `p`, the probability that a
/// connection weight draws from its mean component. Layers absent from the
/// map, and every bias, use `p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct VariationalParams {
    pub mean: Vec<f64>,
    pub s_tilde: Vec<f64>,
    drop_rates: BTreeMap<usize, f64>,
    /// `p` expanded per weight.
    keep: Vec<f64>,
}

/// Serialized form; the per-weight expansion is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct RawParams {
    mean: Vec<f64>,
    s_tilde: Vec<f64>,
    drop_rates: BTreeMap<usize, f64>,
    keep: Vec<f64>,
}

impl TryFrom<RawParams> for VariationalParams {
    type Error = crate::Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        Self::with_keep(raw.mean, raw.s_tilde, raw.drop_rates, raw.keep)
    }
}

impl From<VariationalParams> for RawParams {
    fn from(p: VariationalParams) -> Self {
        RawParams {
            mean: p.mean,
            s_tilde: p.s_tilde,
            drop_rates: p.drop_rates,
            keep: p.keep,
        }
    }
}

fn validate_rate(layer: usize, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return param_err(format!("drop rate for layer {layer} must lie in (0, 1], got {p}"));
    }
    Ok(())
}

/// Per-weight `p` for a network: connection weights of a listed layer get its
/// rate, everything else gets 1.
pub fn expand_drop_rates(shape: &NetworkShape, drop_rates: &BTreeMap<usize, f64>) -> Result<Vec<f64>> {
    let mut keep = vec![1.0; shape.num_weights()];
    for (&layer, &p) in drop_rates {
        validate_rate(layer, p)?;
        if layer >= shape.num_layers() {
            return param_err(format!(
                "drop rate given for layer {layer} but the network has {} affine layers",
                shape.num_layers()
            ));
        }
        keep[shape.layer_block(layer).weights].fill(p);
    }
    Ok(keep)
}

impl VariationalParams {
    pub fn new(
        shape: &NetworkShape,
        mean: Vec<f64>,
        s_tilde: Vec<f64>,
        drop_rates: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        let keep = expand_drop_rates(shape, &drop_rates)?;
        Self::with_keep(mean, s_tilde, drop_rates, keep)
    }

    /// Parameters with an explicit per-weight rate vector, for models that are
    /// not laid out as a [`NetworkShape`].
    pub fn with_keep(
        mean: Vec<f64>,
        s_tilde: Vec<f64>,
        drop_rates: BTreeMap<usize, f64>,
        keep: Vec<f64>,
    ) -> Result<Self> {
        if mean.len() != s_tilde.len() || mean.len() != keep.len() {
            return shape_err(format!(
                "mean ({}), s_tilde ({}) and rates ({}) must have equal length",
                mean.len(),
                s_tilde.len(),
                keep.len()
            ));
        }
        for (&l, &p) in &drop_rates {
            validate_rate(l, p)?;
        }
        if let Some(p) = keep.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return param_err(format!("per-weight rate must lie in (0, 1], got {p}"));
        }
        Ok(Self {
            mean,
            s_tilde,
            drop_rates,
            keep,
        })
    }

    /// Means drawn from `N(0, mean_std²)` (all zero when `mean_std == 0`) and a
    /// common scale `s`.
    pub fn init(
        shape: &NetworkShape,
        drop_rates: BTreeMap<usize, f64>,
        mean_std: f64,
        scale: f64,
        rs: &mut RandomSource,
    ) -> Result<Self> {
        let n = shape.num_weights();
        let mean = if mean_std > 0.0 {
            rs.sample_standard_normal(n).into_iter().map(|z| z * mean_std).collect()
        } else {
            vec![0.0; n]
        };
        let rho = crate::math::inverse_softplus(scale)?;
        Self::new(shape, mean, vec![rho; n], drop_rates)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn drop_rates(&self) -> &BTreeMap<usize, f64> {
        &self.drop_rates
    }

    /// Per-weight `p`.
    pub fn keep(&self) -> &[f64] {
        &self.keep
    }

    /// `s = softplus(s_tilde)` per weight.
    pub fn scales(&self) -> Vec<f64> {
        self.s_tilde.iter().map(|&r| softplus(r)).collect()
    }

    /// `E_q[w] = p m`, the weights used for point predictions.
    pub fn expected_weights(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.keep).map(|(m, p)| m * p).collect()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.len() == other.len() && self.keep == other.keep
    }
}

/// One reparameterization draw `ε = (η, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonDraw {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

pub fn sample_epsilon(params: &VariationalParams, rs: &mut RandomSource) -> EpsilonDraw {
    let n = params.len();
    let mut eta = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    for &p in &params.keep {
        eta.push(if p >= 1.0 || rs.bernoulli_unchecked(p) { 1.0 } else { 0.0 });
        xi.push(rs.standard_normal());
    }
    EpsilonDraw { eta, xi }
}

/// `w = η m + ξ softplus(s_tilde)`.
pub fn transform(params: &VariationalParams, eps: &EpsilonDraw) -> Result<Vec<f64>> {
    if eps.eta.len() != params.len() || eps.xi.len() != params.len() {
        return shape_err("epsilon draw does not match the parameter count");
    }
    Ok(params
        .mean
        .iter()
        .zip(&params.s_tilde)
        .zip(eps.eta.iter().zip(&eps.xi))
        .map(|((&m, &r), (&eta, &xi))| eta * m + xi * softplus(r))
        .collect())
}

/// `log q_θ(w)` with its partial derivatives at fixed `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogQ {
    pub value: f64,
    pub d_w: Vec<f64>,
    pub d_mean: Vec<f64>,
    pub d_s_tilde: Vec<f64>,
}

pub fn log_q(params: &VariationalParams, w: &[f64]) -> Result<LogQ> {
    if w.len() != params.len() {
        return shape_err(format!(
            "weight vector has {} entries, parameters {}",
            w.len(),
            params.len()
        ));
    }
    let n = w.len();
    let mut out = LogQ {
        value: 0.0,
        d_w: vec![0.0; n],
        d_mean: vec![0.0; n],
        d_s_tilde: vec![0.0; n],
    };
    for v in 0..n {
        let (val, dw, dm, dr) = log_q_scalar(params.keep[v], params.mean[v], params.s_tilde[v], w[v]);
        out.value += val;
        out.d_w[v] = dw;
        out.d_mean[v] = dm;
        out.d_s_tilde[v] = dr;
    }
    Ok(out)
}

/// One weight's `(log q, ∂/∂w, ∂/∂m, ∂/∂s_tilde)`.
#[inline]
pub(crate) fn log_q_scalar(p: f64, m: f64, rho: f64, w: f64) -> (f64, f64, f64, f64) {
    let s = softplus(rho);
    let var = s * s;
    let ds_drho = sigmoid(rho);
    let dm_res = w - m;
    // ∂/∂s of log N(w | μ, s²) is -1/s + (w-μ)²/s³.
    let ds_on = -1.0 / s + dm_res * dm_res / (var * s);
    if p >= 1.0 {
        let val = ln_normal(w, m, var);
        return (val, -dm_res / var, dm_res / var, ds_on * ds_drho);
    }
    let a = p.ln() + ln_normal(w, m, var);
    let b = (1.0 - p).ln() + ln_normal(w, 0.0, var);
    let max = a.max(b);
    let lse = max + ((a - max).exp() + (b - max).exp()).ln();
    let r = (a - lse).exp();
    let r0 = (b - lse).exp();
    let d_w = r * (-dm_res / var) + r0 * (-w / var);
    let d_m = r * dm_res / var;
    let ds_off = -1.0 / s + w * w / (var * s);
    let d_rho = (r * ds_on + r0 * ds_off) * ds_drho;
    (lse, d_w, d_m, d_rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{log_gaussian_pdf, LN_2PI};

    fn scalar_params(p: f64, m: f64, rho: f64) -> VariationalParams {
        VariationalParams::with_keep(vec![m], vec![rho], BTreeMap::new(), vec![p]).unwrap()
    }

    #[test]
    fn transform_examples() {
        let params = scalar_params(1.0, 2.0, 0.0);
        let w = transform(&params, &EpsilonDraw { eta: vec![1.0], xi: vec![1.0] }).unwrap();
        assert!((w[0] - (2.0 + std::f64::consts::LN_2)).abs() < 1e-15);
        let w = transform(&params, &EpsilonDraw { eta: vec![0.0], xi: vec![0.0] }).unwrap();
        assert_eq!(w, vec![0.0]);
        let w = transform(&params, &EpsilonDraw { eta: vec![1.0], xi: vec![0.0] }).unwrap();
        assert_eq!(w, vec![2.0]);
    }

    #[test]
    fn log_q_gaussian_mode() {
        let rho = crate::math::inverse_softplus(1.0).unwrap();
        let params = scalar_params(1.0, 0.3, rho);
        let lq = log_q(&params, &[0.3]).unwrap();
        assert!((lq.value + 0.5 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn log_q_identical_components() {
        let params = scalar_params(0.5, 0.0, 0.4);
        let s = softplus(0.4);
        for w in [-1.0, 0.0, 0.7] {
            let lq = log_q(&params, &[w]).unwrap();
            assert!((lq.value - log_gaussian_pdf(w, 0.0, s * s).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_degenerate_rate() {
        let shape = NetworkShape::new(vec![3, 4, 2], crate::net::Head::SoftmaxCategorical).unwrap();
        let mut rs = RandomSource::new(1);
        let params = VariationalParams::init(&shape, BTreeMap::new(), 0.1, 0.1, &mut rs).unwrap();
        let eps = sample_epsilon(&params, &mut rs);
        assert!(eps.eta.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn biases_never_drop() {
        let shape = NetworkShape::new(vec![3, 4, 2], crate::net::Head::SoftmaxCategorical).unwrap();
        let rates = BTreeMap::from([(0, 0.25), (1, 0.5)]);
        let keep = expand_drop_rates(&shape, &rates).unwrap();
        let b0 = shape.layer_block(0);
        assert!(keep[b0.weights].iter().all(|&p| p == 0.25));
        assert!(keep[b0.biases].iter().all(|&p| p == 1.0));
        assert!(expand_drop_rates(&shape, &BTreeMap::from([(2, 0.5)])).is_err());
        assert!(expand_drop_rates(&shape, &BTreeMap::from([(0, 0.0)])).is_err());
    }
}
