//! Reference computations written without the library under test.
//!
//! Everything here is deliberately naive: explicit loops, nested `Vec`s, plain
//! density arithmetic outside the log domain.

use statrs::distribution::{ContinuousCDF, Normal};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().cdf(x)
}

/// One scalar Gaussian-mixture component.
#[derive(Debug, Clone, Copy)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn mixture_pdf(components: &[Component], x: f64) -> f64 {
    components.iter().map(|c| c.weight * normal_pdf(x, c.mean, c.var)).sum()
}

pub fn mixture_cdf(components: &[Component], x: f64) -> f64 {
    components.iter().map(|c| c.weight * normal_cdf(x, c.mean, c.var)).sum()
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Upper critical count of a `Binomial(n, q)` at level `alpha`: the
/// smallest `k` with `P(X > k) <= alpha`.
pub fn binomial_upper_critical(n: u64, q: f64, alpha: f64) -> u64 {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let b = Binomial::new(q, n).unwrap();
    (0..=n).find(|&k| 1.0 - b.cdf(k) <= alpha).unwrap_or(n)
}

/// Histogram check of `samples` against a density on `bins` equal bins of
/// `[lo, hi]`. Expected bin masses come from quadrature of `pdf`.
pub struct HistogramCheck {
    pub bins: usize,
    pub max_abs_z: f64,
    pub beyond_3se: usize,
}

pub fn histogram_check(samples: &[f64], pdf: &dyn Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> HistogramCheck {
    let n = samples.len() as f64;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let mut max_abs_z: f64 = 0.0;
    let mut beyond = 0;
    for (b, &count) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let mass = adaptive_simpson(pdf, a, a + width, 1e-12);
        let se = (n * mass * (1.0 - mass)).sqrt().max(1.0);
        let z = (count as f64 - n * mass) / se;
        max_abs_z = max_abs_z.max(z.abs());
        if z.abs() > 3.0 {
            beyond += 1;
        }
    }
    HistogramCheck {
        bins,
        max_abs_z,
        beyond_3se: beyond,
    }
}

/// Fully connected ReLU network evaluated with nested vectors.
///
/// Flat weight layout per layer: the `n_out x n_in` matrix in row-major
/// order, followed by `n_out` biases.
pub struct NaiveMlp {
    pub sizes: Vec<usize>,
}

pub struct NaiveLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl NaiveMlp {
    pub fn layers(&self, flat: &[f64]) -> Vec<NaiveLayer> {
        let mut at = 0;
        let mut out = Vec::new();
        for pair in self.sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut w = vec![vec![0.0; n_in]; n_out];
            for (j, row) in w.iter_mut().enumerate() {
                for (i, x) in row.iter_mut().enumerate() {
                    *x = flat[at + j * n_in + i];
                }
            }
            at += n_in * n_out;
            let b = flat[at..at + n_out].to_vec();
            at += n_out;
            out.push(NaiveLayer { w, b });
        }
        assert_eq!(at, flat.len());
        out
    }

    /// Pre-activations of every layer for one input.
    fn pre_activations(&self, layers: &[NaiveLayer], x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs = Vec::new();
        let mut h = x.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let z: Vec<f64> = layer
                .w
                .iter()
                .zip(&layer.b)
                .map(|(row, b)| row.iter().zip(&h).map(|(a, c)| a * c).sum::<f64>() + b)
                .collect();
            h = if l + 1 < layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            zs.push(z);
        }
        zs
    }

    pub fn output(&self, flat: &[f64], x: &[f64]) -> Vec<f64> {
        self.pre_activations(&self.layers(flat), x).pop().unwrap()
    }

    pub fn log_softmax(z: &[f64]) -> Vec<f64> {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = z.iter().map(|v| (v - max).exp()).sum();
        z.iter().map(|v| v - max - total.ln()).collect()
    }

    /// Per-sample log-likelihood and its gradient for a softmax head
    /// (`Ok(class)`) or a Gaussian head (`Err((targets, obs_var))`).
    pub fn sample_log_lik_grad(&self, flat: &[f64], x: &[f64], target: Result<usize, (&[f64], f64)>) -> (f64, Vec<f64>) {
        let layers = self.layers(flat);
        let zs = self.pre_activations(&layers, x);
        let out = zs.last().unwrap();
        let (ll, mut delta) = match target {
            Ok(class) => {
                let lp = Self::log_softmax(out);
                let delta: Vec<f64> = lp
                    .iter()
                    .enumerate()
                    .map(|(k, l)| f64::from(u8::from(k == class)) - l.exp())
                    .collect();
                (lp[class], delta)
            }
            Err((y, var)) => {
                let ll = out
                    .iter()
                    .zip(y)
                    .map(|(o, t)| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (t - o).powi(2) / (2.0 * var))
                    .sum();
                (ll, out.iter().zip(y).map(|(o, t)| (t - o) / var).collect())
            }
        };
        let mut grads: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        for l in (0..layers.len()).rev() {
            let input: Vec<f64> = if l == 0 { x.to_vec() } else { zs[l - 1].iter().map(|v| v.max(0.0)).collect() };
            let gw: Vec<Vec<f64>> = delta.iter().map(|d| input.iter().map(|h| d * h).collect()).collect();
            grads.push((gw, delta.clone()));
            if l > 0 {
                let mut next = vec![0.0; input.len()];
                for (j, d) in delta.iter().enumerate() {
                    for (i, n) in next.iter_mut().enumerate() {
                        *n += layers[l].w[j][i] * d;
                    }
                }
                for (n, z) in next.iter_mut().zip(&zs[l - 1]) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        grads.reverse();
        let mut flat_grad = Vec::with_capacity(flat.len());
        for (gw, gb) in grads {
            for row in gw {
                flat_grad.extend(row);
            }
            flat_grad.extend(gb);
        }
        (ll, flat_grad)
    }
}

/// Static Bayes-by-Backprop: diagonal Gaussian posterior, scale-mixture prior
/// `π N(0, σ²) + (1 - π) N(0, σ²/c²)`, softplus parameterization.
pub struct NaiveBbp {
    pub pi: f64,
    pub sigma: f64,
    pub c: f64,
}

pub struct BbpEstimate {
    pub value: f64,
    pub grad_mean: Vec<f64>,
    pub grad_rho: Vec<f64>,
}

impl NaiveBbp {
    /// Averages `log q(w) - log P(w) - log g(w)` and its gradient over the
    /// given standard-normal draws `xi`, with `w = m + log(1 + e^ρ) ξ`.
    /// `log_lik` returns the data log-likelihood and its gradient in `w`.
    pub fn estimate(
        &self,
        mean: &[f64],
        rho: &[f64],
        xi: &[Vec<f64>],
        log_lik: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    ) -> BbpEstimate {
        let n = mean.len();
        let wide = self.sigma * self.sigma;
        let narrow = wide / (self.c * self.c);
        let mut value = 0.0;
        let mut grad_mean = vec![0.0; n];
        let mut grad_rho = vec![0.0; n];
        for draw in xi {
            let s: Vec<f64> = rho.iter().map(|r| (1.0 + r.exp()).ln()).collect();
            let w: Vec<f64> = (0..n).map(|v| mean[v] + s[v] * draw[v]).collect();
            let (ll, ll_grad) = log_lik(&w);
            value -= ll;
            for v in 0..n {
                let q = normal_pdf(w[v], mean[v], s[v] * s[v]);
                let pw = self.pi * normal_pdf(w[v], 0.0, wide);
                let pn = (1.0 - self.pi) * normal_pdf(w[v], 0.0, narrow);
                value += q.ln() - (pw + pn).ln();
                let dq_dw = -(w[v] - mean[v]) / (s[v] * s[v]);
                let dp_dw = (pw * (-w[v] / wide) + pn * (-w[v] / narrow)) / (pw + pn);
                let dq_dm = (w[v] - mean[v]) / (s[v] * s[v]);
                let dq_ds = -1.0 / s[v] + (w[v] - mean[v]).powi(2) / s[v].powi(3);
                let ds_drho = 1.0 / (1.0 + (-rho[v]).exp());
                let df_dw = dq_dw - dp_dw - ll_grad[v];
                grad_mean[v] += df_dw + dq_dm;
                grad_rho[v] += df_dw * draw[v] * ds_drho + dq_ds * ds_drho;
            }
        }
        let k = xi.len() as f64;
        grad_mean.iter_mut().for_each(|g| *g /= k);
        grad_rho.iter_mut().for_each(|g| *g /= k);
        BbpEstimate {
            value: value / k,
            grad_mean,
            grad_rho,
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Sample covariance (`n - 1` denominator) of row-major observations.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= (n - 1) as f64);
    cov
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
