//! The approximate filtering recursion.
//!
//! Each step builds the predicted prior from the previous posterior, then
//! minimizes the Monte-Carlo estimate of
//! `KL(q_θ || Pπ̃_{t-1}) - E_q[log g(w, D_t)]`
//! by stochastic gradient descent on `θ = (m, s_tilde)`. The normalizing
//! constant of the correction step does not depend on `θ` and is dropped.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::kernel::{predicted_prior, KernelParams, MuMode, PredictedPrior};
use crate::math::{inverse_softplus, sigmoid, RandomSource};
use crate::net::{Emission, NetworkShape, TimeStepData};
use crate::posterior::{log_q_scalar, sample_epsilon, transform, EpsilonDraw, VariationalParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    VanillaGd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Share of the KL term carried by each minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlWeighting {
    /// `1/M` for `M` minibatches per pass.
    Uniform,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Minibatch {
    All,
    Size(usize),
}

/// Initialization of the variational means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanInit {
    Zeros,
    Normal { std: f64 },
    /// `N(0, 2 / fan_in)` for connection weights, zero biases.
    He,
}

/// Starting point `θ_t^{(0)}` of each step's optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// `θ_t^{(0)} = θ_{t-1}`.
    WarmStart,
    /// Re-draw `θ_t^{(0)}` every step.
    Fresh { mean: MeanInit, scale: f64 },
}

/// Per-step optimization settings. Omitted fields take the [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub mc_samples: usize,
    /// Passes over `D_t`. With `Minibatch::All` each pass is one update.
    #[serde(alias = "iterations")]
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub minibatch: Minibatch,
    pub kl_weighting: KlWeighting,
    pub start: StartMode,
}

impl Default for StepConfig {
    /// One Monte-Carlo draw, one full-batch pass, plain gradient descent with
    /// rate `1e-3`, warm start.
    fn default() -> Self {
        Self {
            mc_samples: 1,
            epochs: 1,
            learning_rate: 1e-3,
            optimizer: Optimizer::VanillaGd,
            minibatch: Minibatch::All,
            kl_weighting: KlWeighting::Uniform,
            start: StartMode::WarmStart,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return param_err("mc_samples must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return param_err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if let Minibatch::Size(0) = self.minibatch {
            return param_err("minibatch size must be positive");
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return param_err("Adam needs beta1, beta2 in [0, 1) and eps > 0");
            }
        }
        if let StartMode::Fresh { scale, .. } = self.start {
            if !(scale > 0.0) {
                return param_err("fresh-start scale must be positive");
            }
        }
        Ok(())
    }
}

/// Monte-Carlo estimate of the step objective and its gradient in `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub grad_mean: Vec<f64>,
    pub grad_s_tilde: Vec<f64>,
}

impl ObjectiveEstimate {
    pub fn grad_norm(&self) -> f64 {
        self.grad_mean
            .iter()
            .chain(&self.grad_s_tilde)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad_mean.iter().chain(&self.grad_s_tilde).all(|g| g.is_finite())
    }
}

/// Objective estimate for fixed draws (common random numbers).
///
/// Per draw the integrand is `kl_weight (log q(w) - log Pπ̃(w)) - log g(w, D)`
/// with `w = η m + ξ softplus(s_tilde)`. `data = None` drops the likelihood.
/// The gradient is the pathwise term `∂f/∂w · ∂w/∂θ` plus the explicit
/// `kl_weight ∂ log q / ∂θ` at fixed `w`, averaged over draws.
pub fn objective_with_draws<E: Emission + ?Sized>(
    emission: &E,
    theta: &VariationalParams,
    prior: &PredictedPrior,
    data: Option<&TimeStepData>,
    draws: &[EpsilonDraw],
    kl_weight: f64,
) -> Result<ObjectiveEstimate> {
    if draws.is_empty() {
        return param_err("at least one Monte-Carlo draw is required");
    }
    let n = theta.len();
    if prior.len() != n || emission.num_weights() != n {
        return crate::error::shape_err(format!(
            "parameters ({n}), prior ({}) and model ({}) sizes differ",
            prior.len(),
            emission.num_weights()
        ));
    }
    let mut value = 0.0;
    let mut grad_mean = vec![0.0; n];
    let mut grad_s_tilde = vec![0.0; n];
    let mut ll_grad = vec![0.0; n];
    let slopes: Vec<f64> = theta.s_tilde.iter().map(|&r| sigmoid(r)).collect();
    for eps in draws {
        let w = transform(theta, eps)?;
        let ll = match data {
            Some(d) => emission.log_likelihood_grad(&w, d, &mut ll_grad)?,
            None => {
                ll_grad.fill(0.0);
                0.0
            }
        };
        let mut kl = 0.0;
        for v in 0..n {
            let (lq, lq_dw, lq_dm, lq_dr) = log_q_scalar(theta.keep()[v], theta.mean[v], theta.s_tilde[v], w[v]);
            let (lp, lp_dw) = prior.log_density_scalar(v, w[v]);
            kl += lq - lp;
            let df_dw = kl_weight * (lq_dw - lp_dw) - ll_grad[v];
            grad_mean[v] += df_dw * eps.eta[v] + kl_weight * lq_dm;
            grad_s_tilde[v] += df_dw * eps.xi[v] * slopes[v] + kl_weight * lq_dr;
        }
        value += kl_weight * kl - ll;
    }
    let scale = 1.0 / draws.len() as f64;
    grad_mean.iter_mut().chain(grad_s_tilde.iter_mut()).for_each(|g| *g *= scale);
    Ok(ObjectiveEstimate {
        value: value * scale,
        grad_mean,
        grad_s_tilde,
    })
}

/// Draws `n_samples` fresh `ε` and evaluates [`objective_with_draws`].
pub fn step_objective<E: Emission + ?Sized>(
    emission: &E,
    theta: &VariationalParams,
    prior: &PredictedPrior,
    data: Option<&TimeStepData>,
    n_samples: usize,
    kl_weight: f64,
    rs: &mut RandomSource,
) -> Result<ObjectiveEstimate> {
    if n_samples == 0 {
        return param_err("N must be at least 1");
    }
    let draws: Vec<EpsilonDraw> = (0..n_samples).map(|_| sample_epsilon(theta, rs)).collect();
    objective_with_draws(emission, theta, prior, data, &draws, kl_weight)
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m1: Vec<f64>,
    m2: Vec<f64>,
    steps: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let buf = if matches!(kind, Optimizer::Adam { .. }) { 2 * n } else { 0 };
        Self {
            kind,
            lr,
            m1: vec![0.0; buf],
            m2: vec![0.0; buf],
            steps: 0,
        }
    }

    /// Descends on `[mean, s_tilde]`.
    fn update(&mut self, theta: &mut VariationalParams, est: &ObjectiveEstimate) {
        let n = theta.len();
        match self.kind {
            Optimizer::VanillaGd => {
                for v in 0..n {
                    theta.mean[v] -= self.lr * est.grad_mean[v];
                    theta.s_tilde[v] -= self.lr * est.grad_s_tilde[v];
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.steps += 1;
                let bc1 = 1.0 - beta1.powi(self.steps);
                let bc2 = 1.0 - beta2.powi(self.steps);
                let step = |param: &mut f64, g: f64, m1: &mut f64, m2: &mut f64| {
                    *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                    *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                    *param -= self.lr * (*m1 / bc1) / ((*m2 / bc2).sqrt() + eps);
                };
                let (m1_mean, m1_rho) = self.m1.split_at_mut(n);
                let (m2_mean, m2_rho) = self.m2.split_at_mut(n);
                for v in 0..n {
                    step(&mut theta.mean[v], est.grad_mean[v], &mut m1_mean[v], &mut m2_mean[v]);
                    step(&mut theta.s_tilde[v], est.grad_s_tilde[v], &mut m1_rho[v], &mut m2_rho[v]);
                }
            }
        }
    }
}

/// Per-step record emitted by the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    /// Objective estimate summed over each pass's minibatches.
    pub objective_trace: Vec<f64>,
    pub grad_norm_final: f64,
    pub wallclock_ms: f64,
}

impl StepDiagnostics {
    pub fn objective_first(&self) -> Option<f64> {
        self.objective_trace.first().copied()
    }

    pub fn objective_last(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }

    pub fn objective_min(&self) -> Option<f64> {
        self.objective_trace.iter().copied().reduce(f64::min)
    }
}

/// Weights for a fresh start, used by [`StartMode::Fresh`] and run initialization.
pub fn initial_params<E: InitLayout + ?Sized>(
    model: &E,
    like: &VariationalParams,
    mean: MeanInit,
    scale: f64,
    rs: &mut RandomSource,
) -> Result<VariationalParams> {
    let n = like.len();
    let means = match mean {
        MeanInit::Zeros => vec![0.0; n],
        MeanInit::Normal { std } => rs.sample_standard_normal(n).into_iter().map(|z| z * std).collect(),
        MeanInit::He => {
            let fan = model.fan_in();
            rs.sample_standard_normal(n)
                .into_iter()
                .zip(fan)
                .map(|(z, f)| match f {
                    Some(f) => z * (2.0 / f as f64).sqrt(),
                    None => 0.0,
                })
                .collect()
        }
    };
    let rho = inverse_softplus(scale)?;
    VariationalParams::with_keep(means, vec![rho; n], like.drop_rates().clone(), like.keep().to_vec())
}

/// Fan-in per weight (`None` for biases), used by [`MeanInit::He`].
pub trait InitLayout {
    fn fan_in(&self) -> Vec<Option<usize>>;
}

impl InitLayout for NetworkShape {
    fn fan_in(&self) -> Vec<Option<usize>> {
        let mut fan = vec![None; self.num_weights()];
        for l in 0..self.num_layers() {
            let blk = self.layer_block(l);
            fan[blk.weights].fill(Some(blk.n_in));
        }
        fan
    }
}

fn check_finite(est: &ObjectiveEstimate, t: usize, iteration: usize) -> Result<()> {
    if est.is_finite() {
        return Ok(());
    }
    let quantity = if est.value.is_finite() { "gradient" } else { "objective" };
    Err(Error::NonFinite {
        quantity,
        step: t,
        iteration,
    })
}

/// One filtering step: prediction through the kernel, then the projected
/// correction by stochastic optimization. Returns `θ_t` and diagnostics.
pub fn filter_step<E: Emission + InitLayout + ?Sized>(
    emission: &E,
    prev: &VariationalParams,
    data: &TimeStepData,
    kernel: &KernelParams,
    cfg: &StepConfig,
    t: usize,
    rs: &mut RandomSource,
) -> Result<(VariationalParams, StepDiagnostics)> {
    filter_step_observed(emission, prev, data, kernel, cfg, t, rs, &mut |_, _| Ok(()))
}

/// Epoch callback for [`filter_step_observed`]: receives the 1-based epoch
/// and the parameters after it.
pub type EpochObserver<'a> = dyn FnMut(usize, &VariationalParams) -> Result<()> + 'a;

/// [`filter_step`] with a callback after every epoch. The callback does not
/// touch the random stream, so results match [`filter_step`] exactly.
#[allow(clippy::too_many_arguments)]
pub fn filter_step_observed<E: Emission + InitLayout + ?Sized>(
    emission: &E,
    prev: &VariationalParams,
    data: &TimeStepData,
    kernel: &KernelParams,
    cfg: &StepConfig,
    t: usize,
    rs: &mut RandomSource,
    on_epoch: &mut EpochObserver<'_>,
) -> Result<(VariationalParams, StepDiagnostics)> {
    cfg.validate()?;
    if data.is_empty() {
        return param_err("a time step needs at least one observation");
    }
    let started = Instant::now();
    let prior = predicted_prior(kernel, prev)?;
    let mut theta = match cfg.start {
        StartMode::WarmStart => prev.clone(),
        StartMode::Fresh { mean, scale } => initial_params(emission, prev, mean, scale, rs)?,
    };
    let n = data.len();
    let batch = match cfg.minibatch {
        Minibatch::All => n,
        Minibatch::Size(b) => b.min(n),
    };
    let batches = n.div_ceil(batch);
    let kl_weight = match cfg.kl_weighting {
        KlWeighting::Uniform => 1.0 / batches as f64,
        KlWeighting::One => 1.0,
    };
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, theta.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut grad_norm_final = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut iteration = 0;
    for epoch in 1..=cfg.epochs {
        let mut epoch_value = 0.0;
        if batches > 1 {
            rs.shuffle(&mut order);
        }
        for chunk in order.chunks(batch) {
            let subset;
            let d = if batches == 1 {
                data
            } else {
                subset = data.select(chunk)?;
                &subset
            };
            let est = step_objective(emission, &theta, &prior, Some(d), cfg.mc_samples, kl_weight, rs)?;
            check_finite(&est, t, iteration)?;
            epoch_value += est.value;
            grad_norm_final = est.grad_norm();
            opt.update(&mut theta, &est);
            iteration += 1;
        }
        trace.push(epoch_value);
        on_epoch(epoch, &theta)?;
    }
    if theta.mean.iter().chain(&theta.s_tilde).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            quantity: "parameters",
            step: t,
            iteration,
        });
    }
    Ok((
        theta,
        StepDiagnostics {
            t,
            objective_trace: trace,
            grad_norm_final,
            wallclock_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

/// Filtering history `θ_1..θ_T` with the kernel and network that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub shape: NetworkShape,
    pub kernel: KernelParams,
    /// `θ_0`; the prior for the first step is its push-forward.
    pub initial: VariationalParams,
    pub history: Vec<VariationalParams>,
}

impl FilterState {
    pub fn new(shape: NetworkShape, kernel: KernelParams, initial: VariationalParams) -> Result<Self> {
        kernel.validate()?;
        if initial.len() != shape.num_weights() {
            return crate::error::shape_err("initial parameters do not match the network");
        }
        Ok(Self {
            shape,
            kernel,
            initial,
            history: Vec::new(),
        })
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.history.len()
    }

    pub fn latest(&self) -> &VariationalParams {
        self.history.last().unwrap_or(&self.initial)
    }

    /// `θ_t`, 1-based; `t = 0` is the initial condition.
    pub fn at(&self, t: usize) -> Option<&VariationalParams> {
        if t == 0 {
            Some(&self.initial)
        } else {
            self.history.get(t - 1)
        }
    }

    /// Runs the next step on `data`. The step's random stream is the child of
    /// `root` keyed by the step index, so stopping and resuming reproduces an
    /// uninterrupted run.
    pub fn advance(&mut self, data: &TimeStepData, cfg: &StepConfig, root: &RandomSource) -> Result<StepDiagnostics> {
        self.advance_observed(data, cfg, root, &mut |_, _| Ok(()))
    }

    /// [`FilterState::advance`] with a per-epoch callback.
    pub fn advance_observed(
        &mut self,
        data: &TimeStepData,
        cfg: &StepConfig,
        root: &RandomSource,
        on_epoch: &mut EpochObserver<'_>,
    ) -> Result<StepDiagnostics> {
        let t = self.steps() + 1;
        let mut rs = root.child(t as u64);
        let (next, diag) =
            filter_step_observed(&self.shape, self.latest(), data, &self.kernel, cfg, t, &mut rs, on_epoch)?;
        self.history.push(next);
        Ok(diag)
    }

    /// True for a single-step run with a static zero-centred prior and no
    /// DropConnect, i.e. plain Bayes by Backprop.
    pub fn is_bbp_degenerate(&self, total_steps: usize) -> bool {
        total_steps == 1
            && self.kernel.alpha == 0.0
            && matches!(self.kernel.mu, MuMode::ZeroVector)
            && self.initial.keep().iter().all(|&p| p == 1.0)
    }
}

/// Folds [`filter_step`] over the stream starting from `initial`.
pub fn run_filter(
    shape: &NetworkShape,
    stream: &[TimeStepData],
    kernel: &KernelParams,
    cfg: &StepConfig,
    initial: VariationalParams,
    rs: &RandomSource,
) -> Result<(FilterState, Vec<StepDiagnostics>)> {
    if stream.is_empty() {
        return param_err("the data stream is empty");
    }
    let mut state = FilterState::new(shape.clone(), kernel.clone(), initial)?;
    let mut diags = Vec::with_capacity(stream.len());
    for data in stream {
        diags.push(state.advance(data, cfg, rs)?);
    }
    Ok((state, diags))
}

/// Options for [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub instances: usize,
    pub batch: usize,
    pub mc_samples: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            instances: 5,
            batch: 6,
            mc_samples: 5,
            step: 1e-6,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Signature of a gradient routine under test.
pub type GradientFn<'a> =
    dyn Fn(&NetworkShape, &VariationalParams, &PredictedPrior, &TimeStepData, &[EpsilonDraw]) -> Result<ObjectiveEstimate> + 'a;

/// Relative discrepancy between an analytic derivative and finite
/// differences of `f` around `x` with step `h`.
///
/// The central difference is used unless it straddles a ReLU kink; in that
/// case one of the one-sided differences lies entirely on the smooth side, so
/// the smallest of the three discrepancies is reported.
pub fn finite_difference_error(analytic: f64, f_plus: f64, f_center: f64, f_minus: f64, h: f64) -> f64 {
    let rel = |fd: f64| (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
    let central = rel((f_plus - f_minus) / (2.0 * h));
    let forward = rel((f_plus - f_center) / h);
    let backward = rel((f_center - f_minus) / h);
    central.min(forward).min(backward)
}

/// Compares the analytic objective gradient with common-random-number finite
/// differences in every coordinate of `(m, s_tilde)` on random instances.
pub fn gradient_check(
    shape: &NetworkShape,
    kernel: &KernelParams,
    drop_rates: &std::collections::BTreeMap<usize, f64>,
    opts: &GradCheckOptions,
    rs: &mut RandomSource,
) -> Result<GradCheckReport> {
    let analytic = |s: &NetworkShape, th: &VariationalParams, pr: &PredictedPrior, d: &TimeStepData, e: &[EpsilonDraw]| {
        objective_with_draws(s, th, pr, Some(d), e, 1.0)
    };
    gradient_check_with(shape, kernel, drop_rates, opts, rs, &analytic)
}

pub fn gradient_check_with(
    shape: &NetworkShape,
    kernel: &KernelParams,
    drop_rates: &std::collections::BTreeMap<usize, f64>,
    opts: &GradCheckOptions,
    rs: &mut RandomSource,
    grad_fn: &GradientFn<'_>,
) -> Result<GradCheckReport> {
    let mut max_rel_error: f64 = 0.0;
    let mut coordinates = 0;
    for _ in 0..opts.instances {
        let (theta, prior, data) = random_instance(shape, kernel, drop_rates, opts.batch, rs)?;
        let draws: Vec<EpsilonDraw> = (0..opts.mc_samples).map(|_| sample_epsilon(&theta, rs)).collect();
        let est = grad_fn(shape, &theta, &prior, &data, &draws)?;
        let center = draw_pieces(shape, &theta, &prior, &data, &draws)?;
        let h = opts.step;
        for v in 0..theta.len() {
            for which in 0..2 {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                let (p, m, analytic) = if which == 0 {
                    (&mut plus.mean[v], &mut minus.mean[v], est.grad_mean[v])
                } else {
                    (&mut plus.s_tilde[v], &mut minus.s_tilde[v], est.grad_s_tilde[v])
                };
                *p += h;
                *m -= h;
                let up = objective_change(shape, &plus, &prior, &data, &draws, &center, v)?;
                let down = objective_change(shape, &minus, &prior, &data, &draws, &center, v)?;
                let err = finite_difference_error(analytic, up, 0.0, down, h);
                max_rel_error = max_rel_error.max(if err.is_nan() { f64::INFINITY } else { err });
                coordinates += 1;
            }
        }
    }
    Ok(GradCheckReport {
        instances: opts.instances,
        coordinates,
        max_rel_error,
        tolerance: opts.tolerance,
        passed: max_rel_error < opts.tolerance,
    })
}

/// Per draw: the weights, the log-likelihood and every weight's
/// `log q - log Pπ̃` term.
struct DrawPieces {
    w: Vec<f64>,
    log_lik: f64,
    kl_terms: Vec<f64>,
}

fn draw_pieces(
    shape: &NetworkShape,
    theta: &VariationalParams,
    prior: &PredictedPrior,
    data: &TimeStepData,
    draws: &[EpsilonDraw],
) -> Result<Vec<DrawPieces>> {
    draws
        .iter()
        .map(|eps| {
            let w = transform(theta, eps)?;
            let log_lik = shape.log_likelihood(&w, data)?;
            let kl_terms = (0..w.len()).map(|v| kl_term(theta, prior, v, w[v])).collect();
            Ok(DrawPieces { w, log_lik, kl_terms })
        })
        .collect()
}

fn kl_term(theta: &VariationalParams, prior: &PredictedPrior, v: usize, w: f64) -> f64 {
    log_q_scalar(theta.keep()[v], theta.mean[v], theta.s_tilde[v], w).0 - prior.log_density_scalar(v, w).0
}

/// Objective at `moved` minus the objective at the centre, where `moved`
/// differs from the centre in coordinate `v` only.
///
/// Only weight `v`'s KL term and the likelihood can change, so the difference
/// is assembled from those pieces. Subtracting two full objective values
/// would lose every digit below the objective's own rounding unit.
fn objective_change(
    shape: &NetworkShape,
    moved: &VariationalParams,
    prior: &PredictedPrior,
    data: &TimeStepData,
    draws: &[EpsilonDraw],
    center: &[DrawPieces],
    v: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (eps, c) in draws.iter().zip(center) {
        let w = transform(moved, eps)?;
        let d_lik = if w[v] == c.w[v] { 0.0 } else { shape.log_likelihood(&w, data)? - c.log_lik };
        total += kl_term(moved, prior, v, w[v]) - c.kl_terms[v] - d_lik;
    }
    Ok(total / draws.len() as f64)
}

fn random_instance(
    shape: &NetworkShape,
    kernel: &KernelParams,
    drop_rates: &std::collections::BTreeMap<usize, f64>,
    batch: usize,
    rs: &mut RandomSource,
) -> Result<(VariationalParams, PredictedPrior, TimeStepData)> {
    use crate::math::Matrix;
    use crate::net::{Head, Targets};

    let n = shape.num_weights();
    let random_params = |rs: &mut RandomSource| -> Result<VariationalParams> {
        let mean = (0..n).map(|_| 0.6 * rs.standard_normal()).collect();
        let s_tilde = (0..n)
            .map(|_| inverse_softplus(0.05 + 0.45 * rs.uniform()))
            .collect::<Result<Vec<_>>>()?;
        VariationalParams::new(shape, mean, s_tilde, drop_rates.clone())
    };
    let prev = random_params(rs)?;
    let theta = random_params(rs)?;
    let prior = predicted_prior(kernel, &prev)?;
    let inputs = Matrix::new(batch, shape.input_dim(), rs.sample_standard_normal(batch * shape.input_dim()))?;
    let targets = match shape.head() {
        Head::SoftmaxCategorical => Targets::Classes((0..batch).map(|_| rs.index(shape.output_dim())).collect()),
        Head::GaussianRegression { .. } => Targets::Values(Matrix::new(
            batch,
            shape.output_dim(),
            rs.sample_standard_normal(batch * shape.output_dim()),
        )?),
    };
    Ok((theta, prior, TimeStepData::new(inputs, targets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Head;
    use std::collections::BTreeMap;

    fn cfg(epochs: usize) -> StepConfig {
        StepConfig {
            mc_samples: 1,
            epochs,
            learning_rate: 1e-3,
            optimizer: Optimizer::VanillaGd,
            minibatch: Minibatch::All,
            kl_weighting: KlWeighting::Uniform,
            start: StartMode::WarmStart,
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let shape = NetworkShape::new(vec![2, 3, 2], Head::SoftmaxCategorical).unwrap();
        let mut rs = RandomSource::new(5);
        let prev = VariationalParams::init(&shape, BTreeMap::new(), 0.3, 0.1, &mut rs).unwrap();
        let kernel = KernelParams::new(0.5, 0.5, 0.3, 4.0, MuMode::PreviousMean).unwrap();
        let data = TimeStepData::new(
            crate::math::Matrix::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            crate::net::Targets::Classes(vec![0, 1]),
        )
        .unwrap();
        let (next, diag) = filter_step(&shape, &prev, &data, &kernel, &cfg(0), 1, &mut rs).unwrap();
        assert_eq!(next, prev);
        assert!(diag.objective_trace.is_empty());
    }

    #[test]
    fn rejects_zero_samples() {
        let shape = NetworkShape::new(vec![2, 3, 2], Head::SoftmaxCategorical).unwrap();
        let mut rs = RandomSource::new(5);
        let theta = VariationalParams::init(&shape, BTreeMap::new(), 0.3, 0.1, &mut rs).unwrap();
        let prior = PredictedPrior::gaussian(&theta.mean, &vec![1.0; theta.len()]).unwrap();
        assert!(step_objective(&shape, &theta, &prior, None, 0, 1.0, &mut rs).is_err());
        let mut bad = cfg(1);
        bad.mc_samples = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let shape = NetworkShape::new(vec![3, 4, 2], Head::SoftmaxCategorical).unwrap();
        let kernel = KernelParams::new(0.5, 0.5, 0.5, 5.0, MuMode::ZeroVector).unwrap();
        let opts = GradCheckOptions {
            instances: 2,
            ..Default::default()
        };
        let corrupt = |s: &NetworkShape, th: &VariationalParams, pr: &PredictedPrior, d: &TimeStepData, e: &[EpsilonDraw]| {
            let mut est = objective_with_draws(s, th, pr, Some(d), e, 1.0)?;
            est.grad_s_tilde.iter_mut().for_each(|g| *g = -*g);
            Ok(est)
        };
        let report =
            gradient_check_with(&shape, &kernel, &BTreeMap::new(), &opts, &mut RandomSource::new(1), &corrupt).unwrap();
        assert!(!report.passed, "{report:?}");
        let report = gradient_check(&shape, &kernel, &BTreeMap::new(), &opts, &mut RandomSource::new(1)).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
