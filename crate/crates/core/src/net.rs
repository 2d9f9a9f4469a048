//! Feed-forward ReLU networks over a flat weight vector, and their data
//! log-likelihood with reverse-mode gradient.
//!
//! Weight layout: for each affine layer `l` mapping `n_l -> n_{l+1}`, the
//! `n_{l+1} x n_l` weight matrix (row-major, one row per output unit) is
//! followed by the `n_{l+1}` biases. Layers are stored in order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::math::{Matrix, LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Log-softmax over the output units; targets are class indices.
    SoftmaxCategorical,
    /// Gaussian observation noise with fixed variance around the outputs.
    GaussianRegression { obs_var: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct NetworkShape {
    layer_sizes: Vec<usize>,
    head: Head,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawShape {
    layer_sizes: Vec<usize>,
    head: Head,
}

impl TryFrom<RawShape> for NetworkShape {
    type Error = crate::Error;
    fn try_from(raw: RawShape) -> Result<Self> {
        NetworkShape::new(raw.layer_sizes, raw.head)
    }
}

impl From<NetworkShape> for RawShape {
    fn from(s: NetworkShape) -> Self {
        RawShape {
            layer_sizes: s.layer_sizes,
            head: s.head,
        }
    }
}

/// Location of one affine layer inside the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBlock {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

impl NetworkShape {
    pub fn new(layer_sizes: Vec<usize>, head: Head) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return param_err(format!(
                "a network needs input, at least one hidden and an output layer; got sizes {layer_sizes:?}"
            ));
        }
        if layer_sizes.contains(&0) {
            return param_err(format!("layer sizes must be positive, got {layer_sizes:?}"));
        }
        if let Head::GaussianRegression { obs_var } = head {
            if !(obs_var > 0.0 && obs_var.is_finite()) {
                return param_err(format!("obs_var must be positive, got {obs_var}"));
            }
        }
        let mut offsets = vec![0];
        for pair in layer_sizes.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + (pair[0] + 1) * pair[1]);
        }
        Ok(Self {
            layer_sizes,
            head,
            offsets,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `|V| = Σ (n_{l-1} + 1) n_l`, weights plus biases.
    pub fn num_weights(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn layer_block(&self, l: usize) -> LayerBlock {
        let n_in = self.layer_sizes[l];
        let n_out = self.layer_sizes[l + 1];
        let start = self.offsets[l];
        LayerBlock {
            n_in,
            n_out,
            weights: start..start + n_in * n_out,
            biases: start + n_in * n_out..self.offsets[l + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One observation batch `D_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStepData {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl TimeStepData {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return shape_err(format!(
                "{} input rows but {} targets",
                inputs.rows(),
                targets.len()
            ));
        }
        let values = match &targets {
            Targets::Values(m) => m.as_slice(),
            Targets::Classes(_) => &[],
        };
        if inputs.as_slice().iter().chain(values).any(|v| !v.is_finite()) {
            return Err(crate::error::Error::Data("non-finite value in inputs or targets".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select_rows(indices)?;
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values(m) => Targets::Values(m.select_rows(indices)?),
        };
        Ok(Self { inputs, targets })
    }
}

/// Anything that supplies `log g(w, D)` and its gradient in `w`.
pub trait Emission {
    fn num_weights(&self) -> usize;

    fn log_likelihood(&self, w: &[f64], data: &TimeStepData) -> Result<f64>;

    /// Writes `∂ log g / ∂w` into `grad` (overwriting) and returns `log g`.
    fn log_likelihood_grad(&self, w: &[f64], data: &TimeStepData, grad: &mut [f64]) -> Result<f64>;
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl NetworkShape {
    fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_weights() {
            return shape_err(format!(
                "network expects {} weights, got {}",
                self.num_weights(),
                w.len()
            ));
        }
        Ok(())
    }

    fn check_data(&self, data: &TimeStepData) -> Result<()> {
        if data.inputs.cols() != self.input_dim() {
            return shape_err(format!(
                "network input dimension {} but data has {} columns",
                self.input_dim(),
                data.inputs.cols()
            ));
        }
        match (&data.targets, self.head) {
            (Targets::Classes(c), Head::SoftmaxCategorical) => {
                if let Some(bad) = c.iter().find(|&&y| y >= self.output_dim()) {
                    return param_err(format!(
                        "class index {bad} out of range for {} classes",
                        self.output_dim()
                    ));
                }
            }
            (Targets::Values(m), Head::GaussianRegression { .. }) => {
                if m.cols() != self.output_dim() {
                    return shape_err(format!(
                        "network output dimension {} but targets have {} columns",
                        self.output_dim(),
                        m.cols()
                    ));
                }
            }
            _ => return shape_err("target kind does not match the network head"),
        }
        Ok(())
    }

    /// Activations of every layer for a batch: `acts[0]` is the input,
    /// `acts[l]` for hidden `l` is post-ReLU, and the last entry holds the raw
    /// output pre-activations. Each is `batch x n_l`, row-major.
    fn activations(&self, w: &[f64], x: &Matrix) -> Vec<Vec<f64>> {
        let batch = x.rows();
        let last = self.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(x.as_slice().to_vec());
        for l in 0..self.num_layers() {
            let blk = self.layer_block(l);
            let wmat = &w[blk.weights.clone()];
            let bias = &w[blk.biases.clone()];
            let input = &acts[l];
            let mut out = vec![0.0; batch * blk.n_out];
            for j in 0..blk.n_out {
                let row = &wmat[j * blk.n_in..(j + 1) * blk.n_in];
                for b in 0..batch {
                    let z = bias[j] + dot(row, &input[b * blk.n_in..(b + 1) * blk.n_in]);
                    out[b * blk.n_out + j] = if l < last { z.max(0.0) } else { z };
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Forward pass. Softmax heads return per-row log-probabilities; regression
    /// heads return predictions.
    pub fn forward(&self, w: &[f64], x: &Matrix) -> Result<Matrix> {
        self.check_weights(w)?;
        if x.cols() != self.input_dim() {
            return shape_err(format!(
                "network input dimension {} but batch has {} columns",
                self.input_dim(),
                x.cols()
            ));
        }
        let mut out = self.activations(w, x).pop().unwrap();
        if let Head::SoftmaxCategorical = self.head {
            for row in out.chunks_mut(self.output_dim()) {
                log_softmax_in_place(row);
            }
        }
        Matrix::new(x.rows(), self.output_dim(), out)
    }

    /// Argmax class per row.
    pub fn predict_classes(&self, w: &[f64], x: &Matrix) -> Result<Vec<usize>> {
        let out = self.forward(w, x)?;
        Ok((0..out.rows())
            .map(|i| {
                let row = out.row(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    fn backprop(&self, w: &[f64], data: &TimeStepData, grad: Option<&mut [f64]>) -> f64 {
        let batch = data.len();
        let n_out = self.output_dim();
        let mut acts = self.activations(w, &data.inputs);
        let mut out = acts.pop().unwrap();

        // Loss value and output delta (∂ log g / ∂ pre-activation), in place.
        let mut ll = 0.0;
        match (&data.targets, self.head) {
            (Targets::Classes(classes), _) => {
                for (row, &y) in out.chunks_mut(n_out).zip(classes) {
                    log_softmax_in_place(row);
                    ll += row[y];
                    for v in row.iter_mut() {
                        *v = -v.exp();
                    }
                    row[y] += 1.0;
                }
            }
            (Targets::Values(targets), Head::GaussianRegression { obs_var }) => {
                let norm = -0.5 * (LN_2PI + obs_var.ln());
                for (b, row) in out.chunks_mut(n_out).enumerate() {
                    for (pred, &y) in row.iter_mut().zip(targets.row(b)) {
                        let r = y - *pred;
                        ll += norm - r * r / (2.0 * obs_var);
                        *pred = r / obs_var;
                    }
                }
            }
            _ => unreachable!("validated by check_data"),
        }

        let Some(grad) = grad else { return ll };
        grad.fill(0.0);
        let mut delta = out;
        for l in (0..self.num_layers()).rev() {
            let blk = self.layer_block(l);
            let input = &acts[l];
            {
                let (gw, gb) = grad[blk.weights.start..blk.biases.end].split_at_mut(blk.n_in * blk.n_out);
                for j in 0..blk.n_out {
                    let grow = &mut gw[j * blk.n_in..(j + 1) * blk.n_in];
                    for b in 0..batch {
                        let d = delta[b * blk.n_out + j];
                        if d != 0.0 {
                            axpy(d, &input[b * blk.n_in..(b + 1) * blk.n_in], grow);
                            gb[j] += d;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let wmat = &w[blk.weights.clone()];
            let mut prev = vec![0.0; batch * blk.n_in];
            for j in 0..blk.n_out {
                let row = &wmat[j * blk.n_in..(j + 1) * blk.n_in];
                for b in 0..batch {
                    let d = delta[b * blk.n_out + j];
                    if d != 0.0 {
                        axpy(d, row, &mut prev[b * blk.n_in..(b + 1) * blk.n_in]);
                    }
                }
            }
            // ReLU'(z) = 1 iff z > 0, so the derivative at exactly 0 is 0.
            for (p, &a) in prev.iter_mut().zip(input.iter()) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
            acts.pop();
        }
        ll
    }
}

fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

impl Emission for NetworkShape {
    fn num_weights(&self) -> usize {
        NetworkShape::num_weights(self)
    }

    fn log_likelihood(&self, w: &[f64], data: &TimeStepData) -> Result<f64> {
        self.check_weights(w)?;
        self.check_data(data)?;
        Ok(self.backprop(w, data, None))
    }

    fn log_likelihood_grad(&self, w: &[f64], data: &TimeStepData, grad: &mut [f64]) -> Result<f64> {
        self.check_weights(w)?;
        self.check_data(data)?;
        if grad.len() != w.len() {
            return shape_err("gradient buffer length differs from weight count");
        }
        Ok(self.backprop(w, data, Some(grad)))
    }
}
