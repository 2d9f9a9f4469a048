use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_name: String,
    pub per_step: Vec<f64>,
    pub aggregate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return shape_err(format!("{} labels but {} predictions", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Data("accuracy of an empty step".into()));
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Per-step accuracy and its unweighted mean over steps.
pub fn mean_accuracy_over_time(truth: &[Vec<usize>], predicted: &[Vec<usize>]) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return shape_err(format!("{} steps of labels but {} of predictions", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Data("no steps to score".into()));
    }
    let per_step = truth
        .iter()
        .zip(predicted)
        .map(|(t, p)| accuracy(t, p))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok(EvalReport {
        metric_name: "mean_accuracy".into(),
        per_step,
        aggregate,
        config: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseNormalization {
    /// `sqrt(Σ_t ‖y_t - ŷ_t‖² / Σ_t ‖y_t‖²)`.
    #[default]
    RatioOfSums,
    /// `sqrt(Σ_t ‖y_t - ŷ_t‖² / ‖y_t‖²)`.
    PerStepRatio,
}

/// Standardized RMSE over all rows (one time step per row).
pub fn standardized_rmse(truth: &Matrix, predicted: &Matrix) -> Result<f64> {
    let all: Vec<usize> = (0..truth.rows()).collect();
    standardized_rmse_on(truth, predicted, &all, RmseNormalization::RatioOfSums)
}

/// Standardized RMSE restricted to the rows in `steps`.
pub fn standardized_rmse_on(
    truth: &Matrix,
    predicted: &Matrix,
    steps: &[usize],
    mode: RmseNormalization,
) -> Result<f64> {
    if truth.rows() != predicted.rows() || truth.cols() != predicted.cols() {
        return shape_err(format!(
            "truth is {}x{} but prediction is {}x{}",
            truth.rows(),
            truth.cols(),
            predicted.rows(),
            predicted.cols()
        ));
    }
    if steps.is_empty() {
        return Err(Error::Data("no steps to score".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut ratio = 0.0;
    for &t in steps {
        if t >= truth.rows() {
            return shape_err(format!("step {t} outside 0..{}", truth.rows()));
        }
        let y = truth.row(t);
        let err: f64 = y.iter().zip(predicted.row(t)).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm: f64 = y.iter().map(|a| a * a).sum();
        if mode == RmseNormalization::PerStepRatio {
            if norm == 0.0 {
                return Err(Error::Data(format!("step {t} has an all-zero target")));
            }
            ratio += err / norm;
        }
        num += err;
        den += norm;
    }
    match mode {
        RmseNormalization::RatioOfSums if den == 0.0 => Err(Error::Data("targets are all zero".into())),
        RmseNormalization::RatioOfSums => Ok((num / den).sqrt()),
        RmseNormalization::PerStepRatio => Ok(ratio.sqrt()),
    }
}

/// Predicts each frame by the previous one: row `i` of the result is frame
/// `i` and stands in for frame `i + 1`.
pub fn trivial_predictor(series: &Matrix) -> Result<Matrix> {
    if series.rows() < 2 {
        return Err(Error::Data("need at least two frames".into()));
    }
    series.row_range(0, series.rows() - 1)
}
