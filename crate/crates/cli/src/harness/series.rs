//! Frame-series forecasting with sliding windows.
//!
//! Frames are projected onto their top principal axes and divided by the
//! global RMS of the scores before training. Frame `τ` (0-based) is forecast
//! from frame `τ - 1` by `θ_t` with `t = τ - window`, the posterior trained
//! on windows ending at frame `τ - 1`. Errors are measured in score space.

use hmnn::data::series::{read_series_csv, read_series_raw};
use hmnn::data::{oscillating_texture, pca_fit, sliding_windows};
use hmnn::metrics::standardized_rmse_on;
use hmnn::{FilterState, Matrix, TimeStepData};
use serde_json::json;

use super::{derive_seed, diagnostics_json, mode_name, run_sequence, stream_id, Context};
use crate::config::{DataConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, num, RunReport, Table};

pub struct PreparedSeries {
    /// Unscaled scores, one frame per row.
    pub scores: Matrix,
    /// Divisor applied to the scores for training.
    pub scale: f64,
    pub steps: Vec<TimeStepData>,
    /// 0-based frames on the scoring subpath.
    pub eval_frames: Vec<usize>,
    pub explained_variance: Option<Vec<f64>>,
}

pub fn load_series(data: &DataConfig, seed: u64) -> CliResult<Matrix> {
    match data {
        DataConfig::Texture(spec) => Ok(oscillating_texture(spec, derive_seed(seed, stream_id::TRAIN_DATA))?),
        DataConfig::Csv { path } => Ok(read_series_csv(path)?),
        DataConfig::Raw { path, sidecar } => Ok(read_series_raw(path, sidecar)?),
        _ => Err(CliError::Config("series runs need a texture, csv or raw source".into())),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<PreparedSeries> {
    let frames = load_series(&cfg.data, cfg.seed)?;
    let s = &cfg.series;
    if frames.rows() < s.eval_start {
        return Err(CliError::Data(format!(
            "series has {} frames but scoring starts at frame {}",
            frames.rows(),
            s.eval_start
        )));
    }
    let (scores, explained_variance) = match s.pca_components {
        Some(k) => {
            let pca = pca_fit(&frames, k)?;
            (pca.transform(&frames)?, Some(pca.explained_variance))
        }
        None => (frames, None),
    };
    let values = scores.as_slice();
    let scale = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CliError::Data("series is constant after projection".into()));
    }
    let steps = sliding_windows(&scores.map(|v| v / scale), s.window)?;
    let eval_frames = (s.eval_start - 1..scores.rows()).step_by(s.eval_stride).collect();
    Ok(PreparedSeries {
        scores,
        scale,
        steps,
        eval_frames,
        explained_variance,
    })
}

pub struct Forecasts {
    pub hmnn: Matrix,
    pub trivial: Matrix,
    /// Scored 0-based frames, in order.
    pub frames: Vec<usize>,
}

/// Forecasts every subpath frame whose posterior is available.
pub fn forecast(state: &FilterState, series: &PreparedSeries, window: usize) -> CliResult<Forecasts> {
    let (rows, cols) = (series.scores.rows(), series.scores.cols());
    if state.shape.input_dim() != cols || state.shape.output_dim() != cols {
        return Err(CliError::Data(format!(
            "network maps {} to {} values but frames have {cols}",
            state.shape.input_dim(),
            state.shape.output_dim()
        )));
    }
    let mut hmnn = Matrix::zeros(rows, cols);
    let mut trivial = Matrix::zeros(rows, cols);
    let mut frames = Vec::new();
    for &tau in &series.eval_frames {
        let t = tau - window;
        let Some(theta) = state.at(t) else { continue };
        let x = series.scores.row_range(tau - 1, tau)?.map(|v| v / series.scale);
        let out = state.shape.forward(&theta.expected_weights(), &x)?;
        for (dst, v) in hmnn.row_mut(tau).iter_mut().zip(out.as_slice()) {
            *dst = v * series.scale;
        }
        trivial.row_mut(tau).copy_from_slice(series.scores.row(tau - 1));
        frames.push(tau);
    }
    Ok(Forecasts { hmnn, trivial, frames })
}

fn report(
    ctx: &Context,
    state: &FilterState,
    series: &PreparedSeries,
    diags: serde_json::Value,
) -> CliResult<String> {
    let s = &ctx.cfg.series;
    let f = forecast(state, series, s.window)?;
    let rmse = |pred: &Matrix, frames: &[usize]| -> CliResult<f64> {
        Ok(standardized_rmse_on(&series.scores, pred, frames, s.normalization)?)
    };
    let mut per_step = Table::new(&["t", "standardized_rmse_so_far"]);
    for i in 0..f.frames.len() {
        per_step.push(vec![(f.frames[i] + 1).to_string(), num(rmse(&f.hmnn, &f.frames[..=i])?)]);
    }
    let (hmnn_rmse, trivial_rmse) = if f.frames.is_empty() {
        (None, None)
    } else {
        (Some(rmse(&f.hmnn, &f.frames)?), Some(rmse(&f.trivial, &f.frames)?))
    };
    let total = series.steps.len();
    let mode = mode_name(state, total);
    let mut table = Table::new(&["predictor", "standardized_rmse"]);
    let cell = |v: Option<f64>| v.map_or("-".into(), num);
    table.push(vec!["hmnn".into(), cell(hmnn_rmse)]);
    table.push(vec!["trivial".into(), cell(trivial_rmse)]);
    let results = json!({
        "mode": mode,
        "steps_completed": state.steps(),
        "total_steps": total,
        "frames_scored": f.frames.len(),
        "hmnn_standardized_rmse": hmnn_rmse,
        "trivial_standardized_rmse": trivial_rmse,
        "score_scale": series.scale,
        "explained_variance": series.explained_variance,
    });
    let mut diagnostics = diags;
    diagnostics["mode"] = json!(mode);
    let rep = RunReport {
        command: ctx.command.into(),
        experiment: "series".into(),
        results,
        per_step,
        table,
        diagnostics,
    };
    emit_report(&rep, &ctx.echo(), &ctx.output)?;
    Ok(format!(
        "series [{mode}]: hmnn_rmse={} trivial_rmse={} over {} frames",
        cell(hmnn_rmse),
        cell(trivial_rmse),
        f.frames.len()
    ))
}

pub fn run(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let series = prepare(cfg)?;
    let k = series.scores.cols();
    let shape = cfg.network.regressor(k, k)?;
    let initial = cfg.posterior.initial(&shape, cfg.posterior.p)?;
    let (state, diags) = run_sequence(ctx, &shape, &cfg.kernel.0, initial, &series.steps)?;
    report(ctx, &state, &series, diagnostics_json("", &diags))
}

pub fn evaluate(ctx: &Context) -> CliResult<String> {
    let ckpt = super::checkpoint_for_evaluation(ctx)?;
    let series = prepare(&ctx.cfg)?;
    report(ctx, &ckpt.state, &series, diagnostics_json("", &ckpt.diagnostics))
}
