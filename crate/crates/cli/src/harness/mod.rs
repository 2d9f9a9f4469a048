//! Experiment harnesses. Each one trains or scores, then writes its artifacts
//! into the output directory and returns a one-line summary for the console.

pub mod evolving;
pub mod gradcheck;
pub mod make_data;
pub mod series;
pub mod static_mnist;

use std::path::{Path, PathBuf};

use hmnn::{
    FilterState, KernelParams, NetworkShape, RandomSource, StartMode, StepConfig, StepDiagnostics, TimeStepData,
    VariationalParams,
};
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Child-stream ids under the root seed.
pub(crate) mod stream_id {
    pub const TRAIN_DATA: u64 = 1;
    pub const TEST_DATA: u64 = 2;
    pub const FILTER: u64 = 11;
    pub const GRADCHECK: u64 = 12;
}

/// Seed of the child stream `id` under `seed`.
pub fn derive_seed(seed: u64, id: u64) -> u64 {
    RandomSource::new(seed).child(id).seed()
}

/// A parsed command ready to run.
#[derive(Debug, Clone)]
pub struct Context {
    pub command: &'static str,
    pub cfg: ExperimentConfig,
    pub output: PathBuf,
    pub resume: Option<PathBuf>,
}

impl Context {
    pub fn echo(&self) -> Value {
        self.cfg.echo()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output.join("checkpoint.json")
    }

    fn filter_root(&self) -> RandomSource {
        RandomSource::new(self.cfg.seed).child(stream_id::FILTER)
    }
}

/// Step settings for step `t`: the first step starts from scratch and may
/// train for `warmup_epochs`.
pub fn step_config(cfg: &ExperimentConfig, t: usize) -> StepConfig {
    let mut step = cfg.step.clone();
    if t == 1 {
        step.start = StartMode::Fresh {
            mean: cfg.posterior.init_mean,
            scale: cfg.posterior.init_scale,
        };
        step.epochs = cfg.warmup_epochs.unwrap_or(step.epochs);
    }
    step
}

pub fn mode_name(state: &FilterState, total_steps: usize) -> &'static str {
    if state.is_bbp_degenerate(total_steps) {
        "bbp-degenerate"
    } else {
        "hmnn"
    }
}

pub fn diagnostics_json(mode: &str, diags: &[StepDiagnostics]) -> Value {
    json!({ "mode": mode, "steps": diags })
}

/// Runs (or resumes) the filter over `stream`, checkpointing every
/// `checkpoint_every` steps and at the end. Stops early at `max_steps`.
pub(crate) fn run_sequence(
    ctx: &Context,
    shape: &NetworkShape,
    kernel: &KernelParams,
    initial: VariationalParams,
    stream: &[TimeStepData],
) -> CliResult<(FilterState, Vec<StepDiagnostics>)> {
    let (mut state, mut diags) = match &ctx.resume {
        Some(path) => resume_state(ctx, path, shape, kernel, &initial, stream.len())?,
        None => (FilterState::new(shape.clone(), kernel.clone(), initial)?, Vec::new()),
    };
    let end = ctx.cfg.max_steps.map_or(stream.len(), |m| m.min(stream.len()));
    let root = ctx.filter_root();
    std::fs::create_dir_all(&ctx.output).map_err(|e| CliError::io(&ctx.output, e))?;
    while state.steps() < end {
        let t = state.steps() + 1;
        diags.push(state.advance(&stream[t - 1], &step_config(&ctx.cfg, t), &root)?);
        if t % ctx.cfg.checkpoint_every != 0 && t != end {
            continue;
        }
        let mut ckpt = Checkpoint::new(state.clone(), ctx.cfg.seed, diags.clone());
        ckpt.config = Some(ctx.echo());
        ckpt.save(&ctx.checkpoint_path())?;
    }
    Ok((state, diags))
}

fn resume_state(
    ctx: &Context,
    path: &Path,
    shape: &NetworkShape,
    kernel: &KernelParams,
    initial: &VariationalParams,
    total: usize,
) -> CliResult<(FilterState, Vec<StepDiagnostics>)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.seed != ctx.cfg.seed {
        return Err(CliError::Config(format!(
            "checkpoint seed {} differs from the run seed {}",
            ckpt.seed, ctx.cfg.seed
        )));
    }
    let st = &ckpt.state;
    if &st.shape != shape || &st.kernel != kernel || &st.initial != initial {
        return Err(CliError::Config(
            "checkpoint was produced by a different network, kernel or initial condition".into(),
        ));
    }
    if st.steps() > total {
        return Err(CliError::Data(format!(
            "checkpoint holds {} steps but the stream has only {total}",
            st.steps()
        )));
    }
    Ok((ckpt.state, ckpt.diagnostics))
}

/// Loads the checkpoint given with `--resume` for scoring.
pub(crate) fn checkpoint_for_evaluation(ctx: &Context) -> CliResult<Checkpoint> {
    let path = ctx
        .resume
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs --resume PATH pointing at a checkpoint".into()))?;
    Checkpoint::load(path)
}

/// Argmax predictions of `θ` under its expected weights `p m`.
pub fn predict(shape: &NetworkShape, theta: &VariationalParams, data: &TimeStepData) -> CliResult<Vec<usize>> {
    Ok(shape.predict_classes(&theta.expected_weights(), &data.inputs)?)
}

pub fn class_accuracy(shape: &NetworkShape, theta: &VariationalParams, data: &TimeStepData) -> CliResult<f64> {
    let hmnn::Targets::Classes(truth) = &data.targets else {
        return Err(CliError::Data("classification scoring needs class targets".into()));
    };
    Ok(hmnn::metrics::accuracy(truth, &predict(shape, theta, data)?)?)
}
