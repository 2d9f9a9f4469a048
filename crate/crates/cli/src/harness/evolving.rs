//! Evolving-label classification: one filtering step per batch, each
//! posterior scored on an independently drawn test batch of the same step.

use hmnn::data::evolving::{build_evolving_stream, synthetic_drift_stream, EvolvingStream};
use hmnn::data::{load_mnist, MnistSplit};
use hmnn::metrics::mean_accuracy_over_time;
use hmnn::{FilterState, NetworkShape};
use serde_json::json;

use super::{derive_seed, diagnostics_json, mode_name, predict, run_sequence, stream_id, Context};
use crate::config::DataConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, num, RunReport, Table};

pub struct Streams {
    pub train: EvolvingStream,
    pub test: EvolvingStream,
    pub classes: usize,
}

/// Training and test streams from independent child seeds of `seed`.
pub fn build_streams(data: &DataConfig, seed: u64) -> CliResult<Streams> {
    let train_seed = derive_seed(seed, stream_id::TRAIN_DATA);
    let test_seed = derive_seed(seed, stream_id::TEST_DATA);
    match data {
        DataConfig::SyntheticDrift {
            steps,
            per_step_n,
            test_per_step_n,
        } => Ok(Streams {
            train: synthetic_drift_stream(*steps, *per_step_n, train_seed)?,
            test: synthetic_drift_stream(*steps, *test_per_step_n, test_seed)?,
            classes: 2,
        }),
        DataConfig::MnistStream {
            dir,
            steps,
            per_step_n,
            test_per_step_n,
        } => {
            let train = load_mnist(dir, MnistSplit::Train)?;
            let test = load_mnist(dir, MnistSplit::Test)?;
            Ok(Streams {
                train: build_evolving_stream(&train, *steps, *per_step_n, train_seed)?,
                test: build_evolving_stream(&test, *steps, *test_per_step_n, test_seed)?,
                classes: train.n_classes,
            })
        }
        _ => Err(CliError::Config("evolving runs need an mnist_stream or synthetic_drift source".into())),
    }
}

/// Accuracy of `θ_t` on test step `t` for every completed step.
pub fn score(state: &FilterState, test: &EvolvingStream) -> CliResult<Vec<f64>> {
    let steps = state.steps().min(test.steps.len());
    if steps == 0 {
        return Err(CliError::Data("no completed steps to score".into()));
    }
    let labels = test.labels();
    let predicted = (1..=steps)
        .map(|t| predict(&state.shape, &state.history[t - 1], &test.steps[t - 1]))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(mean_accuracy_over_time(&labels[..steps], &predicted)?.per_step)
}

fn report(ctx: &Context, state: &FilterState, streams: &Streams, diags: serde_json::Value) -> CliResult<String> {
    let per_step_acc = score(state, &streams.test)?;
    let mean = per_step_acc.iter().sum::<f64>() / per_step_acc.len() as f64;
    let total = streams.train.steps.len();
    let mode = mode_name(state, total);
    let mut per_step = Table::new(&["t", "f_t", "accuracy"]);
    for (i, a) in per_step_acc.iter().enumerate() {
        per_step.push(vec![(i + 1).to_string(), num(streams.train.schedule[i]), num(*a)]);
    }
    let mut table = per_step.clone();
    table.push(vec!["mean".into(), String::new(), num(mean)]);
    let results = json!({
        "mode": mode,
        "steps_completed": state.steps(),
        "total_steps": total,
        "mean_accuracy_over_time": mean,
        "per_step_accuracy": per_step_acc,
        "train_stream": streams.train.manifest(),
        "test_stream": streams.test.manifest(),
    });
    let mut diagnostics = diags;
    diagnostics["mode"] = json!(mode);
    let rep = RunReport {
        command: ctx.command.into(),
        experiment: "evolving".into(),
        results,
        per_step,
        table,
        diagnostics,
    };
    emit_report(&rep, &ctx.echo(), &ctx.output)?;
    Ok(format!(
        "evolving [{mode}]: {} of {total} steps, mean_accuracy_over_time={mean}",
        state.steps()
    ))
}

fn shape_for(ctx: &Context, streams: &Streams) -> CliResult<NetworkShape> {
    let input = streams.train.steps[0].inputs.cols();
    ctx.cfg.network.classifier(input, streams.classes)
}

pub fn run(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let streams = build_streams(&cfg.data, cfg.seed)?;
    let shape = shape_for(ctx, &streams)?;
    let initial = cfg.posterior.initial(&shape, cfg.posterior.p)?;
    let (state, diags) = run_sequence(ctx, &shape, &cfg.kernel.0, initial, &streams.train.steps)?;
    report(ctx, &state, &streams, diagnostics_json("", &diags))
}

/// Scores a stored history on the config's test stream.
pub fn evaluate(ctx: &Context) -> CliResult<String> {
    let ckpt = super::checkpoint_for_evaluation(ctx)?;
    let streams = build_streams(&ctx.cfg.data, ctx.cfg.seed)?;
    if ckpt.state.shape.input_dim() != streams.test.steps[0].inputs.cols() {
        return Err(CliError::Data("checkpoint network does not fit the configured stream".into()));
    }
    report(ctx, &ckpt.state, &streams, diagnostics_json("", &ckpt.diagnostics))
}
