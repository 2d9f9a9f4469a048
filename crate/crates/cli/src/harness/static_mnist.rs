//! Static MNIST classification: one filtering step per DropConnect rate.
//!
//! With `p = 1`, `alpha = 0` and a zero-vector kernel mean this is plain
//! Bayes by Backprop, and the run is labelled `bbp-degenerate`.

use hmnn::data::{load_mnist, LabeledImageSet, MnistSplit};
use hmnn::{FilterState, RandomSource, Targets, TimeStepData};
use serde_json::{json, Value};

use super::{class_accuracy, diagnostics_json, mode_name, step_config, stream_id, Context};
use crate::checkpoint::Checkpoint;
use crate::config::DataConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, num, RunReport, Table};

pub struct MnistSplits {
    pub train: TimeStepData,
    pub validation: Option<TimeStepData>,
    pub test: TimeStepData,
}

fn to_step(set: &LabeledImageSet) -> CliResult<TimeStepData> {
    Ok(TimeStepData::new(set.images.clone(), Targets::Classes(set.labels.clone()))?)
}

/// Training uses the first `train_size` training images, validation the last
/// `validation_size`; the two ranges must not overlap.
pub fn load_splits(data: &DataConfig) -> CliResult<MnistSplits> {
    let DataConfig::Mnist {
        dir,
        train_size,
        validation_size,
        test_size,
    } = data
    else {
        return Err(CliError::Config("static runs need an mnist data source".into()));
    };
    let train_all = load_mnist(dir, MnistSplit::Train)?;
    let test_all = load_mnist(dir, MnistSplit::Test)?;
    let n = train_all.len();
    if train_size + validation_size > n {
        return Err(CliError::Data(format!(
            "train_size + validation_size = {} exceeds the {n} training images",
            train_size + validation_size
        )));
    }
    if *test_size > test_all.len() {
        return Err(CliError::Data(format!(
            "test_size {test_size} exceeds the {} test images",
            test_all.len()
        )));
    }
    let validation = match validation_size {
        0 => None,
        v => Some(to_step(&train_all.range(n - v, n)?)?),
    };
    Ok(MnistSplits {
        train: to_step(&train_all.range(0, *train_size)?)?,
        validation,
        test: to_step(&test_all.range(0, *test_size)?)?,
    })
}

/// Key of `p` in stream ids and file names.
fn p_key(p: f64) -> u64 {
    (p * 1e6).round() as u64
}

pub fn checkpoint_name(p: f64) -> String {
    format!("checkpoint_p{}.json", num(p))
}

pub fn run(ctx: &Context) -> CliResult<String> {
    if ctx.resume.is_some() {
        return Err(CliError::Config("static runs are a single step and cannot be resumed".into()));
    }
    let cfg = &ctx.cfg;
    let splits = load_splits(&cfg.data)?;
    let shape = cfg.network.classifier(splits.train.inputs.cols(), 10)?;
    let kernel = &cfg.kernel.0;
    std::fs::create_dir_all(&ctx.output).map_err(|e| CliError::io(&ctx.output, e))?;

    let validation = splits.validation.as_ref().map(|v| match &v.targets {
        Targets::Classes(c) => (&v.inputs, c),
        Targets::Values(_) => unreachable!("MNIST targets are classes"),
    });
    let mut per_step = Table::new(&["p", "epoch", "validation_accuracy"]);
    let mut table = Table::new(&["p", "mode", "best_validation_accuracy", "best_epoch", "test_accuracy"]);
    let mut runs = Vec::new();
    let mut run_diags = Vec::new();
    for p in cfg.posterior.grid() {
        let initial = cfg.posterior.initial(&shape, p)?;
        let mut state = FilterState::new(shape.clone(), kernel.clone(), initial)?;
        let root = RandomSource::new(cfg.seed).child(stream_id::FILTER).child(p_key(p));
        let mut curve = Vec::new();
        let diag = state.advance_observed(&splits.train, &step_config(cfg, 1), &root, &mut |_, theta| {
            if let Some((inputs, truth)) = &validation {
                let predicted = shape.predict_classes(&theta.expected_weights(), inputs)?;
                curve.push(hmnn::metrics::accuracy(truth, &predicted)?);
            }
            Ok(())
        })?;
        let test_accuracy = class_accuracy(&shape, state.latest(), &splits.test)?;
        let (best_epoch, best) = curve
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &a)| match acc {
                Some((_, b)) if b >= a => acc,
                _ => Some((i + 1, a)),
            })
            .map_or((Value::Null, Value::Null), |(e, a)| (json!(e), json!(a)));
        for (i, a) in curve.iter().enumerate() {
            per_step.push(vec![num(p), (i + 1).to_string(), num(*a)]);
        }
        let mode = mode_name(&state, 1);
        table.push(vec![
            num(p),
            mode.into(),
            best.as_f64().map_or("-".into(), num),
            best_epoch.as_u64().map_or("-".into(), |e| e.to_string()),
            num(test_accuracy),
        ]);
        let mut ckpt = Checkpoint::new(state, cfg.seed, vec![diag.clone()]);
        ckpt.config = Some(ctx.echo());
        ckpt.save(&ctx.output.join(checkpoint_name(p)))?;
        runs.push(json!({
            "p": p,
            "mode": mode,
            "best_validation_accuracy": best,
            "best_epoch": best_epoch,
            "final_validation_accuracy": curve.last(),
            "test_accuracy": test_accuracy,
            "validation_curve": curve,
        }));
        let mut d = diagnostics_json(mode, std::slice::from_ref(&diag));
        d["p"] = json!(p);
        run_diags.push(d);
    }
    let modes: Vec<&str> = runs.iter().filter_map(|r| r["mode"].as_str()).collect();
    let mode = if modes.iter().all(|m| *m == modes[0]) { modes[0] } else { "mixed" };
    let report = RunReport {
        command: ctx.command.into(),
        experiment: "static".into(),
        results: json!({ "mode": mode, "runs": runs }),
        per_step,
        table,
        diagnostics: json!({ "mode": mode, "runs": run_diags }),
    };
    emit_report(&report, &ctx.echo(), &ctx.output)?;
    let best = runs
        .iter()
        .map(|r| format!("p={} test_accuracy={}", r["p"], r["test_accuracy"]))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("static [{mode}]: {best}"))
}

/// Scores a stored posterior on the test split.
pub fn evaluate(ctx: &Context) -> CliResult<String> {
    let ckpt = super::checkpoint_for_evaluation(ctx)?;
    let splits = load_splits(&ctx.cfg.data)?;
    let state = &ckpt.state;
    if state.steps() == 0 {
        return Err(CliError::Data("checkpoint holds no trained step".into()));
    }
    let test_accuracy = class_accuracy(&state.shape, state.latest(), &splits.test)?;
    let validation_accuracy = match &splits.validation {
        Some(v) => Some(class_accuracy(&state.shape, state.latest(), v)?),
        None => None,
    };
    let mut table = Table::new(&["split", "accuracy"]);
    if let Some(v) = validation_accuracy {
        table.push(vec!["validation".into(), num(v)]);
    }
    table.push(vec!["test".into(), num(test_accuracy)]);
    let mode = mode_name(state, 1);
    let report = RunReport {
        command: ctx.command.into(),
        experiment: "static".into(),
        results: json!({
            "mode": mode,
            "checkpoint_seed": ckpt.seed,
            "validation_accuracy": validation_accuracy,
            "test_accuracy": test_accuracy,
        }),
        per_step: table.clone(),
        table,
        diagnostics: diagnostics_json(mode, &ckpt.diagnostics),
    };
    emit_report(&report, &ctx.echo(), &ctx.output)?;
    Ok(format!("evaluate static: test_accuracy={test_accuracy}"))
}
