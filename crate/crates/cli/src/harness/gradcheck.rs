//! Finite-difference check of the objective gradient.

use hmnn::trainer::gradient_check;
use hmnn::{Head, NetworkShape, RandomSource};
use serde_json::json;

use super::{stream_id, Context};
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, num, RunReport, Table};

/// Writes the report, then fails with a numeric error if any coordinate
/// exceeds the tolerance.
pub fn run(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let g = &cfg.gradcheck;
    let head = if g.regression {
        Head::GaussianRegression { obs_var: cfg.network.obs_var }
    } else {
        Head::SoftmaxCategorical
    };
    let shape = NetworkShape::new(g.layer_sizes.clone(), head).map_err(|e| CliError::Config(e.to_string()))?;
    let drop_rates = cfg.posterior.drop_rates(&shape, cfg.posterior.p);
    let mut rs = RandomSource::new(cfg.seed).child(stream_id::GRADCHECK);
    let rep = gradient_check(&shape, &cfg.kernel.0, &drop_rates, &g.options(), &mut rs)?;
    let mut per_step = Table::new(&["instances", "coordinates", "max_rel_error", "tolerance", "passed"]);
    per_step.push(vec![
        rep.instances.to_string(),
        rep.coordinates.to_string(),
        num(rep.max_rel_error),
        num(rep.tolerance),
        rep.passed.to_string(),
    ]);
    let report = RunReport {
        command: ctx.command.into(),
        experiment: "gradcheck".into(),
        results: json!(rep),
        table: per_step.clone(),
        per_step,
        diagnostics: json!({ "mode": "gradcheck", "layer_sizes": g.layer_sizes, "drop_rates": drop_rates }),
    };
    emit_report(&report, &ctx.echo(), &ctx.output)?;
    if !rep.passed {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {} exceeds {}",
            rep.max_rel_error, rep.tolerance
        )));
    }
    Ok(format!("gradcheck passed: max_rel_error={} over {} coordinates", rep.max_rel_error, rep.coordinates))
}
