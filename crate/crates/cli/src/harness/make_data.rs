//! Writes the configured dataset to disk with a reproducibility manifest.

use std::path::Path;

use hmnn::data::evolving::EvolvingStream;
use hmnn::data::series::write_series_csv;
use hmnn::Targets;
use serde_json::json;

use super::evolving::build_streams;
use super::series::load_series;
use super::Context;
use crate::checkpoint::write_atomic;
use crate::config::DataConfig;
use crate::error::{CliError, CliResult};
use crate::report::{num, write_json, Table};

/// One row per sample: step, f_t, features, label and labeller.
fn stream_table(stream: &EvolvingStream) -> Table {
    let dim = stream.steps.first().map_or(0, |s| s.inputs.cols());
    let mut header = vec!["t".to_string(), "f_t".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.extend(["label".to_string(), "identity_labelled".to_string()]);
    let mut table = Table { header, rows: Vec::new() };
    for (i, step) in stream.steps.iter().enumerate() {
        let Targets::Classes(labels) = &step.targets else { continue };
        for (r, label) in labels.iter().enumerate() {
            let mut row = vec![(i + 1).to_string(), num(stream.schedule[i])];
            row.extend(step.inputs.row(r).iter().map(|&v| num(v)));
            row.push(label.to_string());
            row.push(stream.identity_labelled[i][r].to_string());
            table.rows.push(row);
        }
    }
    table
}

fn write_table(path: &Path, table: &Table) -> CliResult<()> {
    write_atomic(path, &table.to_csv()?)
}

pub fn run(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let out = &ctx.output;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match &cfg.data {
        DataConfig::Texture(_) | DataConfig::Csv { .. } | DataConfig::Raw { .. } => {
            let series = load_series(&cfg.data, cfg.seed)?;
            let path = out.join("series.csv");
            write_series_csv(&path, &series)?;
            write_json(
                &out.join("manifest.json"),
                &json!({ "seed": cfg.seed, "rows": series.rows(), "cols": series.cols(), "data": cfg.data }),
            )?;
            Ok(format!("wrote {} ({}x{})", path.display(), series.rows(), series.cols()))
        }
        DataConfig::SyntheticDrift { .. } | DataConfig::MnistStream { .. } => {
            let streams = build_streams(&cfg.data, cfg.seed)?;
            let synthetic = matches!(cfg.data, DataConfig::SyntheticDrift { .. });
            for (name, stream) in [("train", &streams.train), ("test", &streams.test)] {
                write_json(&out.join(format!("{name}_manifest.json")), &json!(stream.manifest()))?;
                if synthetic {
                    write_table(&out.join(format!("{name}_stream.csv")), &stream_table(stream))?;
                } else {
                    let mut labels = Table::new(&["t", "label", "identity_labelled"]);
                    for (i, (ls, ids)) in stream.labels().iter().zip(&stream.identity_labelled).enumerate() {
                        for (l, id) in ls.iter().zip(ids) {
                            labels.push(vec![(i + 1).to_string(), l.to_string(), id.to_string()]);
                        }
                    }
                    write_table(&out.join(format!("{name}_labels.csv")), &labels)?;
                }
            }
            Ok(format!("wrote {} training and test steps to {}", streams.train.steps.len(), out.display()))
        }
        DataConfig::None | DataConfig::Mnist { .. } => Err(CliError::Config(
            "make-data generates texture, csv/raw copies or evolving streams only".into(),
        )),
    }
}
