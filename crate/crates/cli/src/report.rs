//! Run artifacts: `summary.json`, `per_step.csv`, `table.txt`,
//! `diagnostics.json` and, on failure, `error.json`.

use std::path::Path;

use serde_json::{json, Value};

use crate::checkpoint::write_atomic;
use crate::error::{CliError, CliResult};

/// Rows of `per_step.csv`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    /// Left-aligned plain-text rendering with a rule under the header.
    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        debug_assert!(self.rows.iter().all(|r| r.len() == cols));
        out
    }
}

/// Everything a harness hands to [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub experiment: String,
    /// Aggregate results; must not contain timings.
    pub results: Value,
    pub per_step: Table,
    /// Plain-text summary table.
    pub table: Table,
    pub diagnostics: Value,
}

/// Shortest decimal form that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes the run artifacts into `dir`.
pub fn emit_report(report: &RunReport, config: &Value, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let summary = json!({
        "command": report.command,
        "experiment": report.experiment,
        "config": config,
        "results": report.results,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    write_atomic(&dir.join("per_step.csv"), &report.per_step.to_csv()?)?;
    write_atomic(&dir.join("table.txt"), report.table.render().as_bytes())?;
    let mut diagnostics = report.diagnostics.clone();
    if let Value::Object(map) = &mut diagnostics {
        map.insert("config".into(), config.clone());
    }
    write_json(&dir.join("diagnostics.json"), &diagnostics)
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Best-effort `error.json`; the error itself is what gets reported.
pub fn write_error(dir: &Path, err: &CliError) {
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = write_json(&dir.join("error.json"), &err.to_json());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_text_rendering() {
        let mut t = Table::new(&["t", "accuracy"]);
        t.push(vec!["1".into(), num(0.5)]);
        t.push(vec!["10".into(), num(0.875)]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "t,accuracy\n1,0.5\n10,0.875\n");
        let text = t.render();
        assert_eq!(text.lines().next().unwrap(), "t   accuracy");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
