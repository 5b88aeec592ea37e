//! Summary tables in the layout of model rows and dataset columns.
//!
//! `summary.md` is a markdown table with one row per (model, dataset):
//!
//! ```text
//! | model | dataset | mean | min | max | replications |
//! ```
//!
//! `summary.tsv` holds the same columns tab-separated, and `plot.tsv` one
//! `model dataset replication accuracy` line per replication. Values are
//! printed with 4 decimals; rows are sorted by model name, then dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    /// One accuracy per replication.
    pub values: Vec<f64>,
}

impl ReportRow {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn sorted(rows: &[ReportRow]) -> Result<Vec<&ReportRow>> {
    if rows.is_empty() {
        return Err(Error::Precondition("report needs at least one row".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.values.is_empty()) {
        return Err(Error::Precondition(format!("{} / {} has no values", r.model, r.dataset)));
    }
    let mut out: Vec<&ReportRow> = rows.iter().collect();
    out.sort_by(|a, b| (&a.model, &a.dataset).cmp(&(&b.model, &b.dataset)));
    Ok(out)
}

pub fn render_markdown(rows: &[ReportRow]) -> Result<String> {
    let mut s = String::from("| model | dataset | mean | min | max | replications |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    for r in sorted(rows)? {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {} |",
            r.model,
            r.dataset,
            r.mean(),
            r.min(),
            r.max(),
            r.values.len()
        );
    }
    Ok(s)
}

pub fn render_tsv(rows: &[ReportRow]) -> Result<String> {
    let mut s = String::from("model\tdataset\tmean\tmin\tmax\treplications\n");
    for r in sorted(rows)? {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            r.model,
            r.dataset,
            r.mean(),
            r.min(),
            r.max(),
            r.values.len()
        );
    }
    Ok(s)
}

pub fn render_plot_data(rows: &[ReportRow]) -> Result<String> {
    let mut s = String::from("model\tdataset\treplication\taccuracy\n");
    for r in sorted(rows)? {
        for (i, v) in r.values.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{i}\t{v:.4}", r.model, r.dataset);
        }
    }
    Ok(s)
}

/// Writes `summary.md`, `summary.tsv` and `plot.tsv` into `dir`.
pub fn emit_report(rows: &[ReportRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.md"), render_markdown(rows)?)?;
    fs::write(dir.join("summary.tsv"), render_tsv(rows)?)?;
    fs::write(dir.join("plot.tsv"), render_plot_data(rows)?)?;
    Ok(())
}
