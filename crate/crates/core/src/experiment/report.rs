//! CSV emission and parsing.

use std::fmt::Write as _;

use crate::error::{config_err, Error, Result};
use crate::theory::BoundReport;
use crate::trainer::MetricsRecord;

pub const METRICS_HEADER: &str =
    "step,wall_ms,train_total,train_nll,train_kl,valid_loss,valid_metric";

/// A float with 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            r.wall_ms,
            num(r.train_total),
            num(r.train_nll),
            num(r.train_kl),
            num(r.valid_loss),
            num(r.valid_metric)
        )
        .expect("writing to a String");
    }
    out
}

pub const BOUND_HEADER: &str = "keep_prob,trial,samples,eps_hat,eps_se,gap_hat,gap_se,ratio";

pub fn bound_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(BOUND_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.keep_prob,
            r.trial,
            r.samples,
            num(r.eps_hat),
            num(r.eps_se),
            num(r.gap_hat),
            num(r.gap_se),
            num(r.ratio)
        )
        .expect("writing to a String");
    }
    out
}

/// A numeric CSV table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name).ok_or_else(|| {
            Error::Config(format!(
                "no column '{name}' (available: {})",
                self.columns.join(", ")
            ))
        })?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Parses a CSV whose cells (after the header) are all numbers.
pub fn parse_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return config_err("CSV is empty");
    };
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config(format!("row {}: non-numeric cell in '{line}'", n + 1)))?;
        if row.len() != columns.len() {
            return config_err(format!(
                "row {}: {} cells for {} columns",
                n + 1,
                row.len(),
                columns.len()
            ));
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}
