//! Metrics logs: CSV with a fixed header and column order, '.' decimals,
//! LF line endings, empty cells for intervals that were not sampled. The
//! reader is strict so determinism tests can byte-compare what it accepts.

use anyhow::{bail, Result};

use logan_core::train::MetricsRecord;

pub const HEADER: &str = "step,L_D,L_G,R_z,dz_norm,df_abs,dtheta_D,dtheta_G,dtheta_diff,curvature_mean,proxy_fid,mode_coverage,hq_fraction";

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn header_line() -> String {
    format!("{HEADER}\n")
}

pub fn record_line(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.step,
        r.loss_d,
        r.loss_g,
        r.reg,
        r.dz_norm,
        r.df_abs,
        r.dtheta_d,
        r.dtheta_g,
        r.dtheta_diff,
        cell(r.curvature_mean),
        cell(r.proxy_fid),
        match r.modes_covered {
            Some(m) => m.to_string(),
            None => String::new(),
        },
        cell(r.hq_fraction),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub step: u64,
    pub values: Vec<Option<f64>>,
}

/// Strict reader: exact header, exactly 13 columns per row, each cell a
/// finite number or empty.
pub fn parse_metrics(text: &str) -> Result<Vec<ParsedRow>> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or_default();
    if header != HEADER {
        bail!("metrics header mismatch: got `{header}`");
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 13 {
            bail!("row {}: expected 13 columns, got {}", idx + 2, cells.len());
        }
        let step: u64 = cells[0]
            .parse()
            .map_err(|e| anyhow::anyhow!("row {}: bad step: {e}", idx + 2))?;
        let mut values = Vec::with_capacity(12);
        for (col, cell) in cells[1..].iter().enumerate() {
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|e| anyhow::anyhow!("row {}, column {}: {e}", idx + 2, col + 2))?;
            if !v.is_finite() {
                bail!("row {}, column {}: non-finite value", idx + 2, col + 2);
            }
            values.push(Some(v));
        }
        rows.push(ParsedRow { step, values });
    }
    Ok(rows)
}
