//! `trials.csv` and `summary.json` writers and readers.
//!
//! Floats are written with Rust's shortest round-trip formatting, lines end
//! in LF, and no field ever needs quoting.

use std::fmt::Write as _;
use std::path::Path;

use super::{CampaignSummary, TrialRecord};
use crate::error::{Error, Result};
use crate::model::Dataset;

pub const CSV_HEADER: &str = "trial_id,estimator,error,bound,within_bound,certificate,wall_time_ms";

pub fn format_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let certificate = r.certificate.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial_id, r.estimator, r.error, r.bound, r.within_bound, certificate, r.wall_time_ms
        )
        .expect("writing to a String");
    }
    out
}

pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    std::fs::write(path, format_csv(records))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "unexpected trials header `{}`",
            header.join(",")
        )));
    }
    let bad = |field: &str, line: usize| {
        Error::InvalidParameter(format!("bad {field} on trials line {line}"))
    };
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let float = |j: usize, name: &str| row[j].parse::<f64>().map_err(|_| bad(name, line));
        out.push(TrialRecord {
            trial_id: row[0].parse().map_err(|_| bad("trial_id", line))?,
            estimator: row[1].to_owned(),
            error: float(2, "error")?,
            bound: float(3, "bound")?,
            within_bound: row[4].parse().map_err(|_| bad("within_bound", line))?,
            certificate: if row[5].is_empty() {
                None
            } else {
                Some(float(5, "certificate")?)
            },
            wall_time_ms: float(6, "wall_time_ms")?,
        });
    }
    Ok(out)
}

/// Reads a numeric CSV, one sample per row. A first row that does not parse
/// as numbers is taken as a header; lines starting with `#` are skipped.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::InvalidParameter(format!(
                    "non-numeric value on data row {}",
                    i + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty("data file"));
    }
    Dataset::from_rows(&rows)
}

pub fn emit_json(summary: &CampaignSummary, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<CampaignSummary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
