//! File writers for run artefacts. Column sets are fixed:
//!
//! * `rounds.csv`: `round, deadline, cumulative_time, distance_sq, accuracy,
//!   mean_depth, contributors` (per-layer counts joined by `;`)
//! * `compare.csv`: `method, t_max, seeds, mean_final_distance_sq,
//!   se_final_distance_sq, mean_final_accuracy, se_final_accuracy,
//!   mean_rounds, mean_total_time`
//!
//! Missing values are empty fields.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::compare::CompareRow;
use crate::harness::experiment::RoundLogRecord;
use crate::scheduler::ScheduleSolution;

pub const ROUNDS_COLUMNS: [&str; 7] = [
    "round",
    "deadline",
    "cumulative_time",
    "distance_sq",
    "accuracy",
    "mean_depth",
    "contributors",
];

pub const COMPARE_COLUMNS: [&str; 9] = [
    "method",
    "t_max",
    "seeds",
    "mean_final_distance_sq",
    "se_final_distance_sq",
    "mean_final_accuracy",
    "se_final_accuracy",
    "mean_rounds",
    "mean_total_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn rounds_csv(records: &[RoundLogRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUNDS_COLUMNS)?;
    for r in records {
        let contributors: Vec<String> = r.contributors.iter().map(ToString::to_string).collect();
        w.write_record([
            r.round.to_string(),
            r.deadline.to_string(),
            r.cumulative_time.to_string(),
            opt(r.distance_sq),
            opt(r.accuracy),
            r.mean_depth.to_string(),
            contributors.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn compare_csv(rows: &[CompareRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.t_max.to_string(),
            r.seeds.to_string(),
            opt(r.mean_final_distance_sq),
            opt(r.se_final_distance_sq),
            opt(r.mean_final_accuracy),
            opt(r.se_final_accuracy),
            r.mean_rounds.to_string(),
            r.mean_total_time.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `rounds.csv` or `rounds.json` into `dir`.
pub fn write_rounds(dir: &Path, records: &[RoundLogRecord], format: Format) -> Result<()> {
    match format {
        Format::Csv => Ok(fs::write(dir.join("rounds.csv"), rounds_csv(records)?)?),
        Format::Json => write_json(&dir.join("rounds.json"), &records),
    }
}

/// Writes `compare.csv` or `compare.json` into `dir`.
pub fn write_compare(dir: &Path, rows: &[CompareRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => Ok(fs::write(dir.join("compare.csv"), compare_csv(rows)?)?),
        Format::Json => write_json(&dir.join("compare.json"), &rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleDocument<'a> {
    pub deadlines: &'a [f64],
    pub m: f64,
    pub cost: f64,
    pub baseline_cost: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub diagnostics: &'a crate::scheduler::Diagnostics,
}

/// Writes `schedule.json` into `dir`.
pub fn write_schedule(dir: &Path, solution: &ScheduleSolution) -> Result<()> {
    let doc = ScheduleDocument {
        deadlines: &solution.schedule.deadlines,
        m: solution.schedule.batch_scale,
        cost: solution.cost,
        baseline_cost: solution.baseline_cost,
        iterations: solution.diagnostics.iterations,
        restarts: solution.diagnostics.restarts,
        diagnostics: &solution.diagnostics,
    };
    write_json(&dir.join("schedule.json"), &doc)
}
