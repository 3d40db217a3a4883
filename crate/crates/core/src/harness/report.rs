//! CSV report rows with full provenance.

use crate::decomposition::IterationRecord;
use serde::Serialize;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

/// One result row of any experiment command. Optional fields serialize as
/// empty CSV cells.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub problem: String,
    pub method: String,
    pub seed: String,
    pub stages: usize,
    pub branching: usize,
    pub states: usize,
    pub mu: usize,
    /// Revision stages of the reported schedule, `-` when none.
    pub schedule: String,
    pub objective: Option<f64>,
    pub vams_percent: Option<f64>,
    pub wall_seconds: f64,
    pub solver_status: String,
    pub solver_gap: Option<f64>,
    pub nac_count: u64,
    pub config_hash: String,
    /// Rows whose reference solves were not optimal are kept but excluded
    /// from averages.
    pub excluded: bool,
}

pub fn write_rows(writer: impl Write, rows: &[ReportRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_path(path: &Path, rows: &[ReportRow]) -> csv::Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn write_iteration_log(writer: impl Write, log: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for record in log {
        w.serialize(record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iteration_log_path(path: &Path, log: &[IterationRecord]) -> csv::Result<()> {
    write_iteration_log(std::fs::File::create(path)?, log)
}

/// Short fingerprint of a configuration's debug form.
pub fn config_hash(config: &impl std::fmt::Debug) -> String {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    format!("{config:?}").hash(&mut hasher);
    format!("{:016x}", hasher.finish())
}
