use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentReport, MobilityRecord, MobilitySummary, RunRecord};
use crate::error::{Error, Result};

/// Bumped whenever a CSV column changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub algorithm: String,
    pub ue_count: usize,
    pub quota: usize,
    pub sum_rate: f64,
    pub spectral_efficiency: f64,
    pub jain_index: f64,
    pub accepted_exchanges: usize,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            seed: r.seed,
            algorithm: r.algorithm.clone(),
            ue_count: r.ue_count,
            quota: r.quota,
            sum_rate: r.sum_rate,
            spectral_efficiency: r.spectral_efficiency,
            jain_index: r.jain_index,
            accepted_exchanges: r.convergence_trace.len(),
        }
    }
}

impl From<RunRow> for RunRecord {
    fn from(r: RunRow) -> Self {
        Self {
            seed: r.seed,
            algorithm: r.algorithm,
            ue_count: r.ue_count,
            quota: r.quota,
            sum_rate: r.sum_rate,
            spectral_efficiency: r.spectral_efficiency,
            jain_index: r.jain_index,
            per_user_throughputs: Vec::new(),
            per_rb_rates: Vec::new(),
            convergence_trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CdfRow {
    seed: u64,
    algorithm: String,
    ue_count: usize,
    quota: usize,
    rate: f64,
    cumulative: f64,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn runs_csv(report: &ExperimentReport) -> Result<String> {
    csv_string(report.records.iter().map(RunRow::from))
}

pub fn read_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<RunRow>()
        .map(|r| r.map(RunRecord::from).map_err(Error::from))
        .collect()
}

fn cdf_rows(report: &ExperimentReport) -> Vec<CdfRow> {
    let mut rows = Vec::new();
    for r in &report.records {
        let mut rates = r.per_rb_rates.clone();
        rates.sort_by(f64::total_cmp);
        let n = rates.len() as f64;
        rows.extend(rates.into_iter().enumerate().map(|(i, rate)| CdfRow {
            seed: r.seed,
            algorithm: r.algorithm.clone(),
            ue_count: r.ue_count,
            quota: r.quota,
            rate,
            cumulative: (i + 1) as f64 / n,
        }));
    }
    rows
}

/// Writes the CSV tables, `report.json` and `manifest.json` into `dir`;
/// returns the written file names.
pub fn write_report<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    seed: u64,
    report: &ExperimentReport,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    if !report.records.is_empty() {
        files.push(("runs.csv".into(), runs_csv(report)?));
        files.push(("aggregates.csv".into(), csv_string(&report.aggregates)?));
        files.push(("per_rb_cdf.csv".into(), csv_string(cdf_rows(report))?));
    }
    if !report.mobility.is_empty() {
        files.push(("mobility.csv".into(), csv_string::<&MobilityRecord>(&report.mobility)?));
        files.push((
            "mobility_summary.csv".into(),
            csv_string::<&MobilitySummary>(&report.mobility_summary)?,
        ));
    }
    files.push(("report.json".into(), serde_json::to_string_pretty(report)?));
    let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "files": names,
        "config": config,
    });
    files.push(("manifest.json".into(), serde_json::to_string_pretty(&manifest)?));
    for (name, body) in &files {
        fs::write(dir.join(name), body)?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}
