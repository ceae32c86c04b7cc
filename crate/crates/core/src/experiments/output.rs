use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::OutputFormat;
use super::sos_scaling::SosRecord;
use super::sweep::SweepOutput;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 14] = [
    "model",
    "n",
    "k",
    "sigma",
    "sigma_over_threshold",
    "method",
    "trial_index",
    "success",
    "overlap",
    "certified",
    "runtime_ms",
    "seed",
    "timed_out",
    "status",
];

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// CSV with a `#` comment line documenting the columns, one row per trial,
/// then one aggregate row per cell with `trial_index = -1`.
pub fn sweep_to_csv(out: &SweepOutput) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "# spiked-bisect sweep schema_version={SCHEMA_VERSION} model={} seed={} trials={}; \
         success/certified/timed_out are 0/1 per trial; rows with trial_index=-1 are cell aggregates where \
         success=success rate, overlap=mean overlap, certified=certification rate, runtime_ms=total, \
         seed=cell seed, timed_out=count of timed-out trials, status=aggregate",
        out.config.model.name(),
        out.config.seed,
        out.config.trials,
    )?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in &out.records {
        w.write_record([
            r.model.name().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.sigma.to_string(),
            r.sigma_over_threshold.to_string(),
            r.method.name().to_string(),
            r.trial_index.to_string(),
            flag(r.success).to_string(),
            r.overlap.to_string(),
            flag(r.certified).to_string(),
            r.runtime_ms.to_string(),
            r.seed.to_string(),
            flag(r.timed_out).to_string(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
    }
    for a in &out.aggregates {
        let status = if a.errors > 0 { format!("aggregate errors={}", a.errors) } else { "aggregate".to_string() };
        w.write_record([
            a.model.name().to_string(),
            a.n.to_string(),
            a.k.to_string(),
            a.sigma.to_string(),
            a.sigma_over_threshold.to_string(),
            a.method.name().to_string(),
            "-1".to_string(),
            a.success_rate.to_string(),
            a.mean_overlap.to_string(),
            a.certified_rate.to_string(),
            a.runtime_ms.to_string(),
            a.cell_seed.to_string(),
            a.timed_out.to_string(),
            status,
        ])
        .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

pub fn sweep_to_json(out: &SweepOutput) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(&Versioned { schema_version: SCHEMA_VERSION, body: out })?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn sweep_bytes(out: &SweepOutput, format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => sweep_to_csv(out),
        OutputFormat::Json => sweep_to_json(out),
    }
}

/// JSON array of records.
pub fn sos_to_json(records: &[SosRecord]) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(records)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes to `path`, or stdout when `path` is `None`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
