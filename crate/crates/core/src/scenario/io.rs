use std::path::{Path, PathBuf};

use super::CaseResult;
use crate::baseline::write_rounds;
use crate::ga::write_trace;
use crate::{Error, Result, DAY_START_HOUR};

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn clock(slot: usize) -> String {
    format!("{:02}:00", (slot + DAY_START_HOUR) % 24)
}

/// Writes `result.json`, `trace.csv`, `prices.csv`, `demand.csv` (and
/// `baseline.csv` when the baseline ran) into `dir`.
pub fn write_case_outputs(dir: &Path, result: &CaseResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("result.json");
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(&path, json + "\n")?;
    written.push(path);

    let path = dir.join("trace.csv");
    write_trace(&result.trace, std::fs::File::create(&path)?)?;
    written.push(path);

    let path = dir.join("prices.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(["slot", "hour", "price_cents"]).map_err(csv_error)?;
    for (slot, p) in result.prices.as_slice().iter().enumerate() {
        w.write_record([slot.to_string(), clock(slot), p.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("demand.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(["slot", "hour", "hems_kwh", "sm_kwh", "none_kwh", "total_kwh"]).map_err(csv_error)?;
    let d = &result.demand;
    for slot in 0..d.total.len() {
        w.write_record([
            slot.to_string(),
            clock(slot),
            d.hems[slot].to_string(),
            d.sm[slot].to_string(),
            d.none[slot].to_string(),
            d.total[slot].to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    written.push(path);

    if let Some(b) = &result.baseline {
        let path = dir.join("baseline.csv");
        write_rounds(&b.rounds, std::fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_case_result(path: &Path) -> Result<CaseResult> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        msg: e.to_string(),
    })
}
