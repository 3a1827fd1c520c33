//! Report artifacts: `coefficients.csv`, `remainders.csv`, `report.json`.

use std::fs;
use std::path::Path;

use super::HarnessError;
use crate::modeode::ExpansionReport;
use crate::Result;

pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const REMAINDERS_FILE: &str = "remainders.csv";
pub const REPORT_FILE: &str = "report.json";

pub fn report_json(r: &ExpansionReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(r).map_err(HarnessError::from)?;
    text.push('\n');
    Ok(text)
}

pub fn coefficients_csv(r: &ExpansionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "mode", "value", "provenance"])
        .map_err(HarnessError::from)?;
    for c in &r.coefficients {
        w.write_record([
            c.i.to_string(),
            c.j.to_string(),
            c.mode.to_string(),
            c.value.to_string(),
            c.provenance.clone(),
        ])
        .map_err(HarnessError::from)?;
    }
    finish(w)
}

pub fn remainders_csv(r: &ExpansionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "slope", "log_power", "expected", "pass"])
        .map_err(HarnessError::from)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for s in &r.remainder_slopes {
        w.write_record([
            s.k.to_string(),
            opt(s.slope.map(|v| v.to_string())),
            opt(s.log_power.map(|v| v.to_string())),
            s.expected.to_string(),
            s.pass.to_string(),
        ])
        .map_err(HarnessError::from)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Input(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the three artifacts into `dir`, creating it if needed.
pub fn emit_report(r: &ExpansionReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (name, body) in [
        (COEFFICIENTS_FILE, coefficients_csv(r)?),
        (REMAINDERS_FILE, remainders_csv(r)?),
        (REPORT_FILE, report_json(r)?),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ExpansionReport> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(HarnessError::from)?)
}
