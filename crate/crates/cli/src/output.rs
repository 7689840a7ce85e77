//! Writing CSV/JSON artifacts into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::Failure;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Writes `<out>/<stem>.csv` and/or `<out>/<stem>.json`. Does nothing when
/// no output directory is configured.
pub fn emit<T: Serialize + ?Sized>(cfg: &RunConfig, stem: &str, csv: &str, json: &T) -> Result<(), Failure> {
    let Some(dir) = &cfg.out else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    for format in &cfg.formats {
        let (path, body) = match format {
            Format::Csv => (dir.join(format!("{stem}.csv")), csv.to_string()),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(json).map_err(|e| Failure::Runtime(e.to_string()))?;
                s.push('\n');
                (dir.join(format!("{stem}.json")), s)
            }
        };
        fs::write(&path, body).map_err(|e| io_failure(&path, e))?;
    }
    Ok(())
}

/// Serializes flat rows with a header line.
pub fn rows_to_csv<R: Serialize>(rows: &[R]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))
}

/// `3:0.25;6:0.75`, keyed by window width.
pub fn width_map<V: std::fmt::Display>(m: &BTreeMap<usize, V>) -> String {
    let mut out = String::new();
    for (i, (w, v)) in m.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{w}:{v}");
    }
    out
}

pub fn percent_map(m: &BTreeMap<usize, f64>) -> String {
    m.iter()
        .map(|(w, f)| format!("W={w} {:.1}%", 100.0 * f))
        .collect::<Vec<_>>()
        .join(", ")
}
