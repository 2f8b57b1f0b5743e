//! Small shared helpers for the on-disk formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, IoContext, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_num(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse().map_err(|_| CliError::format(path, format!("not a number: {s:?}")))
}

/// `serde_json` writes non-finite numbers as `null`; they read back as NaN.
pub fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub fn nullable_map<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let m = BTreeMap::<String, Option<f64>>::deserialize(d)?;
    Ok(m.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    fs::write(path, text).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).at(path)
}

/// CSV with a header row and numeric rows.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let to_io = |e: csv::Error| CliError::format(path, e);
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(&r).map_err(to_io)?;
    }
    w.flush().at(path)
}

/// Header and numeric rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let to_io = |e: csv::Error| CliError::format(path, e);
    let mut r = csv::Reader::from_path(path).map_err(to_io)?;
    let header = r.headers().map_err(to_io)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(to_io)?;
        rows.push(rec.iter().map(|s| parse_num(s, path)).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}

/// Worker count from `GEOHNN_THREADS`, falling back to rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GEOHNN_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::usage(format!("GEOHNN_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::usage("GEOHNN_THREADS must be positive"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Failed(e.to_string()))
}
