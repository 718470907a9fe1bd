//! CSV tables and JSON summaries. Output is a pure function of the resolved
//! config: no timestamps, keys in fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn output_err(path: &Path, source: std::io::Error) -> Error {
    Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Creates the directory and proves it writable before any work starts.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| output_err(dir, e))?;
    fs::remove_file(&probe).map_err(|e| output_err(dir, e))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_err(path, e.into()))?;
    w.write_record(header).map_err(|e| output_err(path, e.into()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| output_err(path, e.into()))?;
    }
    w.flush().map_err(|e| output_err(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct Artifact {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    artifact: Artifact,
    config: &'a RunConfig,
    results: &'a T,
}

pub fn write_summary<T: Serialize>(path: &Path, config: &RunConfig, results: &T) -> Result<PathBuf> {
    let summary = Summary {
        artifact: Artifact {
            name: ARTIFACT,
            version: VERSION,
        },
        config,
        results,
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(path, text).map_err(|e| output_err(path, e))?;
    Ok(path.to_path_buf())
}
