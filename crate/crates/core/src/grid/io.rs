//! Field snapshots: raw little-endian `f64` arrays with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    pub metadata: serde_json::Value,
}

impl FieldSidecar {
    pub fn new(name: &str, size: usize, metadata: serde_json::Value) -> Self {
        Self {
            name: name.to_string(),
            dtype: "f64-le".into(),
            shape: vec![size; 4],
            axes: ["x1", "y1", "x2", "y2"].map(String::from).to_vec(),
            metadata,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<dir>/<name>.f64` and `<dir>/<name>.json`.
pub fn write_field(dir: &Path, values: &[f64], sidecar: &FieldSidecar) -> Result<(PathBuf, PathBuf)> {
    let expected: usize = sidecar.shape.iter().product();
    if expected != values.len() {
        return Err(invalid("field", format!("{} values for shape {:?}", values.len(), sidecar.shape)));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let bin = dir.join(format!("{}.f64", sidecar.name));
    let json = dir.join(format!("{}.json", sidecar.name));
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| io_err(&bin, e))?;
    let text = serde_json::to_string_pretty(sidecar)? + "\n";
    fs::write(&json, text).map_err(|e| io_err(&json, e))?;
    Ok((bin, json))
}

pub fn read_field(dir: &Path, name: &str) -> Result<(Vec<f64>, FieldSidecar)> {
    let json = dir.join(format!("{name}.json"));
    let bin = dir.join(format!("{name}.f64"));
    let sidecar: FieldSidecar = serde_json::from_str(&fs::read_to_string(&json).map_err(|e| io_err(&json, e))?)?;
    let bytes = fs::read(&bin).map_err(|e| io_err(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(invalid("field", format!("{} is not a whole number of f64 values", bin.display())));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    if values.len() != sidecar.shape.iter().product::<usize>() {
        return Err(invalid("field", "value count does not match the sidecar shape"));
    }
    Ok((values, sidecar))
}
