//! Run configuration: defaults, then a flat `key = value` file, then a JSON
//! override, then explicit flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{invalid, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "MA_LAB_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    // exponent engine
    pub n: u32,
    pub eps: f64,
    pub chi: Option<f64>,
    pub m: f64,
    pub delta0: Option<f64>,
    pub k_max: usize,
    // radial profile
    pub b: f64,
    pub d: f64,
    pub alpha: f64,
    pub smoothing_width: f64,
    // grid
    pub grid_size: usize,
    pub background: String,
    pub cosine_c: f64,
    pub radii: Vec<f64>,
    // perturbation family
    pub perturbation: String,
    pub gamma: f64,
    pub radius: f64,
    pub width: f64,
    pub amplitudes: Vec<f64>,
    pub s: f64,
    pub p: f64,
    // tolerances
    pub tol: f64,
    pub tol_psd: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            n: 2,
            eps: 0.1,
            chi: None,
            m: 2.0,
            delta0: None,
            k_max: 200,
            b: 1.0,
            d: 0.5,
            alpha: 0.1,
            smoothing_width: crate::radial::DEFAULT_SMOOTHING_WIDTH,
            grid_size: 16,
            background: "flat".into(),
            cosine_c: 1.0,
            radii: vec![0.0, 0.07, 0.13, 0.2, 0.3],
            perturbation: "trig".into(),
            gamma: 0.5,
            radius: 0.2,
            width: 0.05,
            amplitudes: crate::experiments::PerturbationFamily::default_amplitudes(),
            s: 2.0,
            p: 2.0,
            tol: 1e-8,
            tol_psd: 1e-10,
            max_sweeps: 50_000,
            seed: 1,
            output_dir: PathBuf::from("ma-lab-out"),
        }
    }
}

/// Parses one value of the flat format: JSON if it parses, then a
/// comma-separated list of numbers, then a bare string.
fn flat_value(text: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return v;
    }
    if text.contains(',') {
        let items: Option<Vec<Value>> = text.split(',').map(|t| serde_json::from_str::<Value>(t.trim()).ok().filter(Value::is_number)).collect();
        if let Some(items) = items {
            return Value::Array(items);
        }
    }
    Value::String(text.to_string())
}

pub fn parse_flat(text: &str) -> Result<Map<String, Value>> {
    let mut out = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid("config", format!("line {}: expected key = value", lineno + 1)))?;
        out.insert(key.trim().replace('-', "_"), flat_value(value.trim()));
    }
    Ok(out)
}

/// Resolves the layers into a config. Unknown keys are rejected.
pub fn resolve(command: &str, file: Option<&Path>, json_override: Option<&str>, flags: Map<String, Value>) -> Result<RunConfig> {
    let mut base = RunConfig::default();
    if let Ok(root) = std::env::var(OUTPUT_ENV) {
        if !root.is_empty() {
            base.output_dir = PathBuf::from(root);
        }
    }
    let mut merged = match serde_json::to_value(base)? {
        Value::Object(m) => m,
        _ => unreachable!("config serializes to an object"),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        merged.extend(parse_flat(&text)?);
    }
    if let Some(text) = json_override {
        match serde_json::from_str::<Value>(text).map_err(|e| invalid("set_json", e.to_string()))? {
            Value::Object(m) => merged.extend(m),
            _ => return Err(invalid("set_json", "must be a JSON object")),
        }
    }
    merged.extend(flags);
    merged.insert("command".into(), Value::String(command.to_string()));
    serde_json::from_value(Value::Object(merged)).map_err(|e| invalid("config", e.to_string()))
}

impl RunConfig {
    /// Checks every parameter the command will use.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, x: f64| if x > 0.0 && x.is_finite() { Ok(()) } else { Err(invalid(name, format!("must be positive, got {x}"))) };
        crate::exponents::check_dimension(self.n)?;
        match self.command.as_str() {
            "exponents" => {
                if !(self.eps >= 0.0 && self.eps.is_finite()) {
                    return Err(invalid("eps", "must be finite and non-negative"));
                }
                positive("m", self.m)?;
                if let Some(chi) = self.chi {
                    positive("chi", chi)?;
                }
                if let Some(d0) = self.delta0 {
                    if !(d0 >= 0.0 && d0.is_finite()) {
                        return Err(invalid("delta0", "must be finite and non-negative"));
                    }
                }
                if self.k_max == 0 {
                    return Err(invalid("k_max", "must be positive"));
                }
            }
            "sharpness" => {
                crate::radial::RadialProfile::new(self.b, self.d, self.alpha, self.n, self.smoothing_width)?.require_valid()?;
            }
            _ => {
                if self.n != 2 {
                    return Err(invalid("n", "the grid commands run in complex dimension 2"));
                }
                crate::grid::Grid::new(self.grid_size)?;
                positive("tol", self.tol)?;
                positive("tol_psd", self.tol_psd)?;
                positive("eps", self.eps)?;
                if self.max_sweeps == 0 {
                    return Err(invalid("max_sweeps", "must be positive"));
                }
                if !matches!(self.background.as_str(), "flat" | "cosine") {
                    return Err(invalid("background", format!("unknown family {:?}", self.background)));
                }
                if !matches!(self.perturbation.as_str(), "trig" | "peak" | "indicator") {
                    return Err(invalid("perturbation", format!("unknown family {:?}", self.perturbation)));
                }
                if self.command == "egz" {
                    positive("s", self.s)?;
                    if !(self.p > 1.0) {
                        return Err(invalid("p", "must exceed 1"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn command_dir(&self) -> PathBuf {
        self.output_dir.join(&self.command)
    }
}
