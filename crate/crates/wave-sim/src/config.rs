//! Loading config files and applying command-line overrides.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};
use wave_sim_core::ScenarioConfig;

use crate::CliError;

fn config_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a config file as a raw JSON tree.
pub fn load_config_value(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, format!("cannot read config: {e}")))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| config_err(path, format!("invalid JSON: {e}")))?;
    if !value.is_object() {
        return Err(config_err(path, "config must be a JSON object"));
    }
    Ok(value)
}

/// Converts a JSON tree to a validated config. `path` only labels errors.
pub fn config_from_value(path: &Path, value: Value) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| config_err(path, e.to_string()))?;
    cfg.validate().map_err(|e| config_err(path, e.to_string()))?;
    Ok(cfg)
}

/// Parses, fills defaults and validates. Unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let value = load_config_value(path)?;
    config_from_value(path, value)
}

/// Sets `key` (dotted for nested blocks, e.g. `aodv.hello_interval_ms`).
/// The raw text is read as JSON when it parses, otherwise as a string.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad parameter key `{key}`")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::Usage(format!(
                    "`{}` is not an object in the config",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cur = obj.entry(*part).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub output_dir: Option<String>,
}

impl Overrides {
    pub fn apply(&self, root: &mut Value) {
        if let Some(seed) = self.seed {
            root["seed"] = serde_json::json!(seed);
        }
        if let Some(d) = self.duration_s {
            root["duration_s"] = serde_json::json!(d);
        }
        if let Some(out) = &self.output_dir {
            root["output_dir"] = Value::String(out.clone());
        }
    }
}

/// `key=v1,v2,...` from the sweep command line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepParam {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_param(arg: &str) -> Result<SweepParam, CliError> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--param expects key=v1,v2,..., got `{arg}`")))?;
    let key = key.trim();
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.is_empty() || values.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("--param expects key=v1,v2,..., got `{arg}`")));
    }
    Ok(SweepParam {
        key: key.to_string(),
        values,
    })
}
