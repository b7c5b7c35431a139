//! Run configuration files: a JSON object with the experiment fields plus an
//! optional `out_dir`, or a run manifest written by an earlier `fedsim run`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::Value;

use fedsim_core::engine::{ExperimentConfig, RunManifest};
use fedsim_core::selector::SelectorKind;
use fedsim_core::{Error, Result};

pub const DEFAULT_OUT_DIR: &str = "fedsim-out";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    pub experiment: ExperimentConfig,
    pub out_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub selector: Option<SelectorKind>,
    pub out: Option<PathBuf>,
}

/// Deserialize `value`, collecting every key the schema does not know.
fn strict<T: DeserializeOwned>(value: Value, what: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let parsed: std::result::Result<T, _> = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()));
    let mut problems: Vec<String> = unknown.iter().map(|k| format!("unknown key '{k}'")).collect();
    match parsed {
        Ok(v) if problems.is_empty() => Ok(v),
        Ok(_) => Err(Error::Config(format!("invalid {what}: {}", problems.join("; ")))),
        Err(e) => {
            problems.push(e.to_string());
            Err(Error::Config(format!("invalid {what}: {}", problems.join("; "))))
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfigFile> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    let file = if map.contains_key("manifest_version") {
        let manifest: RunManifest = strict(Value::Object(map), "manifest")?;
        RunConfigFile {
            experiment: manifest.config,
            out_dir: None,
        }
    } else {
        let out_dir = match map.remove("out_dir") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(other) => return Err(Error::Config(format!("out_dir must be a string, got {other}"))),
        };
        RunConfigFile {
            experiment: strict(Value::Object(map), "config")?,
            out_dir,
        }
    };
    file.experiment.validate()?;
    Ok(file)
}

pub fn load_config(path: &Path) -> Result<RunConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Apply command-line overrides; returns the experiment and the output directory.
pub fn resolve(file: RunConfigFile, overrides: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = file.experiment;
    if !overrides.seeds.is_empty() {
        cfg.seeds = overrides.seeds.clone();
    }
    if let Some(sel) = overrides.selector {
        cfg.selector = sel;
    }
    cfg.validate()?;
    let out = overrides
        .out
        .clone()
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok((cfg, out))
}
