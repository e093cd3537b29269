//! Noise and alternative arguments: JSON text, a `.json` file, or inline
//! shorthand such as `laplace:0.1`, `gaussian(0.2)` or `watson`.

use std::path::Path;

use serde::de::DeserializeOwned;
use sht_core::densities::{AlternativeDescriptor, DensityModel};
use sht_core::noise::{NoiseDescriptor, NoiseModel};

use crate::error::CliError;

fn json_source<T: DeserializeOwned>(arg: &str) -> Option<Result<T, CliError>> {
    let trimmed = arg.trim();
    if trimmed.starts_with('{') {
        return Some(serde_json::from_str(trimmed).map_err(|e| CliError::Usage(format!("bad JSON '{arg}': {e}"))));
    }
    if trimmed.ends_with(".json") {
        return Some(sht_core::io::read_json(Path::new(trimmed)).map_err(CliError::from));
    }
    None
}

/// Splits `name:value`, `name=value` or `name(value)` into its parts.
fn split_inline(arg: &str) -> (String, Option<String>) {
    let s = arg.trim();
    if let Some(open) = s.find('(') {
        if let Some(inner) = s[open + 1..].strip_suffix(')') {
            return (s[..open].trim().to_ascii_lowercase(), Some(inner.trim().to_string()));
        }
    }
    match s.split_once([':', '=']) {
        Some((k, v)) => (k.trim().to_ascii_lowercase(), Some(v.trim().to_string())),
        None => (s.to_ascii_lowercase(), None),
    }
}

fn number(arg: &str, v: &str) -> Result<f64, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("'{arg}': expected a number, got '{v}'")))
}

pub fn noise(arg: &str) -> Result<NoiseModel, CliError> {
    let desc: NoiseDescriptor = match json_source(arg) {
        Some(d) => d?,
        None => {
            let (kind, value) = split_inline(arg);
            let sigma2 = match (kind.as_str(), value) {
                ("identity" | "none", None) => 0.0,
                (_, Some(v)) => number(arg, &v)?,
                (_, None) => return Err(CliError::Usage(format!("noise '{arg}' needs a variance, e.g. {kind}:0.1"))),
            };
            NoiseDescriptor { kind, sigma2 }
        }
    };
    Ok(NoiseModel::from_descriptor(&desc)?)
}

pub fn alternative(arg: &str) -> Result<AlternativeDescriptor, CliError> {
    let desc = match json_source(arg) {
        Some(d) => d?,
        None => {
            let (kind, value) = split_inline(arg);
            let mut v = serde_json::json!({ "kind": kind });
            if let Some(delta) = value {
                v["delta"] = number(arg, &delta)?.into();
            }
            serde_json::from_value(v).map_err(|e| CliError::Usage(format!("alternative '{arg}': {e}")))?
        }
    };
    DensityModel::from_descriptor(&desc)?;
    Ok(desc)
}
