use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::Manifest;
use crate::error::{Error, Result};

/// Flags over config file over `C::default()`.
///
/// The config file is either a flat JSON object of config keys or a run
/// manifest, whose `resolved_config` is used (the manifest's command must
/// match).
pub(crate) fn resolve<C, A>(command: &str, flags: &A, config_file: Option<&Path>) -> Result<C>
where
    C: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let mut merged = match serde_json::to_value(C::default())? {
        Value::Object(m) => m,
        _ => unreachable!("configs serialise to objects"),
    };
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        let table = match value {
            Value::Object(m) if m.contains_key("resolved_config") && m.contains_key("tool_version") => {
                let manifest: Manifest = serde_json::from_value(Value::Object(m))?;
                if manifest.command != command {
                    return Err(Error::spec(format!(
                        "manifest was written by '{}', not '{command}'",
                        manifest.command
                    )));
                }
                match manifest.resolved_config {
                    Value::Object(m) => m,
                    _ => return Err(Error::spec("manifest resolved_config is not an object")),
                }
            }
            Value::Object(m) => m,
            _ => return Err(Error::spec(format!("{} must hold a JSON object", path.display()))),
        };
        overlay(&mut merged, table);
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        overlay(&mut merged, f);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::spec(format!("configuration: {e}")))
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
}
