//! Config documents: TOML or JSON (chosen by file extension), patched with
//! dotted `key=value` overrides, then deserialized into typed sections.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Reads a config document. `.json` parses as JSON, anything else as TOML.
pub fn load(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    } else {
        let doc: toml::Value = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        serde_json::to_value(doc).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Applies one `a.b.c=value` override. The value is parsed as JSON when it
/// parses (numbers, booleans, arrays), otherwise taken as a bare string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));

    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(Error::Config(format!("override `{key}`: `{part}` is not inside a table")));
            }
        }
        let map = node.as_object_mut().expect("checked object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last segment")
}

/// Deserializes a named top-level section, or `None` when absent.
pub fn section<T: DeserializeOwned>(doc: &Value, name: &str) -> Result<Option<T>> {
    match doc.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("section [{name}]: {e}"))),
    }
}

/// Like [`section`] but the section must exist.
pub fn require<T: DeserializeOwned>(doc: &Value, name: &str) -> Result<T> {
    section(doc, name)?.ok_or_else(|| Error::Config(format!("missing section [{name}]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("a.toml");
        let j = dir.path().join("a.json");
        std::fs::write(&t, "[grid]\nv0 = [1.0, 0.1]\nname = \"x\"\n").unwrap();
        std::fs::write(&j, r#"{"grid": {"v0": [1.0, 0.1], "name": "x"}}"#).unwrap();
        assert_eq!(load(&t).unwrap(), load(&j).unwrap());
    }

    #[test]
    fn overrides_create_and_replace() {
        let mut doc = serde_json::json!({"simulation": {"dt": 0.005}});
        apply_override(&mut doc, "simulation.dt=10").unwrap();
        apply_override(&mut doc, "emulator.n_estimators=7").unwrap();
        apply_override(&mut doc, "emulator.kind=rf").unwrap();
        assert_eq!(doc["simulation"]["dt"], serde_json::json!(10));
        assert_eq!(doc["emulator"]["n_estimators"], serde_json::json!(7));
        assert_eq!(doc["emulator"]["kind"], serde_json::json!("rf"));
        assert!(apply_override(&mut doc, "noequals").is_err());
        assert!(apply_override(&mut doc, "simulation.dt.x=1").is_err());
    }
}
