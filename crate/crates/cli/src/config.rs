//! Config files and the flags > file > defaults precedence.
//!
//! A config file is TOML whose keys are the long flag names (`-` or `_`).
//! It is either flat, or split into `[predict]`, `[simulate]`, `[estimate]`
//! and `[generate]` sections of which only the running command's is read.
//! Arrays are accepted wherever a flag takes a list: `[1, 2]` reads as
//! `"1,2"` and `[[1, 2], [3, 4]]` as `"1,2;3,4"`.
//!
//! A `.json` file is read the same way; if it has a `config` object (as the
//! manifests and sidecars written by this tool do), that object is used.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const SECTIONS: [&str; 4] = ["predict", "simulate", "estimate", "generate"];

/// Reads `path` into a JSON object for `section`.
pub fn load_file(path: &Path, section: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value = if path.extension().is_some_and(|e| e == "json") {
        let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        match v.get_mut("config") {
            Some(inner @ Value::Object(_)) => inner.take(),
            _ => v,
        }
    } else {
        let parsed: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::format(path, e.message().to_string()))?;
        serde_json::to_value(parsed).map_err(|e| CliError::format(path, e.to_string()))?
    };
    let Value::Object(mut top) = value else {
        return Err(CliError::format(path, "expected a table of settings"));
    };
    let sectioned = SECTIONS.iter().any(|s| matches!(top.get(*s), Some(Value::Object(_))));
    let table = if sectioned {
        match top.remove(section) {
            Some(Value::Object(t)) => t,
            _ => Map::new(),
        }
    } else {
        top
    };
    table
        .into_iter()
        .map(|(k, v)| Ok((k.replace('-', "_"), normalize(v).map_err(|m| CliError::format(path, format!("{k}: {m}")))?)))
        .collect()
}

fn normalize(v: Value) -> Result<Value, String> {
    match v {
        Value::Array(items) => {
            if items.iter().all(|x| matches!(x, Value::Array(_))) && !items.is_empty() {
                let groups: Result<Vec<String>, String> = items.into_iter().map(join_flat).collect();
                Ok(Value::String(groups?.join(";")))
            } else {
                join_flat(Value::Array(items)).map(Value::String)
            }
        }
        other => Ok(other),
    }
}

fn join_flat(v: Value) -> Result<String, String> {
    let Value::Array(items) = v else {
        return Err("expected an array".into());
    };
    items
        .into_iter()
        .map(|x| match x {
            Value::Number(n) => Ok(n.to_string()),
            Value::String(s) => Ok(s),
            other => Err(format!("unsupported list element {other}")),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|parts| parts.join(","))
}

/// Overlays the flags that were given on the file's values and decodes the
/// result. Absent flags (`None`, `false`) leave the file's value in place.
pub fn resolve<A: Serialize + DeserializeOwned>(flags: &A, file: Option<&Path>, section: &str) -> Result<A, CliError> {
    let Some(path) = file else {
        return Ok(decode(serde_json::to_value(flags).expect("flags serialize"))?);
    };
    let mut merged = load_file(path, section)?;
    let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in given {
        match v {
            Value::Null | Value::Bool(false) => {
                merged.entry(k).or_insert(v);
            }
            v => {
                merged.insert(k, v);
            }
        }
    }
    decode(Value::Object(merged)).map_err(|e| match e {
        CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn decode<A: DeserializeOwned>(v: Value) -> Result<A, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::config(e.to_string()))
}

/// Accepts a string or a bare number for list-valued options.
pub fn de_list<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Number(serde_json::Number),
    }
    Ok(Option::<Raw>::deserialize(d)?.map(|r| match r {
        Raw::Text(s) => s,
        Raw::Number(n) => n.to_string(),
    }))
}
