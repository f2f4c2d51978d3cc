//! Problem specs and method names from flags or files.
//!
//! Inline strengths list one value per table, separated by commas; rank-r
//! specs give one such list per component, separated by semicolons:
//! `--theta 2,2;1.5,1.5` is two tables, each with strengths 2 and 1.5.

use std::path::Path;

use ssvd::{Family, MethodTag, ProblemSpec, Weighting};

use crate::error::CliError;

pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::config(format!("{what}: cannot parse {s:?} as a number")))
        })
        .collect()
}

pub fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::config(format!("{what}: cannot parse {s:?} as a count")))
        })
        .collect()
}

/// One per-table list per component.
pub fn parse_theta(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';').map(|group| parse_list(group, "theta")).collect()
}

pub fn build_spec(theta: &str, c: &str) -> Result<ProblemSpec, CliError> {
    let components = parse_theta(theta)?;
    let c = parse_list(c, "c")?;
    let m = components.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(CliError::config("theta is empty"));
    }
    if let Some(bad) = components.iter().find(|g| g.len() != m) {
        return Err(CliError::config(format!(
            "every theta component needs {m} values, one per table; got {}",
            bad.len()
        )));
    }
    if c.len() != m {
        return Err(CliError::config(format!("{m} tables in theta but {} aspect ratios", c.len())));
    }
    let rows: Vec<Vec<f64>> = (0..m).map(|i| components.iter().map(|g| g[i]).collect()).collect();
    Ok(ProblemSpec::from_rows(&rows, &c)?)
}

/// Reads `theta` and `c` from a TOML or JSON file; other keys are ignored.
pub fn read_spec_file(path: &Path) -> Result<ProblemSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?
    } else {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::format(path, e.message().to_string()))?;
        serde_json::to_value(table).map_err(|e| CliError::format(path, e.to_string()))?
    };
    let field = |key: &str| -> Result<String, CliError> {
        let v = value
            .get(key)
            .ok_or_else(|| CliError::format(path, format!("missing key {key:?}")))?;
        list_text(v).ok_or_else(|| CliError::format(path, format!("{key:?} must be a number or a list of numbers")))
    };
    build_spec(&field("theta")?, &field("c")?)
}

fn list_text(v: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) if items.iter().all(|x| x.is_array()) && !items.is_empty() => {
            let groups: Option<Vec<String>> = items.iter().map(list_text).collect();
            Some(groups?.join(";"))
        }
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(|x| x.as_number().map(|n| n.to_string())).collect();
            Some(parts?.join(","))
        }
        _ => None,
    }
}

/// Exactly one of an inline spec or a spec file.
pub fn resolve_spec(theta: Option<&str>, c: Option<&str>, file: Option<&Path>) -> Result<ProblemSpec, CliError> {
    match (theta, c, file) {
        (Some(t), Some(c), None) => build_spec(t, c),
        (None, None, Some(path)) => read_spec_file(path),
        (_, _, Some(_)) => Err(CliError::config("give either --theta/--c or --spec, not both")),
        (Some(_), None, None) | (None, Some(_), None) => Err(CliError::config("--theta and --c go together")),
        (None, None, None) => Err(CliError::config("a spec is required: --theta and --c, or --spec")),
    }
}

/// `{"theta": [[per table] per component], "c": [...]}`.
pub fn spec_json(spec: &ProblemSpec) -> serde_json::Value {
    let theta: Vec<Vec<f64>> = (0..spec.rank()).map(|j| spec.theta_column(j).iter().copied().collect()).collect();
    serde_json::json!({ "theta": theta, "c": spec.c().iter().copied().collect::<Vec<f64>>() })
}

pub fn parse_method(name: &str) -> Result<MethodTag, CliError> {
    let (family, weighting) = name
        .trim()
        .split_once('/')
        .ok_or_else(|| CliError::config(format!("method {name:?} should look like stack-svd/weighted")))?;
    let family = match family {
        "stack-svd" => Family::StackSvd,
        "svd-stack" => Family::SvdStack,
        other => return Err(CliError::config(format!("unknown family {other:?}"))),
    };
    let weighting = match weighting {
        "unweighted" => Weighting::Unweighted,
        "binary" => Weighting::Binary,
        "weighted" => Weighting::Weighted,
        other => return Err(CliError::config(format!("unknown weighting {other:?}"))),
    };
    Ok(MethodTag::new(family, weighting))
}

/// Comma-separated method names; `all` selects `default`.
pub fn parse_methods(text: &str, default: &[MethodTag]) -> Result<Vec<MethodTag>, CliError> {
    if text.trim() == "all" {
        return Ok(default.to_vec());
    }
    let mut out = Vec::new();
    for name in text.split(',').filter(|s| !s.trim().is_empty()) {
        let tag = parse_method(name)?;
        if !out.contains(&tag) {
            out.push(tag);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("no methods selected"));
    }
    Ok(out)
}

pub fn file_stem(tag: MethodTag) -> String {
    tag.to_string().replace('/', "-")
}
