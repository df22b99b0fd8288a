//! `--config run.json`: a JSON object holding `command` plus that command's
//! flags, e.g. `{"command": "solve", "instance": "ex1.json", "criterion":
//! "avg"}`. Keys may use `snake_case`; `true` switches a flag on, arrays are
//! joined with commas. Paths are taken relative to the working directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::Failure;

const COMMANDS: [&str; 6] = ["solve", "compare", "sweep", "simulate", "estimate", "serve"];

fn scalar(key: &str, v: &Value) -> Result<String, Failure> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Failure::Usage(format!("config key {key:?}: expected a string or number"))),
    }
}

fn flag_name(key: &str) -> String {
    // the loss penalty keeps its mathematical name
    if key == "K" {
        "--K".into()
    } else {
        format!("--{}", key.replace('_', "-"))
    }
}

fn config_args(obj: &Map<String, Value>) -> Result<(String, Vec<OsString>), Failure> {
    let command = match obj.get("command") {
        Some(Value::String(c)) if COMMANDS.contains(&c.as_str()) => c.clone(),
        Some(other) => return Err(Failure::Usage(format!("config: unknown command {other}"))),
        None => return Err(Failure::Usage("config: missing \"command\"".into())),
    };
    let mut args = Vec::new();
    for (key, value) in obj.iter().filter(|(k, _)| *k != "command") {
        let flag = flag_name(key);
        match value {
            Value::Bool(true) => args.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items
                    .iter()
                    .map(|v| scalar(key, v))
                    .collect::<Result<Vec<_>, _>>()?
                    .join(",");
                args.push(flag.into());
                args.push(joined.into());
            }
            Value::Object(_) => return Err(Failure::Usage(format!("config key {key:?}: nested objects are not flags"))),
            v => {
                args.push(flag.into());
                args.push(scalar(key, v)?.into());
            }
        }
    }
    Ok((command, args))
}

/// The `--config` path, if one was given.
pub fn find(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Rebuilds the argument list: program name, the config's command and flags,
/// then whatever else was given on the command line.
pub fn expand(argv: &[OsString], path: &Path) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Failure::Input(format!("config {}: expected a JSON object", path.display())))?;
    let (command, from_config) = config_args(obj)?;

    let mut rest = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            it.next();
        } else if !s.starts_with("--config=") {
            rest.push(a.clone());
        }
    }
    if let Some(first) = rest.first().map(|a| a.to_string_lossy().into_owned()) {
        if first == command {
            rest.remove(0);
        } else if COMMANDS.contains(&first.as_str()) {
            return Err(Failure::Usage(format!(
                "command {first:?} conflicts with config command {command:?}"
            )));
        }
    }
    let mut out = vec![argv[0].clone(), command.into()];
    out.extend(from_config);
    out.extend(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_from_object() {
        let obj = json!({"command": "sweep", "scenario": 1, "beta": 0.2, "K": 50, "burn_in": 3, "jobs": null, "lambda": [0.1, 0.2]});
        let (cmd, args) = config_args(obj.as_object().unwrap()).unwrap();
        assert_eq!(cmd, "sweep");
        let args: Vec<String> = args.into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(
            args,
            ["--scenario", "1", "--beta", "0.2", "--K", "50", "--burn-in", "3", "--lambda", "0.1,0.2"]
        );
    }

    #[test]
    fn rejects_unknown_command() {
        assert!(config_args(json!({"command": "plot"}).as_object().unwrap()).is_err());
        assert!(config_args(json!({"instance": "x"}).as_object().unwrap()).is_err());
    }
}
