//! `--config file.json`: a JSON object whose keys are long flag names.
//! Flags given on the command line win over the file.

use serde_json::Value;

use crate::common::CliError;

fn present(args: &[String], flag: &str) -> bool {
    args.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}

fn scalar(key: &str, v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::usage(format!("--config: value of '{key}' must be a string or number"))),
    }
}

pub fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => {
            let p = p.to_string();
            args.remove(pos);
            p
        }
        None => {
            if pos + 1 >= args.len() {
                return Err(CliError::usage("--config needs a path"));
            }
            let p = args.remove(pos + 1);
            args.remove(pos);
            p
        }
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("--config: {path}: {e}")))?;
    let obj: serde_json::Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--config: {path}: {e}")))?;
    let mut extra = Vec::new();
    for (key, v) in &obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || present(&args, &flag) {
            continue;
        }
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(flag),
            Value::Array(items) => {
                for item in items {
                    extra.push(flag.clone());
                    extra.push(scalar(key, item)?);
                }
            }
            other => {
                extra.push(flag);
                extra.push(scalar(key, other)?);
            }
        }
    }
    args.extend(extra);
    Ok(args)
}
