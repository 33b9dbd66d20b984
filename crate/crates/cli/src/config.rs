//! `--config` support: a JSON file whose entries become flags that were not
//! given on the command line.
//!
//! ```json
//! { "seed": 3, "bootstrap_iters": 500,
//!   "fit-tau": { "runs": "runs.csv", "out": "tau.json" } }
//! ```
use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

use crate::{GlobalOpts, Invalid};

const COMMANDS: [&str; 9] = [
    "fit-tau",
    "recommend-lambda",
    "fit-bopt",
    "fit-bcrit",
    "fit-chinchilla",
    "pareto",
    "ema-sim",
    "synth",
    "convert-law",
];

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn flag_given(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

fn scalar(v: &Value) -> Result<Option<String>> {
    Ok(match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(_) => None,
        Value::Array(items) => Some(
            items
                .iter()
                .map(|i| scalar(i).map(|s| s.unwrap_or_default()))
                .collect::<Result<Vec<_>>>()?
                .join(","),
        ),
        Value::Object(_) => bail!("nested objects are only allowed per command"),
    })
}

fn append(args: &mut Vec<OsString>, entries: &Map<String, Value>) -> Result<()> {
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || flag_given(args, &flag) {
            continue;
        }
        match value {
            Value::Bool(true) => args.push(flag.into()),
            Value::Bool(false) => {}
            other => {
                if let Some(text) = scalar(other).with_context(|| format!("config key `{key}`"))? {
                    args.push(flag.into());
                    args.push(text.into());
                }
            }
        }
    }
    Ok(())
}

/// Returns `args` with config-file entries appended for every flag that is
/// not already present.
pub fn merged_args(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let root: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.to_string_lossy()))?;
    let Value::Object(root) = root else {
        bail!("config must be a JSON object");
    };
    let command = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| COMMANDS.contains(&a.as_str()));
    let mut global = Map::new();
    for (k, v) in &root {
        match v {
            Value::Object(section) if COMMANDS.contains(&k.as_str()) => {
                if command.as_deref() == Some(k.as_str()) {
                    append(&mut args, section)?;
                }
            }
            _ => {
                global.insert(k.clone(), v.clone());
            }
        }
    }
    append(&mut args, &global)?;
    Ok(args)
}

pub fn validate(g: &GlobalOpts) -> Result<()> {
    if g.seq_len_default == 0 || g.proxy_width == 0 || g.bootstrap_iters == 0 {
        return Err(Invalid("sequence length, proxy width and bootstrap iterations must be positive".into()).into());
    }
    if !(g.bootstrap_frac > 0.0 && g.bootstrap_frac < 1.0) {
        return Err(Invalid(format!("bootstrap fraction {} must lie in (0, 1)", g.bootstrap_frac)).into());
    }
    Ok(())
}
