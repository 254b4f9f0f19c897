//! `--config` overlay: keys of a JSON object replace the matching flags.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use std::path::Path;

/// Keys that belong to the global options rather than a subcommand.
pub const GLOBAL_KEYS: [&str; 2] = ["seed", "threads"];

pub fn load(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(m) => Ok(m),
        _ => bail!("config {} must hold a JSON object", path.display()),
    }
}

/// Round-trips the parsed flags through JSON with the config's keys on top.
pub fn overlay<T: Serialize + DeserializeOwned>(args: T, config: &Map<String, Value>) -> Result<T> {
    let Value::Object(mut fields) = serde_json::to_value(&args)? else {
        bail!("subcommand options are not an object");
    };
    for (key, value) in config {
        if GLOBAL_KEYS.contains(&key.as_str()) {
            continue;
        }
        let slot = fields.get_mut(key.as_str()).with_context(|| format!("config key `{key}` is not an option of this command"))?;
        *slot = value.clone();
    }
    serde_json::from_value(Value::Object(fields)).context("config values do not fit the command options")
}
