//! Config layering: built-in defaults < config file < command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use geoadapt_core::config::RunConfig;
use toml::{Table, Value};

/// Parses the right-hand side of `--set key=value` as a TOML value, falling back to a
/// plain string so paths need no quoting.
fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut table = Table::try_from(RunConfig::default()).context("serializing defaults")?;

    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        table.extend(file);
    }
    for kv in overrides {
        let Some((key, value)) = kv.split_once('=') else {
            bail!("`--set {kv}`: expected KEY=VALUE");
        };
        table.insert(key.trim().to_string(), parse_value(value.trim()));
    }
    if let Some(seed) = seed {
        table.insert("seed".into(), Value::Integer(seed as i64));
    }

    let config: RunConfig = Value::Table(table).try_into().context("invalid configuration")?;
    config.validate().context("invalid configuration")?;
    Ok(config)
}
