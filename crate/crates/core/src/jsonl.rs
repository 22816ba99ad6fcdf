//! JSON-lines reading and writing.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// A line that failed to parse or validate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

/// Parses every non-blank line. In strict mode the first bad line is an error; in
/// lenient mode bad lines are collected and skipped.
pub fn parse<T: DeserializeOwned>(text: &str, lenient: bool) -> Result<(Vec<T>, Vec<LineError>)> {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(item) => items.push(item),
            Err(e) if lenient => errors.push(LineError {
                line: i + 1,
                reason: e.to_string(),
            }),
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok((items, errors))
}

/// One compact JSON object per line, each terminated by `\n`.
pub fn to_string<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}
