//! Loading of structured configuration text: TOML, or JSON when the text
//! starts with `{`. Both parse into the same serde model.

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// 1-based line number of a byte offset.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| {
            let line = e.line();
            let offset = text
                .split_inclusive('\n')
                .take(line.saturating_sub(1))
                .map(str::len)
                .sum::<usize>()
                + e.column().saturating_sub(1);
            Error::parse(line.max(1), offset, e.to_string())
        })
    } else {
        toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            Error::parse(line_of(text, offset), offset, e.message().to_string())
        })
    }
}

pub fn load_config<T: DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
