//! Fixed-width numeric formatting for CSV outputs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `header` and `rows` (already joined) with `\n` line endings.
pub fn write_table<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
