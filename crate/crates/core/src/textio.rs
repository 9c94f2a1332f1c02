//! Small helpers shared by the structured-text file formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Formats a real with six significant digits, shortest representation.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

pub fn sig6_opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `key=value` header block terminated by a `---` line.
pub(crate) struct Header {
    values: BTreeMap<String, (usize, String)>,
    /// 1-based line number of the terminator.
    pub end_line: usize,
}

impl Header {
    /// Parses header lines starting at `lines[start]`; `start` is 0-based.
    pub fn parse<'a>(lines: &[&'a str], start: usize) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, line) in lines.iter().enumerate().skip(start) {
            let line_no = idx + 1;
            if *line == "---" {
                return Ok(Header {
                    values,
                    end_line: line_no,
                });
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key=value, got {line:?}")))?;
            values.insert(key.trim().to_string(), (line_no, value.trim().to_string()));
        }
        Err(Error::parse(lines.len(), "unterminated header block"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let (line, raw) = self
            .values
            .get(key)
            .ok_or_else(|| Error::parse(self.end_line, format!("missing header field {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::parse(*line, format!("invalid value {raw:?} for {key:?}")))
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(self.end_line, format!("missing header field {key:?}")))
    }
}

/// Writers always terminate the last record; a missing newline means the file was cut short.
pub(crate) fn check_terminated(text: &str) -> Result<()> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::parse(
            text.lines().count(),
            "file truncated inside the last record",
        ));
    }
    Ok(())
}

/// Checks the first line against `magic vN`.
pub(crate) fn check_magic(lines: &[&str], magic: &str, version: u32) -> Result<()> {
    let first = lines
        .first()
        .ok_or_else(|| Error::parse(1, "empty file"))?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::parse(1, format!("expected {magic:?} file")));
    }
    let found = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::parse(1, "missing format version"))?;
    if found != version {
        return Err(Error::Format(format!(
            "{magic} version {found} is not supported (expected {version})"
        )));
    }
    Ok(())
}

pub(crate) fn parse_field<T: FromStr>(raw: &str, line: usize, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what}: {raw:?}")))
}

pub(crate) fn parse_bool01(raw: &str, line: usize, what: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(line, format!("invalid {what}: {other:?}"))),
    }
}
