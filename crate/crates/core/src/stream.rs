//! Text stream format: a header `n=<int> p=<real>` followed by one
//! `<index> <delta>` update per line, indices 1-based, `#` starting a
//! comment. Parse errors carry the 1-based line number.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct StreamParseError {
    pub line: usize,
    pub message: String,
}

/// Parsed stream: dimension, exponent and 0-based updates.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub n: u64,
    pub p: f64,
    /// (coordinate, delta), coordinate already shifted to 0-based.
    pub updates: Vec<(u64, i64)>,
}

pub const DEFAULT_MAGNITUDE_BOUND: i64 = 1_000_000_000;

impl StreamFile {
    pub fn parse(text: &str) -> Result<Self, StreamParseError> {
        let mut header: Option<(u64, f64)> = None;
        let mut updates = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if header.is_none() {
                header = Some(parse_header(line, line_no)?);
                continue;
            }
            let (n, _) = header.unwrap();
            let mut parts = line.split_whitespace();
            let index: u64 = parts
                .next()
                .ok_or_else(|| err(line_no, "missing index"))?
                .parse()
                .map_err(|e| err(line_no, format!("bad index: {e}")))?;
            let delta: i64 = parts
                .next()
                .ok_or_else(|| err(line_no, "missing delta"))?
                .parse()
                .map_err(|e| err(line_no, format!("bad delta: {e}")))?;
            if parts.next().is_some() {
                return Err(err(line_no, "trailing tokens after `<index> <delta>`"));
            }
            if index < 1 || index > n {
                return Err(err(line_no, format!("index {index} outside [1, {n}]")));
            }
            if delta.abs() > DEFAULT_MAGNITUDE_BOUND {
                return Err(err(
                    line_no,
                    format!("delta {delta} exceeds magnitude bound {DEFAULT_MAGNITUDE_BOUND}"),
                ));
            }
            updates.push((index - 1, delta));
        }
        let (n, p) = header.ok_or_else(|| err(1, "missing `n=<int> p=<real>` header"))?;
        Ok(StreamFile { n, p, updates })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, StreamParseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(u64, f64), StreamParseError> {
    let mut n: Option<u64> = None;
    let mut p: Option<f64> = None;
    for token in line.split_whitespace() {
        if let Some(v) = token.strip_prefix("n=") {
            n = Some(
                v.parse()
                    .map_err(|e| err(line_no, format!("bad n: {e}")))?,
            );
        } else if let Some(v) = token.strip_prefix("p=") {
            p = Some(
                v.parse()
                    .map_err(|e| err(line_no, format!("bad p: {e}")))?,
            );
        } else {
            return Err(err(line_no, format!("unexpected header token `{token}`")));
        }
    }
    match (n, p) {
        (Some(n), Some(p)) if n >= 1 && p > 0.0 && p < 2.0 => Ok((n, p)),
        (Some(_), Some(_)) => Err(err(line_no, "need n >= 1 and p in (0, 2)")),
        _ => Err(err(line_no, "header must provide both n= and p=")),
    }
}

fn err(line: usize, message: impl Into<String>) -> StreamParseError {
    StreamParseError {
        line,
        message: message.into(),
    }
}
