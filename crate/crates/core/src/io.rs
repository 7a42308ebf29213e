//! Small helpers shared by the CSV formats: a `# a,b,...` header line followed by
//! one number per line.

use crate::error::{Error, Result};

pub(crate) fn parse_headed_csv(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("expected '#' header line, got '{header}'")))?;
    let fields = header.split(',').map(|f| f.trim().to_string()).collect();
    let values = lines
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value '{l}': {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((fields, values))
}

pub(crate) fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|e| Error::Parse(format!("bad {what} '{s}': {e}")))
}

/// Format with 12 significant digits in scientific notation.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        // Avoid printing negative zero.
        format!("{:.11e}", 0.0)
    } else if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}
