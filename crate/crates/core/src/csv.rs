//! Minimal CSV emission: header row, comma separators, Unix newlines and
//! reals printed in plain decimal notation with 10 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const SIGNIFICANT_DIGITS: i32 = 10;

/// Format a real with [`SIGNIFICANT_DIGITS`] significant digits, never in
/// exponent notation.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return format!("{:.*}", (SIGNIFICANT_DIGITS - 1) as usize, 0.0);
    }
    // Round to the target precision first so that e.g. 9.9999999999 moves
    // up a decade before the decimal count is chosen.
    let rounded: f64 = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x)
        .parse()
        .unwrap_or(x);
    let magnitude = rounded.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

/// Buffered table writer: rows are accumulated in memory and written in
/// one go.
#[derive(Debug, Clone, Default)]
pub struct Table {
    body: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Self {
            body: String::new(),
        };
        t.push_raw(header.iter().map(|h| h.to_string()).collect());
        t
    }

    pub fn push_raw(&mut self, cells: Vec<String>) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.body
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.body.as_bytes())
    }
}
