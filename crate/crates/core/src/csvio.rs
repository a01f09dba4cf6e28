//! Small helpers shared by the CSV readers and writers.

use crate::error::{Error, Result};

/// Formats `x` with `digits` significant digits in plain decimal notation
/// when the magnitude allows it, otherwise in exponent notation.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can bump the magnitude (9.99 -> 10.0); reformat once
        let reparsed: f64 = s.parse().unwrap_or(x);
        let exp2 = reparsed.abs().log10().floor() as i32;
        if exp2 != exp {
            let decimals = (digits as i32 - 1 - exp2).max(0) as usize;
            return format!("{x:.decimals$}");
        }
        s
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

/// Column lookup for a header row, tolerating a leading `#` and spaces.
pub struct Header {
    names: Vec<String>,
}

impl Header {
    pub fn parse(line: &str) -> Self {
        let line = line.trim().trim_start_matches('#');
        Self {
            names: line.split(',').map(|c| c.trim().to_string()).collect(),
        }
    }

    pub fn index_of(&self, aliases: &[&str]) -> Option<usize> {
        self.names.iter().position(|n| aliases.contains(&n.as_str()))
    }

    pub fn require(&self, aliases: &[&str], context: &str) -> Result<usize> {
        self.index_of(aliases)
            .ok_or_else(|| Error::schema(context, 1, format!("missing column `{}`", aliases[0])))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub fn parse_fields(line: &str, line_no: usize, expected: usize, context: &str) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::schema(
            context,
            line_no,
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::schema(context, line_no, format!("non-numeric field `{f}`")))
        })
        .collect()
}
