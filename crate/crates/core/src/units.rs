//! Byte, bandwidth and time units.
//!
//! Sizes and network rates are binary: 1 KB = 1024 B, 1 MB = 1024 KB,
//! 1 GB = 1024 MB. Vendor hardware figures (TFLOPs, memory GB/s) are decimal
//! and live in [`crate::hardware`].

use crate::error::{Error, Result};

pub const KB: f64 = 1024.0;
pub const MB: f64 = 1024.0 * 1024.0;
pub const GB: f64 = 1024.0 * 1024.0 * 1024.0;

/// Megabytes per second to bytes per second.
pub fn mb_per_sec(mbps: f64) -> f64 {
    mbps * MB
}

pub fn to_ms(seconds: f64) -> f64 {
    seconds * 1e3
}

/// Formats seconds as milliseconds with three decimals.
pub fn fmt_ms(seconds: f64) -> String {
    format!("{:.3}", to_ms(seconds))
}

fn split_number(input: &str) -> Result<(f64, String)> {
    let s = input.trim();
    let end = s
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(end);
    let value: f64 = num
        .parse()
        .map_err(|_| Error::parse("quantity", format!("`{input}` does not start with a number")))?;
    Ok((value, unit.trim().to_ascii_lowercase()))
}

/// Parses a byte quantity: `B`, `KB`, `MB`, `GB` (binary); a bare number is bytes.
pub fn parse_bytes(input: &str) -> Result<f64> {
    let (value, unit) = split_number(input)?;
    let scale = match unit.as_str() {
        "" | "b" => 1.0,
        "kb" | "kib" => KB,
        "mb" | "mib" => MB,
        "gb" | "gib" => GB,
        _ => {
            return Err(Error::parse(
                "byte quantity",
                format!("unknown unit in `{input}`"),
            ))
        }
    };
    Ok(value * scale)
}

/// Parses a bandwidth: `B/s`, `KB/s`, `MB/s` (binary); a bare number is bytes/s.
pub fn parse_bandwidth(input: &str) -> Result<f64> {
    let (value, unit) = split_number(input)?;
    let scale = match unit.as_str() {
        "" | "b/s" => 1.0,
        "kb/s" => KB,
        "mb/s" => MB,
        "gb/s" => GB,
        _ => return Err(Error::parse("bandwidth", format!("unknown unit in `{input}`"))),
    };
    Ok(value * scale)
}

/// Parses a duration into seconds: `us`, `ms`, `s`; a bare number is milliseconds.
pub fn parse_duration(input: &str) -> Result<f64> {
    let (value, unit) = split_number(input)?;
    let scale = match unit.as_str() {
        "us" => 1e-6,
        "" | "ms" => 1e-3,
        "s" => 1.0,
        _ => return Err(Error::parse("duration", format!("unknown unit in `{input}`"))),
    };
    Ok(value * scale)
}
