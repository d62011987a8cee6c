//! Canonical JSON rendering for documents that must be byte-reproducible.
//!
//! Two runs over the same data must produce identical bytes, so every
//! document we persist or exchange goes through this module instead of
//! serializing structs directly: values are first converted to
//! [`serde_json::Value`], whose object representation keeps keys in sorted
//! order, and then printed with serde_json's deterministic number formatting
//! (shortest representation that round-trips the exact f64).

use serde::Serialize;

/// Render a value as pretty-printed canonical JSON with a trailing newline,
/// suitable for writing to a file.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Render a value as compact canonical JSON on a single line, suitable for
/// JSON Lines streams.
pub fn to_canonical_line<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}
