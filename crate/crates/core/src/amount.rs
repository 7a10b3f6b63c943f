//! Exact fixed-point amounts in integer minor units (two decimal places).

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0:?} is not a decimal amount with at most two fractional digits")]
pub struct AmountError(pub String);

pub const SCALE: u32 = 2;

/// Parses `-12.5`, `100.00`, `7` into minor units. Surrounding whitespace is
/// not accepted; cleaning happens before amounts are read.
pub fn parse_minor_units(text: &str) -> Result<i64, AmountError> {
    let err = || AmountError(text.to_string());
    let (negative, body) = match text.as_bytes().first() {
        Some(b'-') => (true, &text[1..]),
        Some(b'+') => (false, &text[1..]),
        _ => (false, text),
    };
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty()
        || !whole.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > SCALE as usize
        || (body.contains('.') && frac.is_empty())
    {
        return Err(err());
    }
    let whole: i64 = whole.parse().map_err(|_| err())?;
    let mut minor: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
    for _ in frac.len()..SCALE as usize {
        minor *= 10;
    }
    let value = whole
        .checked_mul(10i64.pow(SCALE))
        .and_then(|w| w.checked_add(minor))
        .ok_or_else(err)?;
    Ok(if negative { -value } else { value })
}

/// Renders minor units as `[-]<whole>.<2 digits>`.
pub fn format_minor_units(value: i64) -> String {
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}
