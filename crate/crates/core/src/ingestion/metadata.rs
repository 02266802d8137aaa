//! The CBOR trailer solc appends to runtime code.

use ciborium::Value;

use super::version::Version;

fn trailer(code: &[u8]) -> Option<(usize, Value)> {
    if code.len() < 2 {
        return None;
    }
    let n = code.len();
    let len = u16::from_be_bytes([code[n - 2], code[n - 1]]) as usize;
    if len == 0 || len + 2 > n {
        return None;
    }
    let body = &code[n - 2 - len..n - 2];
    let mut cursor = body;
    let value: Value = ciborium::de::from_reader(&mut cursor).ok()?;
    // the map must account for the whole trailer
    if !cursor.is_empty() {
        return None;
    }
    match &value {
        Value::Map(m) if !m.is_empty() && m.iter().all(|(k, _)| k.is_text()) => {}
        _ => return None,
    }
    Some((n - 2 - len, value))
}

/// Removes the metadata trailer if one is present; otherwise returns the
/// input unchanged.
pub fn strip_metadata(code: &[u8]) -> Vec<u8> {
    match trailer(code) {
        Some((cut, _)) => code[..cut].to_vec(),
        None => code.to_vec(),
    }
}

/// Compiler version recorded under the trailer's `solc` key (0.5.9 and later
/// store it as three raw bytes).
pub fn trailer_version(code: &[u8]) -> Option<Version> {
    let (_, value) = trailer(code)?;
    let Value::Map(entries) = value else { return None };
    entries.iter().find_map(|(k, v)| match (k, v) {
        (Value::Text(k), Value::Bytes(b)) if k == "solc" && b.len() == 3 => {
            Some(Version(b[0] as u32, b[1] as u32, b[2] as u32))
        }
        (Value::Text(k), Value::Text(s)) if k == "solc" => Version::parse_loose(s),
        _ => None,
    })
}
