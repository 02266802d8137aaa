//! Compiler version triples and `pragma solidity` resolution.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version(pub u32, pub u32, pub u32);

impl Version {
    /// Parses the leading `X.Y.Z` of strings like `0.8.21+commit.d9974bed`
    /// or `v0.4.24`.
    pub fn parse_loose(s: &str) -> Option<Version> {
        let s = s.trim().trim_start_matches('v');
        let core: String = s.chars().take_while(|c| c.is_ascii_digit() || *c == '.').collect();
        let mut it = core.split('.').filter(|p| !p.is_empty());
        let a = it.next()?.parse().ok()?;
        let b = it.next().map(|x| x.parse().ok()).unwrap_or(Some(0))?;
        let c = it.next().map(|x| x.parse().ok()).unwrap_or(Some(0))?;
        Some(Version(a, b, c))
    }

    /// Whether the compiler emits PUSH0 (0.8.20 and later).
    pub fn has_push0(&self) -> bool {
        *self >= Version(0, 8, 20)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.0, self.1, self.2)
    }
}

/// Smallest version admitted by one `pragma solidity` expression.
///
/// Only lower bounds matter for the minimum: `^v`, `~v`, `>=v`, `=v` and a
/// bare `v` admit `v` itself, `>v` admits the next patch release. Each `||`
/// alternative is resolved separately and the smallest result wins.
pub fn pragma_minimum(expr: &str) -> Option<Version> {
    expr.split("||").filter_map(range_minimum).min()
}

fn range_minimum(range: &str) -> Option<Version> {
    let mut best: Option<Version> = None;
    let mut upper_only = false;
    // hyphen ranges `a - b`
    if let Some((lo, _)) = range.split_once(" - ") {
        return Version::parse_loose(lo.trim());
    }
    let mut tokens: Vec<String> = Vec::new();
    for raw in range.split_whitespace() {
        // glue operators that were separated from their version (`>= 0.4.24`)
        if let Some(last) = tokens.last_mut() {
            if last.chars().all(|c| "<>=^~".contains(c)) {
                last.push_str(raw);
                continue;
            }
        }
        tokens.push(raw.to_string());
    }
    for tok in tokens {
        let op_len = tok.chars().take_while(|c| "<>=^~".contains(*c)).count();
        let (op, ver) = tok.split_at(op_len);
        let Some(v) = Version::parse_loose(ver.trim_end_matches(['x', '*', '.'])) else {
            continue;
        };
        let lower = match op {
            "" | "=" | "^" | "~" | ">=" => v,
            ">" => Version(v.0, v.1, v.2 + 1),
            "<" | "<=" => {
                upper_only = true;
                continue;
            }
            _ => continue,
        };
        best = Some(best.map_or(lower, |b| b.max(lower)));
    }
    match best {
        Some(v) => Some(v),
        None if upper_only => Some(Version(0, 0, 0)),
        None => None,
    }
}

/// Finds `pragma solidity ...;` directives in source text and returns the
/// largest of their minimum versions (all must hold at once).
pub fn version_from_sources<'a>(texts: impl IntoIterator<Item = &'a str>) -> Option<Version> {
    let mut out: Option<Version> = None;
    for text in texts {
        let mut rest = text;
        while let Some(at) = rest.find("pragma") {
            let after = &rest[at + "pragma".len()..];
            rest = after;
            let trimmed = after.trim_start();
            let Some(body) = trimmed.strip_prefix("solidity") else { continue };
            let Some(end) = body.find(';') else { continue };
            if let Some(v) = pragma_minimum(body[..end].trim()) {
                out = Some(out.map_or(v, |o| o.max(v)));
            }
        }
    }
    out
}
