//! Compressed solc source maps (`s:l:f:j[:m]` items separated by `;`).

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpKind {
    IntoFunction,
    ReturnFromFunction,
    Regular,
}

impl JumpKind {
    fn parse(field: &str) -> Option<Self> {
        match field {
            "i" => Some(JumpKind::IntoFunction),
            "o" => Some(JumpKind::ReturnFromFunction),
            "-" => Some(JumpKind::Regular),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            JumpKind::IntoFunction => "i",
            JumpKind::ReturnFromFunction => "o",
            JumpKind::Regular => "-",
        }
    }
}

/// One fully materialized source-map item.
///
/// `file` is the compiler's source index, `-1` for generated code. Newer
/// compilers append a modifier-depth field, which is carried along so
/// re-encoding is lossless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceMapEntry {
    pub start: i64,
    pub length: i64,
    pub file: i64,
    pub jump: JumpKind,
    pub modifier_depth: Option<i64>,
}

impl SourceMapEntry {
    pub const GENERATED: SourceMapEntry = SourceMapEntry {
        start: -1,
        length: -1,
        file: -1,
        jump: JumpKind::Regular,
        modifier_depth: None,
    };

    pub fn is_generated(&self) -> bool {
        self.file < 0
    }

    /// Character range when this entry refers to user source.
    pub fn range(&self) -> Option<(usize, usize)> {
        if self.file < 0 || self.start < 0 || self.length < 0 {
            return None;
        }
        Some((self.start as usize, self.length as usize))
    }
}

impl fmt::Display for SourceMapEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.start, self.length, self.file, self.jump.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SourceMapError {
    #[error("malformed source-map item {index}: {item:?}")]
    MalformedItem { index: usize, item: String },
}

/// Decodes a compressed source map. Empty input yields an empty list.
pub fn decode_source_map(encoded: &str) -> Result<Vec<SourceMapEntry>, SourceMapError> {
    let encoded = encoded.trim();
    if encoded.is_empty() {
        return Ok(Vec::new());
    }
    let mut prev = SourceMapEntry {
        start: 0,
        length: 0,
        file: -1,
        jump: JumpKind::Regular,
        modifier_depth: None,
    };
    let mut out = Vec::with_capacity(encoded.len() / 4);
    for (index, item) in encoded.split(';').enumerate() {
        let malformed = || SourceMapError::MalformedItem {
            index,
            item: item.to_string(),
        };
        let mut entry = prev;
        let fields: Vec<&str> = item.split(':').collect();
        if fields.len() > 5 {
            return Err(malformed());
        }
        for (k, field) in fields.iter().enumerate() {
            if field.is_empty() {
                continue;
            }
            match k {
                0 => entry.start = field.parse().map_err(|_| malformed())?,
                1 => entry.length = field.parse().map_err(|_| malformed())?,
                2 => entry.file = field.parse().map_err(|_| malformed())?,
                3 => entry.jump = JumpKind::parse(field).ok_or_else(malformed)?,
                _ => entry.modifier_depth = Some(field.parse().map_err(|_| malformed())?),
            }
        }
        out.push(entry);
        prev = entry;
    }
    Ok(out)
}

/// Encodes entries with the compiler's delta rules: a field equal to the
/// previous item's value is omitted and trailing empty fields are dropped.
pub fn encode_source_map(entries: &[SourceMapEntry]) -> String {
    let mut out = String::new();
    let mut prev: Option<SourceMapEntry> = None;
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let mut fields: Vec<String> = Vec::with_capacity(5);
        let same = |a: bool| if a { String::new() } else { "x".into() };
        match prev {
            None => {
                fields.push(e.start.to_string());
                fields.push(e.length.to_string());
                fields.push(e.file.to_string());
                fields.push(e.jump.as_str().to_string());
                if let Some(m) = e.modifier_depth {
                    fields.push(m.to_string());
                }
            }
            Some(p) => {
                let f0 = same(p.start == e.start);
                fields.push(if f0.is_empty() { f0 } else { e.start.to_string() });
                let f1 = same(p.length == e.length);
                fields.push(if f1.is_empty() { f1 } else { e.length.to_string() });
                let f2 = same(p.file == e.file);
                fields.push(if f2.is_empty() { f2 } else { e.file.to_string() });
                fields.push(if p.jump == e.jump { String::new() } else { e.jump.as_str().to_string() });
                fields.push(match (p.modifier_depth, e.modifier_depth) {
                    (a, b) if a == b => String::new(),
                    (_, Some(m)) => m.to_string(),
                    // an absent depth cannot be expressed after a present one; solc never emits this
                    (_, None) => String::new(),
                });
            }
        }
        while fields.last().is_some_and(|f| f.is_empty()) {
            fields.pop();
        }
        out.push_str(&fields.join(":"));
        prev = Some(*e);
    }
    out
}
