//! Write-log models of EVM memory and storage.

use super::value::{OpKind, SymValue};
use crate::U256;

#[derive(Debug, Clone)]
pub enum CopySource {
    Calldata(SymValue),
    Code(SymValue),
    /// Return data, external code, or anything else not modeled.
    Opaque { call: bool },
}

#[derive(Debug, Clone)]
pub enum MemWrite {
    Word { offset: SymValue, value: SymValue },
    Byte { offset: SymValue, value: SymValue },
    Copy { dest: SymValue, size: SymValue, source: CopySource },
}

/// Result of looking up one 32-byte word.
#[derive(Debug, Clone)]
pub enum MemRead {
    Value(SymValue),
    /// Inside a copied region, `delta` bytes past its start.
    Copied { source: CopySource, delta: U256 },
    /// Partial overlap or an incomparable symbolic offset.
    Unknown,
}

/// `offset = base + c`, where `base` is `None` for constants.
pub(crate) fn split_offset(v: &SymValue) -> (Option<SymValue>, U256) {
    if let Some(c) = v.as_const() {
        return (None, c);
    }
    if let Some((OpKind::Add, args)) = v.as_op() {
        if let Some(c) = args[1].as_const() {
            let (b, inner) = split_offset(&args[0]);
            return (b, inner.wrapping_add(c));
        }
    }
    (Some(v.clone()), U256::ZERO)
}

enum Relation {
    Same,
    Offset(U256),
    Unrelated,
    Incomparable,
}

fn relate(read: &SymValue, write: &SymValue) -> Relation {
    if read == write {
        return Relation::Same;
    }
    let (rb, rc) = split_offset(read);
    let (wb, wc) = split_offset(write);
    match (rb, wb) {
        (None, None) => Relation::Offset(rc.wrapping_sub(wc)),
        (Some(a), Some(b)) if a == b => Relation::Offset(rc.wrapping_sub(wc)),
        // constant scratch/pointer slots against heap writes at computed offsets
        (None, Some(_)) | (Some(_), None) => Relation::Unrelated,
        _ => Relation::Incomparable,
    }
}

fn overlaps(delta: U256, write_len: U256) -> bool {
    // read [d, d+32) against write [0, len), with d taken modulo 2^256
    delta < write_len || U256::ZERO.wrapping_sub(delta) < U256::from(32u8)
}

#[derive(Debug, Clone, Default)]
pub struct Memory {
    log: Vec<MemWrite>,
}

impl Memory {
    pub fn write(&mut self, w: MemWrite) {
        self.log.push(w);
    }

    pub fn entries(&self) -> &[MemWrite] {
        &self.log
    }

    /// Newest write that decides the word at `offset`; zero when none does.
    pub fn read(&self, offset: &SymValue) -> MemRead {
        match self.read_word(offset) {
            MemRead::Unknown => match offset.as_const().and_then(|at| self.compose_constant(at)) {
                Some(v) => MemRead::Value(v),
                None => MemRead::Unknown,
            },
            r => r,
        }
    }

    /// Word at a constant offset assembled byte by byte; `None` unless
    /// every covering write is a variable-free word or byte.
    fn compose_constant(&self, at: U256) -> Option<SymValue> {
        let mut word = [0u8; 32];
        for (i, b) in word.iter_mut().enumerate() {
            *b = self.byte_at(at.wrapping_add(U256::from(i)))?;
        }
        Some(SymValue::constant(U256::from_be_bytes(word)))
    }

    fn byte_at(&self, pos: U256) -> Option<u8> {
        for w in self.log.iter().rev() {
            let (start, len) = match w {
                MemWrite::Word { offset, .. } => (offset, U256::from(32u8)),
                MemWrite::Byte { offset, .. } => (offset, U256::from(1u8)),
                MemWrite::Copy { dest, size, .. } => (dest, size.as_const().unwrap_or(U256::MAX)),
            };
            let Some(start) = start.as_const() else { continue };
            let d = pos.wrapping_sub(start);
            if d >= len {
                continue;
            }
            return match w {
                MemWrite::Word { value, .. } => value.eval_concrete().map(|v| v.to_be_bytes::<32>()[d.to::<usize>()]),
                MemWrite::Byte { value, .. } => value.eval_concrete().map(|v| v.to_be_bytes::<32>()[31]),
                MemWrite::Copy { .. } => None,
            };
        }
        Some(0)
    }

    fn read_word(&self, offset: &SymValue) -> MemRead {
        for w in self.log.iter().rev() {
            match w {
                MemWrite::Word { offset: wo, value } => match relate(offset, wo) {
                    Relation::Same => return MemRead::Value(value.clone()),
                    Relation::Offset(d) if d.is_zero() => return MemRead::Value(value.clone()),
                    Relation::Offset(d) if overlaps(d, U256::from(32u8)) => return MemRead::Unknown,
                    Relation::Incomparable => return MemRead::Unknown,
                    _ => {}
                },
                MemWrite::Byte { offset: wo, .. } => match relate(offset, wo) {
                    Relation::Same => return MemRead::Unknown,
                    Relation::Offset(d) if overlaps(d, U256::from(1u8)) => return MemRead::Unknown,
                    Relation::Incomparable => return MemRead::Unknown,
                    _ => {}
                },
                MemWrite::Copy { dest, size, source } => {
                    if size.as_const().is_some_and(|s| s.is_zero()) {
                        continue;
                    }
                    match relate(offset, dest) {
                        Relation::Same => return MemRead::Copied { source: source.clone(), delta: U256::ZERO },
                        Relation::Offset(d) => match size.as_const() {
                            Some(len) => {
                                if d < len && len - d >= U256::from(32u8) {
                                    return MemRead::Copied { source: source.clone(), delta: d };
                                }
                                if overlaps(d, len) {
                                    return MemRead::Unknown;
                                }
                            }
                            None if d < U256::from(u64::MAX) => {
                                return MemRead::Copied { source: source.clone(), delta: d }
                            }
                            None => return MemRead::Unknown,
                        },
                        Relation::Incomparable => return MemRead::Unknown,
                        Relation::Unrelated => {}
                    }
                }
            }
        }
        MemRead::Value(SymValue::constant(U256::ZERO))
    }
}

/// Storage writes over an unconstrained initial store. Reads return the
/// newest write to a syntactically equal slot; other slots are assumed not
/// to alias.
#[derive(Debug, Clone, Default)]
pub struct Storage {
    log: Vec<(SymValue, SymValue)>,
}

impl Storage {
    pub fn write(&mut self, slot: SymValue, value: SymValue) {
        self.log.push((slot, value));
    }

    pub fn read(&self, slot: &SymValue) -> Option<SymValue> {
        self.log.iter().rev().find(|(s, _)| s == slot).map(|(_, v)| v.clone())
    }

    pub fn writes(&self) -> &[(SymValue, SymValue)] {
        &self.log
    }
}
