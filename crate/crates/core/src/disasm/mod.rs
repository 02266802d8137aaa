//! Bytecode decoding, basic blocks and dispatcher lookup.

mod cfg;
pub mod opcodes;

pub use cfg::{build_cfg, find_function_entry, BasicBlock, Cfg, Edge, EdgeKind, Terminator};

use crate::ingestion::{SourceMapEntry, Version};
use crate::U256;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Instruction {
    pub pc: usize,
    pub opcode: u8,
    pub immediate: Vec<u8>,
    /// Index into the source map (equal to the instruction index).
    pub src: usize,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        opcodes::mnemonic(self.opcode)
    }

    pub fn is_push(&self) -> bool {
        (opcodes::PUSH0..=opcodes::PUSH32).contains(&self.opcode)
    }

    /// Constant pushed by PUSH0..PUSH32.
    pub fn push_value(&self) -> Option<U256> {
        if !self.is_push() {
            return None;
        }
        Some(U256::try_from_be_slice(&self.immediate).unwrap_or(U256::ZERO))
    }

    pub fn next_pc(&self) -> usize {
        self.pc + 1 + self.immediate.len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DisasmError {
    #[error("PUSH at pc {pc} needs {needed} immediate bytes but only {available} remain")]
    TruncatedPush { pc: usize, needed: usize, available: usize },
}

/// Decodes `code` into instructions. 0x5f is always PUSH0; `version` only
/// matters for diagnostics.
pub fn disassemble(code: &[u8], version: Version) -> Result<Vec<Instruction>, DisasmError> {
    let mut out = Vec::with_capacity(code.len() / 2);
    let mut pc = 0;
    while pc < code.len() {
        let opcode = code[pc];
        let width = opcodes::push_width(opcode);
        let available = code.len() - pc - 1;
        if width > available {
            return Err(DisasmError::TruncatedPush { pc, needed: width, available });
        }
        if opcode == opcodes::PUSH0 && !version.has_push0() {
            log::debug!("PUSH0 at pc {pc} in code reported as solc {version}");
        }
        out.push(Instruction {
            pc,
            opcode,
            immediate: code[pc + 1..pc + 1 + width].to_vec(),
            src: out.len(),
        });
        pc += 1 + width;
    }
    Ok(out)
}

/// Source text covered by a source-map entry, whitespace collapsed.
pub fn snippet<'a>(entry: &SourceMapEntry, sources: &'a [(i64, String)]) -> Option<&'a str> {
    let (start, len) = entry.range()?;
    let (_, text) = sources.iter().find(|(id, _)| *id == entry.file)?;
    text.get(start..start + len)
}

/// Listing of `pc: OPCODE 0ximm ; snippet` lines.
pub fn dump(instrs: &[Instruction], map: &[SourceMapEntry], sources: &[(i64, String)]) -> String {
    let mut out = String::new();
    for ins in instrs {
        let _ = write!(out, "{:>5}: {}", ins.pc, ins.mnemonic());
        if !ins.immediate.is_empty() {
            let _ = write!(out, " 0x{}", hex::encode(&ins.immediate));
        }
        if let Some(text) = map.get(ins.src).and_then(|e| snippet(e, sources)) {
            let line: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
            let short: String = line.chars().take(60).collect();
            let _ = write!(out, "  ; {short}");
        }
        out.push('\n');
    }
    out
}
