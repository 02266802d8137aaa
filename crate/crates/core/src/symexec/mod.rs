//! Path-by-path symbolic execution of one externally callable function.
//!
//! Execution starts at pc 0 with the function's selector in calldata, so the
//! dispatcher and ABI decoder run exactly as deployed. Along each path the
//! engine records branch constraints, storage writes, `ownerOf` return values
//! and `Transfer` emissions, and hands a [`PathRecord`] to the detectors at
//! every emission and at every path end.

pub mod memory;
pub mod value;

use crate::ast::{FunctionInfo, ReturnBinding, Span};
use crate::constraints::{Constraint, ConstraintSet};
use crate::disasm::opcodes::{self, *};
use crate::disasm::{Cfg, Instruction};
use crate::hash::transfer_topic;
use crate::ingestion::{CompilationUnit, JumpKind, SourceMapEntry};
use crate::U256;
use memory::{CopySource, MemRead, MemWrite, Memory, Storage};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;
pub use value::{Env, OpKind, Provenance, SymValue, Var};

const STACK_LIMIT: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymexecError {
    #[error("no dispatcher entry for {0}")]
    EntryNotFound(String),
}

#[derive(Debug, Clone, Copy)]
pub struct ExplorationBudget {
    pub max_steps: u64,
    pub max_paths: usize,
    pub loop_bound: u32,
    pub deadline: Option<Instant>,
}

impl Default for ExplorationBudget {
    fn default() -> Self {
        ExplorationBudget { max_steps: 100_000, max_paths: 5_000, loop_bound: 3, deadline: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndKind {
    TransferEmission,
    NormalExit,
    Revert,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventEmission {
    pub id: u64,
    pub topic0: Option<SymValue>,
    /// Indexed arguments after the signature topic.
    pub topics: Vec<SymValue>,
    pub data_offset: SymValue,
    pub data_size: SymValue,
    pub at_pc: usize,
}

impl EventEmission {
    pub fn is_transfer(&self) -> bool {
        self.topics.len() == 3 && self.topic0.as_ref().and_then(SymValue::as_const) == Some(U256::from_be_bytes(transfer_topic()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OwnerPhase {
    Outside,
    InSpan,
    /// Left the span through a call into a helper; waiting to come back.
    InHelper,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    pub pc: usize,
    idx: usize,
    pub stack: Vec<SymValue>,
    pub memory: Memory,
    pub storage: Storage,
    pub constraints: ConstraintSet,
    pub sstore_mark: bool,
    pub owner_trace: Vec<SymValue>,
    pub emissions: Vec<EventEmission>,
    pub external_call: bool,
    owner_phase: OwnerPhase,
    last_idx: Option<usize>,
    calldata_reads: Vec<(SymValue, SymValue)>,
    visits: HashMap<(usize, Vec<usize>), u32>,
    max_visits: u32,
    next_fresh: u64,
}

impl Default for MachineState {
    fn default() -> Self {
        Self::new()
    }
}

impl MachineState {
    pub fn new() -> Self {
        MachineState {
            pc: 0,
            idx: 0,
            stack: Vec::new(),
            memory: Memory::default(),
            storage: Storage::default(),
            constraints: ConstraintSet::new(),
            sstore_mark: false,
            owner_trace: Vec::new(),
            emissions: Vec::new(),
            external_call: false,
            owner_phase: OwnerPhase::Outside,
            last_idx: None,
            calldata_reads: Vec::new(),
            visits: HashMap::new(),
            max_visits: 0,
            next_fresh: 0,
        }
    }

    fn pop(&mut self) -> Option<SymValue> {
        self.stack.pop()
    }

    fn pop_n(&mut self, n: usize) -> Option<Vec<SymValue>> {
        if self.stack.len() < n {
            return None;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.stack.pop()?);
        }
        Some(out)
    }

    fn fresh(&mut self, pc: usize, call: bool, label: impl Into<Arc<str>>) -> SymValue {
        let id = self.next_fresh;
        self.next_fresh += 1;
        SymValue::var(Provenance::FreshExternal { id, pc, call }, label)
    }

    /// Marks the path as having written storage. Never resets.
    pub fn on_sstore(&mut self, slot: SymValue, value: SymValue) {
        self.storage.write(slot, value);
        self.sstore_mark = true;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathRecord {
    pub function: String,
    pub path_id: usize,
    pub end_kind: EndKind,
    pub end_pc: usize,
    pub constraints: ConstraintSet,
    pub owner_trace: Vec<SymValue>,
    pub from_param: Option<SymValue>,
    pub to_param: Option<SymValue>,
    pub token_param: Option<SymValue>,
    /// Whether an SSTORE executed before the point this record was taken
    /// (the emission for transfer records, the path end otherwise).
    pub sstore_mark: bool,
    pub emission: Option<EventEmission>,
    /// Transfer emissions that happened on this path up to its end.
    pub emission_ids: Vec<u64>,
    pub external_call: bool,
    pub max_visits: u32,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Exploration {
    pub records: Vec<PathRecord>,
    pub timed_out: bool,
    pub steps: u64,
    pub paths: usize,
}

pub enum StepResult {
    Continue(Vec<MachineState>),
    Halt(MachineState, EndKind, Option<String>),
}

/// Static context shared by every path of every function of one contract.
pub struct Program<'a> {
    instructions: &'a [Instruction],
    index: HashMap<usize, usize>,
    jumpdests: HashSet<usize>,
    code: &'a [u8],
    source_map: &'a [SourceMapEntry],
    sources: &'a [(i64, String)],
    state_vars: HashSet<String>,
    in_return_span: Vec<bool>,
}

impl<'a> Program<'a> {
    /// Bare instruction sequence with no source information.
    pub fn from_instructions(instructions: &'a [Instruction], code: &'a [u8]) -> Self {
        let index = instructions.iter().enumerate().map(|(i, ins)| (ins.pc, i)).collect();
        let jumpdests = instructions.iter().filter(|i| i.opcode == JUMPDEST).map(|i| i.pc).collect();
        Program {
            instructions,
            index,
            jumpdests,
            code,
            source_map: &[],
            sources: &[],
            state_vars: HashSet::new(),
            in_return_span: vec![false; instructions.len()],
        }
    }

    pub fn new(unit: &'a CompilationUnit, cfg: &'a Cfg, binding: Option<&ReturnBinding>) -> Self {
        let mut p = Program::from_instructions(&cfg.instructions, &unit.runtime_bytecode);
        p.source_map = &unit.source_map;
        p.sources = &unit.sources;
        p.state_vars = crate::ast::state_variable_types(unit).into_keys().collect();
        if let Some(b) = binding {
            p.in_return_span = cfg
                .instructions
                .iter()
                .map(|ins| {
                    let Some(e) = unit.source_map.get(ins.src) else { return false };
                    let Some((start, length)) = e.range() else { return false };
                    let span = Span { start, length, file: e.file };
                    b.all_return_spans.iter().any(|r| r.contains(&span))
                })
                .collect();
        }
        p
    }

    fn span_of(&self, idx: usize) -> Option<Span> {
        let e = self.source_map.get(self.instructions[idx].src)?;
        let (start, length) = e.range()?;
        Some(Span { start, length, file: e.file })
    }

    fn jump_kind(&self, idx: usize) -> JumpKind {
        self.source_map.get(self.instructions[idx].src).map_or(JumpKind::Regular, |e| e.jump)
    }

    fn storage_label(&self, idx: usize, slot: &SymValue, mapping: bool) -> String {
        let text = self
            .source_map
            .get(self.instructions[idx].src)
            .and_then(|e| crate::disasm::snippet(e, self.sources))
            .unwrap_or("");
        let name = text
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
            .find(|t| self.state_vars.contains(*t));
        match (name, mapping) {
            (Some(n), true) => format!("{n}[...]"),
            (Some(n), false) => n.to_string(),
            (None, true) => "storage[...]".to_string(),
            (None, false) => match slot.as_const() {
                Some(c) => format!("slot_{c:#x}"),
                None => format!("storage[{slot}]"),
            },
        }
    }
}

/// Per-function calldata layout.
#[derive(Debug, Clone, Default)]
pub struct CallFrame {
    pub selector: [u8; 4],
    /// (name, canonical ABI type) of each parameter.
    pub params: Vec<(String, String)>,
}

impl CallFrame {
    pub fn for_function(f: &FunctionInfo) -> Self {
        CallFrame { selector: f.selector.unwrap_or_default(), params: f.params.clone() }
    }

    pub fn param_value(&self, i: usize) -> SymValue {
        let (name, ty) = &self.params[i];
        let label = if name.is_empty() { format!("arg{i}") } else { name.clone() };
        let v = SymValue::var(Provenance::Parameter(i), label);
        if ty == "address" {
            v.mask_address()
        } else {
            v
        }
    }

    fn named(&self, wanted: &str) -> Option<usize> {
        self.params.iter().position(|(n, _)| n.trim_matches('_').eq_ignore_ascii_case(wanted))
    }

    fn two_addresses_first(&self) -> bool {
        self.params.len() >= 2 && self.params[0].1 == "address" && self.params[1].1 == "address"
    }

    pub fn from_index(&self) -> Option<usize> {
        self.named("from").or_else(|| self.two_addresses_first().then_some(0))
    }

    pub fn to_index(&self) -> Option<usize> {
        self.named("to").or_else(|| self.two_addresses_first().then_some(1))
    }

    pub fn token_index(&self) -> Option<usize> {
        self.named("tokenId")
            .or_else(|| (self.two_addresses_first() && self.params.get(2).is_some_and(|p| p.1 == "uint256")).then_some(2))
    }
}

fn binary_kind(op: u8) -> Option<OpKind> {
    use OpKind::*;
    Some(match op {
        ADD => Add,
        MUL => Mul,
        SUB => Sub,
        DIV => Div,
        SDIV => SDiv,
        MOD => Mod,
        SMOD => SMod,
        EXP => Exp,
        SIGNEXTEND => SignExtend,
        LT => Lt,
        GT => Gt,
        SLT => Slt,
        SGT => Sgt,
        EQ => Eq,
        AND => And,
        OR => Or,
        XOR => Xor,
        BYTE => Byte,
        SHL => Shl,
        SHR => Shr,
        SAR => Sar,
        _ => return None,
    })
}

fn is_external_call(op: u8) -> bool {
    matches!(op, CALL | CALLCODE | DELEGATECALL | STATICCALL | CREATE | CREATE2)
}

fn env_value(env: Env) -> SymValue {
    let v = SymValue::var(Provenance::Environment(env), env.name());
    match env {
        Env::Caller | Env::Origin | Env::Address => v.mask_address(),
        _ => v,
    }
}

impl Program<'_> {
    /// Value of the calldata word at `offset`.
    pub fn on_calldataload(&self, st: &mut MachineState, frame: &CallFrame, offset: &SymValue, pc: usize) -> SymValue {
        if let Some(off) = offset.as_const() {
            if off.is_zero() {
                let mut word = [0u8; 32];
                word[..4].copy_from_slice(&frame.selector);
                return SymValue::constant(U256::from_be_bytes(word));
            }
            if off >= U256::from(4u8) && (off - U256::from(4u8)) % U256::from(32u8) == U256::ZERO {
                let i = (off - U256::from(4u8)) / U256::from(32u8);
                if i < U256::from(frame.params.len()) {
                    return frame.param_value(i.to::<usize>());
                }
            }
            return SymValue::var(Provenance::Calldata(offset.clone()), format!("calldata[{off:#x}]"));
        }
        if let Some((_, v)) = st.calldata_reads.iter().find(|(o, _)| o == offset) {
            return v.clone();
        }
        let v = st.fresh(pc, false, format!("calldata[{offset}]"));
        st.calldata_reads.push((offset.clone(), v.clone()));
        v
    }

    fn mload(&self, st: &mut MachineState, frame: &CallFrame, offset: &SymValue, pc: usize) -> SymValue {
        match st.memory.read(offset) {
            MemRead::Value(v) => v,
            MemRead::Unknown => st.fresh(pc, false, format!("mem[{offset}]")),
            MemRead::Copied { source, delta } => match source {
                CopySource::Calldata(src) => {
                    let at = SymValue::op2(OpKind::Add, src, SymValue::constant(delta));
                    self.on_calldataload(st, frame, &at, pc)
                }
                CopySource::Code(src) => match src.as_const() {
                    Some(s) => {
                        let start = s.saturating_add(delta);
                        let mut word = [0u8; 32];
                        if start < U256::from(self.code.len()) {
                            let start = start.to::<usize>();
                            let end = (start + 32).min(self.code.len());
                            word[..end - start].copy_from_slice(&self.code[start..end]);
                        }
                        SymValue::constant(U256::from_be_bytes(word))
                    }
                    None => st.fresh(pc, false, "code"),
                },
                CopySource::Opaque { call } => st.fresh(pc, call, format!("mem[{offset}]")),
            },
        }
    }

    fn sload(&self, st: &MachineState, slot: SymValue, idx: usize) -> SymValue {
        if let Some(v) = st.storage.read(&slot) {
            return v;
        }
        let mapping = slot.contains_sha3();
        let label = self.storage_label(idx, &slot, mapping);
        let prov = if mapping { Provenance::StorageMapping(slot) } else { Provenance::StorageDirect(slot) };
        SymValue::var(prov, label)
    }

    /// Pops LOGn operands; offset is on top, then size, then the topics.
    pub fn on_log(&self, st: &mut MachineState, topic_count: usize, pc: usize, id: u64) -> Option<EventEmission> {
        let args = st.pop_n(2 + topic_count)?;
        let mut topics = args[2..].to_vec();
        let topic0 = if topics.is_empty() { None } else { Some(topics.remove(0)) };
        let e = EventEmission { id, topic0, topics, data_offset: args[0].clone(), data_size: args[1].clone(), at_pc: pc };
        st.emissions.push(e.clone());
        Some(e)
    }

    /// Runs the instruction at `st.pc`.
    pub fn step(&self, mut st: MachineState, frame: &CallFrame, loop_bound: u32, next_emission: u64) -> StepResult {
        let Some(ins) = self.instructions.get(st.idx) else {
            return StepResult::Halt(st, EndKind::NormalExit, None);
        };
        let idx = st.idx;
        let pc = ins.pc;
        let op = ins.opcode;
        st.last_idx = Some(idx);
        let info = match opcodes::info(op) {
            Some(i) => i,
            None => return StepResult::Halt(st, EndKind::Revert, Some(format!("undefined opcode 0x{op:02x} at {pc}"))),
        };
        if st.stack.len() < info.inputs as usize {
            return StepResult::Halt(st, EndKind::Revert, Some(format!("stack underflow at {pc}")));
        }
        let underflow = |st: MachineState| StepResult::Halt(st, EndKind::Revert, Some(format!("stack underflow at {pc}")));
        let mut next_idx = idx + 1;

        if let Some(kind) = binary_kind(op) {
            let a = st.pop_n(2).unwrap();
            st.stack.push(SymValue::op(kind, a));
        } else if ins.is_push() {
            st.stack.push(SymValue::constant(ins.push_value().unwrap()));
        } else if (DUP1..=DUP16).contains(&op) {
            let n = (op - DUP1 + 1) as usize;
            if st.stack.len() < n {
                return underflow(st);
            }
            let v = st.stack[st.stack.len() - n].clone();
            st.stack.push(v);
        } else if (SWAP1..=SWAP16).contains(&op) {
            let n = (op - SWAP1 + 1) as usize;
            if st.stack.len() < n + 1 {
                return underflow(st);
            }
            let top = st.stack.len() - 1;
            st.stack.swap(top, top - n);
        } else if (LOG0..=LOG4).contains(&op) {
            let n = (op - LOG0) as usize;
            self.on_log(&mut st, n, pc, next_emission);
        } else {
            match op {
                STOP | SELFDESTRUCT => return StepResult::Halt(st, EndKind::NormalExit, None),
                RETURN => {
                    st.pop_n(2);
                    return StepResult::Halt(st, EndKind::NormalExit, None);
                }
                REVERT => {
                    st.pop_n(2);
                    return StepResult::Halt(st, EndKind::Revert, None);
                }
                INVALID => return StepResult::Halt(st, EndKind::Revert, None),
                ISZERO | NOT => {
                    let a = st.pop().unwrap();
                    let k = if op == ISZERO { OpKind::IsZero } else { OpKind::Not };
                    st.stack.push(SymValue::op1(k, a));
                }
                ADDMOD | MULMOD => {
                    let a = st.pop_n(3).unwrap();
                    let k = if op == ADDMOD { OpKind::AddMod } else { OpKind::MulMod };
                    st.stack.push(SymValue::op(k, a));
                }
                SHA3 => {
                    let a = st.pop_n(2).unwrap();
                    let v = match a[1].as_const() {
                        Some(size) if size <= U256::from(32 * 16u32) => {
                            let size = size.to::<usize>();
                            let args: Vec<SymValue> = (0..size.div_ceil(32))
                                .map(|k| {
                                    let at = SymValue::op2(OpKind::Add, a[0].clone(), SymValue::from_u64(32 * k as u64));
                                    self.mload(&mut st, frame, &at, pc)
                                })
                                .collect();
                            let concrete: Option<Vec<U256>> = args.iter().map(SymValue::eval_concrete).collect();
                            match concrete {
                                Some(words) if size % 32 != 0 => {
                                    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes::<32>()).take(size).collect();
                                    SymValue::constant(U256::from_be_bytes(crate::hash::keccak256(&bytes)))
                                }
                                _ if size % 32 == 0 => SymValue::op(OpKind::Sha3, args),
                                _ => st.fresh(pc, false, "keccak"),
                            }
                        }
                        _ => st.fresh(pc, false, "keccak"),
                    };
                    st.stack.push(v);
                }
                ADDRESS => st.stack.push(env_value(Env::Address)),
                ORIGIN => st.stack.push(env_value(Env::Origin)),
                CALLER => st.stack.push(env_value(Env::Caller)),
                CALLVALUE => st.stack.push(env_value(Env::CallValue)),
                TIMESTAMP => st.stack.push(env_value(Env::Timestamp)),
                NUMBER => st.stack.push(env_value(Env::Number)),
                CALLDATASIZE => st.stack.push(env_value(Env::CallDataSize)),
                0x38 => st.stack.push(SymValue::from_u64(self.code.len() as u64)),
                PC => st.stack.push(SymValue::from_u64(pc as u64)),
                CALLDATALOAD => {
                    let off = st.pop().unwrap();
                    let v = self.on_calldataload(&mut st, frame, &off, pc);
                    st.stack.push(v);
                }
                CALLDATACOPY | CODECOPY | RETURNDATACOPY => {
                    let a = st.pop_n(3).unwrap();
                    let source = match op {
                        CALLDATACOPY => CopySource::Calldata(a[1].clone()),
                        CODECOPY => CopySource::Code(a[1].clone()),
                        _ => CopySource::Opaque { call: true },
                    };
                    st.memory.write(MemWrite::Copy { dest: a[0].clone(), size: a[2].clone(), source });
                }
                0x3c => {
                    let a = st.pop_n(4).unwrap();
                    st.memory.write(MemWrite::Copy { dest: a[1].clone(), size: a[3].clone(), source: CopySource::Opaque { call: true } });
                }
                MCOPY => {
                    let a = st.pop_n(3).unwrap();
                    st.memory.write(MemWrite::Copy { dest: a[0].clone(), size: a[2].clone(), source: CopySource::Opaque { call: false } });
                }
                POP => {
                    st.pop();
                }
                MLOAD => {
                    let off = st.pop().unwrap();
                    let v = self.mload(&mut st, frame, &off, pc);
                    st.stack.push(v);
                }
                MSTORE => {
                    let a = st.pop_n(2).unwrap();
                    st.memory.write(MemWrite::Word { offset: a[0].clone(), value: a[1].clone() });
                }
                MSTORE8 => {
                    let a = st.pop_n(2).unwrap();
                    st.memory.write(MemWrite::Byte { offset: a[0].clone(), value: a[1].clone() });
                }
                SLOAD => {
                    let slot = st.pop().unwrap();
                    let v = self.sload(&st, slot, idx);
                    st.stack.push(v);
                }
                SSTORE => {
                    let a = st.pop_n(2).unwrap();
                    st.on_sstore(a[0].clone(), a[1].clone());
                }
                JUMPDEST => {
                    let context: Vec<usize> = st
                        .stack
                        .iter()
                        .filter_map(|v| v.as_const())
                        .filter(|c| *c < U256::from(usize::MAX) && self.jumpdests.contains(&c.to::<usize>()))
                        .map(|c| c.to::<usize>())
                        .collect();
                    let n = st.visits.entry((pc, context)).or_insert(0);
                    if *n >= loop_bound {
                        return StepResult::Halt(st, EndKind::BudgetExhausted, Some(format!("loop bound reached at {pc}")));
                    }
                    *n += 1;
                    let n = *n;
                    st.max_visits = st.max_visits.max(n);
                }
                JUMP => {
                    let target = st.pop().unwrap();
                    match self.jump_target(&target) {
                        Some(t) => next_idx = t,
                        None => {
                            return StepResult::Halt(st, EndKind::Revert, Some(format!("unresolved jump to {target} at {pc}")))
                        }
                    }
                }
                JUMPI => {
                    let a = st.pop_n(2).unwrap();
                    let (target, cond) = (&a[0], &a[1]);
                    if let Some(c) = cond.as_const() {
                        if c.is_zero() {
                            next_idx = idx + 1;
                        } else {
                            match self.jump_target(target) {
                                Some(t) => next_idx = t,
                                None => {
                                    return StepResult::Halt(st, EndKind::Revert, Some(format!("unresolved jump to {target} at {pc}")))
                                }
                            }
                        }
                    } else {
                        let span = self.span_of_opt(idx);
                        let mut out = Vec::with_capacity(2);
                        let taken = Constraint::branch(cond.clone(), true);
                        let not_taken = Constraint::branch(cond.clone(), false);
                        if let Some(t) = self.jump_target(target) {
                            if !st.constraints.contradicts(&taken) && taken.constant_truth() != Some(false) {
                                let mut child = st.clone();
                                child.constraints.push(taken, pc, span);
                                child.idx = t;
                                child.pc = self.instructions[t].pc;
                                out.push(child);
                            }
                        }
                        if !st.constraints.contradicts(&not_taken) && not_taken.constant_truth() != Some(false) {
                            st.constraints.push(not_taken, pc, span);
                            st.idx = idx + 1;
                            st.pc = self.instructions.get(idx + 1).map_or(pc + 1, |i| i.pc);
                            out.push(st);
                        }
                        return StepResult::Continue(out);
                    }
                }
                _ => {
                    // unmodeled: external calls, balances, gas, block data, ...
                    st.pop_n(info.inputs as usize);
                    let call = is_external_call(op) || op == RETURNDATASIZE;
                    st.external_call |= is_external_call(op);
                    for _ in 0..info.outputs {
                        let v = st.fresh(pc, call, info.name.to_ascii_lowercase());
                        st.stack.push(v);
                    }
                }
            }
        }
        if st.stack.len() > STACK_LIMIT {
            return StepResult::Halt(st, EndKind::Revert, Some(format!("stack overflow at {pc}")));
        }
        match self.instructions.get(next_idx) {
            Some(n) => {
                st.idx = next_idx;
                st.pc = n.pc;
                StepResult::Continue(vec![st])
            }
            None => StepResult::Halt(st, EndKind::NormalExit, None),
        }
    }

    fn span_of_opt(&self, idx: usize) -> Option<Span> {
        if self.source_map.is_empty() {
            None
        } else {
            self.span_of(idx)
        }
    }

    fn jump_target(&self, target: &SymValue) -> Option<usize> {
        let t = target.as_const()?;
        if t >= U256::from(usize::MAX) {
            return None;
        }
        let t = t.to::<usize>();
        self.jumpdests.contains(&t).then(|| self.index[&t])
    }

    /// Owner checkpoint, run before executing `st.idx`: when control leaves
    /// an `ownerOf` return span, the stack top is the returned owner.
    pub fn on_owner_return(&self, st: &mut MachineState) {
        let inside = self.in_return_span.get(st.idx).copied().unwrap_or(false);
        match st.owner_phase {
            OwnerPhase::Outside if inside => st.owner_phase = OwnerPhase::InSpan,
            OwnerPhase::InHelper if inside => st.owner_phase = OwnerPhase::InSpan,
            OwnerPhase::InSpan if !inside => {
                let last = st.last_idx.expect("span entered before");
                if self.instructions[last].opcode == JUMP && self.jump_kind(last) == JumpKind::IntoFunction {
                    st.owner_phase = OwnerPhase::InHelper;
                    return;
                }
                st.owner_phase = OwnerPhase::Outside;
                if let Some(top) = st.stack.last() {
                    if st.owner_trace.last() != Some(top) {
                        st.owner_trace.push(top.clone());
                    }
                }
            }
            _ => {}
        }
    }
}

/// Drives [`Program::step`] over every path of one function.
pub struct Explorer<'a> {
    pub program: Program<'a>,
    cfg: &'a Cfg,
}

impl<'a> Explorer<'a> {
    pub fn new(unit: &'a CompilationUnit, cfg: &'a Cfg, binding: Option<&ReturnBinding>) -> Self {
        Explorer { program: Program::new(unit, cfg, binding), cfg }
    }

    pub fn explore(&self, f: &FunctionInfo, budget: &ExplorationBudget) -> Result<Exploration, SymexecError> {
        let selector = f.selector.ok_or_else(|| SymexecError::EntryNotFound(f.signature()))?;
        if crate::disasm::find_function_entry(self.cfg, selector).is_none() {
            return Err(SymexecError::EntryNotFound(f.signature()));
        }
        let frame = CallFrame::for_function(f);
        let params = (
            frame.from_index().map(|i| frame.param_value(i)),
            frame.to_index().map(|i| frame.param_value(i)),
            frame.token_index().map(|i| frame.param_value(i)),
        );
        let mut out = Exploration::default();
        let mut next_emission = 0u64;
        let mut ended = 0usize;
        let record = |st: &MachineState, kind: EndKind, note: Option<String>, emission: Option<EventEmission>, out: &mut Exploration| {
            let emission_ids = st.emissions.iter().filter(|e| e.is_transfer()).map(|e| e.id).collect();
            out.records.push(PathRecord {
                function: f.name.clone(),
                path_id: out.records.len(),
                end_kind: kind,
                end_pc: st.pc,
                constraints: st.constraints.snapshot(),
                owner_trace: st.owner_trace.clone(),
                from_param: params.0.clone(),
                to_param: params.1.clone(),
                token_param: params.2.clone(),
                sstore_mark: st.sstore_mark,
                emission,
                emission_ids,
                external_call: st.external_call,
                max_visits: st.max_visits,
                note,
            });
        };

        let mut work = vec![MachineState::new()];
        'paths: while let Some(mut st) = work.pop() {
            loop {
                if out.steps >= budget.max_steps || ended >= budget.max_paths {
                    record(&st, EndKind::BudgetExhausted, Some("step or path budget".into()), None, &mut out);
                    continue 'paths;
                }
                if out.steps % 512 == 0 && budget.deadline.is_some_and(|d| Instant::now() >= d) {
                    out.timed_out = true;
                    record(&st, EndKind::BudgetExhausted, Some("timeout".into()), None, &mut out);
                    for st in work.drain(..).rev() {
                        record(&st, EndKind::BudgetExhausted, Some("timeout".into()), None, &mut out);
                    }
                    break 'paths;
                }
                out.steps += 1;
                self.program.on_owner_return(&mut st);
                let before = st.emissions.len();
                match self.program.step(st, &frame, budget.loop_bound, next_emission) {
                    StepResult::Halt(st, kind, note) => {
                        ended += 1;
                        record(&st, kind, note, None, &mut out);
                        continue 'paths;
                    }
                    StepResult::Continue(mut next) => {
                        if next.len() == 1 && next[0].emissions.len() > before {
                            next_emission += 1;
                            let e = next[0].emissions.last().unwrap().clone();
                            if e.is_transfer() {
                                record(&next[0], EndKind::TransferEmission, None, Some(e), &mut out);
                            }
                        }
                        match next.len() {
                            0 => continue 'paths,
                            1 => st = next.pop().unwrap(),
                            _ => {
                                st = next.pop().unwrap();
                                work.extend(next);
                            }
                        }
                    }
                }
            }
        }
        out.paths = ended;
        Ok(out)
    }
}

/// Convenience wrapper building the per-contract context for one function.
pub fn explore_function(
    unit: &CompilationUnit,
    cfg: &Cfg,
    f: &FunctionInfo,
    binding: Option<&ReturnBinding>,
    budget: &ExplorationBudget,
) -> Result<Exploration, SymexecError> {
    Explorer::new(unit, cfg, binding).explore(f, budget)
}

/// Executes straight-line code from an empty state and returns the final
/// stack (bottom first). `None` when the code halts abnormally or forks.
pub fn run_straight_line(instructions: &[Instruction]) -> Option<Vec<SymValue>> {
    let program = Program::from_instructions(instructions, &[]);
    let frame = CallFrame::default();
    let mut st = MachineState::new();
    loop {
        match program.step(st, &frame, u32::MAX, 0) {
            StepResult::Continue(mut next) if next.len() == 1 => st = next.pop().unwrap(),
            StepResult::Halt(st, EndKind::NormalExit, None) => return Some(st.stack),
            _ => return None,
        }
    }
}

/// Number of records of each end kind.
pub fn summarize(records: &[PathRecord]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        let k = match r.end_kind {
            EndKind::TransferEmission => "transfer-emission",
            EndKind::NormalExit => "normal-exit",
            EndKind::Revert => "revert",
            EndKind::BudgetExhausted => "budget-exhausted",
        };
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
