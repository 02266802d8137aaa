use super::opcodes as op;
use super::Instruction;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminator {
    Jump,
    ConditionalJump,
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
    Fallthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Fall,
    Taken,
    NotTaken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BasicBlock {
    pub start_pc: usize,
    /// Index of the first instruction in `Cfg::instructions`.
    pub first: usize,
    pub len: usize,
    pub terminator: Terminator,
}

impl BasicBlock {
    pub fn instructions<'a>(&self, cfg: &'a Cfg) -> &'a [Instruction] {
        &cfg.instructions[self.first..self.first + self.len]
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Cfg {
    pub instructions: Vec<Instruction>,
    pub blocks: Vec<BasicBlock>,
    pub static_edges: Vec<Edge>,
    /// Blocks whose jump target is not a constant adjacent to the jump.
    pub unresolved_jumps: Vec<usize>,
    pub entry_points: BTreeMap<u32, usize>,
    #[serde(skip)]
    by_pc: HashMap<usize, usize>,
    #[serde(skip)]
    block_by_pc: HashMap<usize, usize>,
}

impl Cfg {
    /// Instruction index at `pc`, if an instruction starts there.
    pub fn index_at(&self, pc: usize) -> Option<usize> {
        self.by_pc.get(&pc).copied()
    }

    pub fn instruction_at(&self, pc: usize) -> Option<&Instruction> {
        self.index_at(pc).map(|i| &self.instructions[i])
    }

    pub fn block_at(&self, pc: usize) -> Option<&BasicBlock> {
        self.block_by_pc.get(&pc).map(|&b| &self.blocks[b])
    }

    pub fn is_jumpdest(&self, pc: usize) -> bool {
        self.instruction_at(pc).is_some_and(|i| i.opcode == op::JUMPDEST)
    }
}

fn terminator_of(opcode: u8) -> Terminator {
    match opcode {
        op::JUMP => Terminator::Jump,
        op::JUMPI => Terminator::ConditionalJump,
        op::STOP => Terminator::Stop,
        op::RETURN => Terminator::Return,
        op::REVERT => Terminator::Revert,
        op::SELFDESTRUCT => Terminator::SelfDestruct,
        _ if op::is_terminator(opcode) => Terminator::Invalid,
        _ => Terminator::Fallthrough,
    }
}

pub fn build_cfg(instrs: &[Instruction]) -> Cfg {
    let mut cfg = Cfg {
        instructions: instrs.to_vec(),
        ..Cfg::default()
    };
    cfg.by_pc = instrs.iter().enumerate().map(|(i, ins)| (ins.pc, i)).collect();

    let mut start = 0;
    while start < instrs.len() {
        let mut end = start;
        loop {
            let ins = &instrs[end];
            let last = end + 1 == instrs.len();
            let next_is_dest = !last && instrs[end + 1].opcode == op::JUMPDEST;
            if op::is_terminator(ins.opcode) || last || next_is_dest {
                break;
            }
            end += 1;
        }
        let terminator = terminator_of(instrs[end].opcode);
        cfg.block_by_pc.insert(instrs[start].pc, cfg.blocks.len());
        cfg.blocks.push(BasicBlock {
            start_pc: instrs[start].pc,
            first: start,
            len: end - start + 1,
            terminator,
        });
        start = end + 1;
    }

    for (b, block) in cfg.blocks.iter().enumerate() {
        let ins = block.instructions(&cfg);
        let last = &ins[ins.len() - 1];
        let next = cfg.block_by_pc.get(&last.next_pc()).copied();
        let constant_target = if ins.len() >= 2 {
            ins[ins.len() - 2].push_value().and_then(|v| usize::try_from(v).ok())
        } else {
            None
        };
        let target = constant_target.filter(|t| cfg.is_jumpdest(*t)).and_then(|t| cfg.block_by_pc.get(&t).copied());
        match block.terminator {
            Terminator::Fallthrough => {
                if let Some(n) = next {
                    cfg.static_edges.push(Edge { from: b, to: n, kind: EdgeKind::Fall });
                }
            }
            Terminator::Jump | Terminator::ConditionalJump => {
                match target {
                    Some(t) => cfg.static_edges.push(Edge { from: b, to: t, kind: EdgeKind::Taken }),
                    None => cfg.unresolved_jumps.push(b),
                }
                if block.terminator == Terminator::ConditionalJump {
                    if let Some(n) = next {
                        cfg.static_edges.push(Edge { from: b, to: n, kind: EdgeKind::NotTaken });
                    }
                }
            }
            _ => {}
        }
    }

    cfg.entry_points = dispatcher_entries(&cfg);
    cfg
}

/// Scans for `PUSHn sel; [DUPk;] EQ; PUSHm target; JUMPI`.
fn dispatcher_entries(cfg: &Cfg) -> BTreeMap<u32, usize> {
    let ins = &cfg.instructions;
    let mut out = BTreeMap::new();
    for i in 0..ins.len() {
        let width = ins[i].immediate.len();
        if !(1..=4).contains(&width) || !ins[i].is_push() {
            continue;
        }
        let mut j = i + 1;
        if j < ins.len() && (op::DUP1..=op::DUP16).contains(&ins[j].opcode) {
            j += 1;
        }
        if j + 2 >= ins.len() || ins[j].opcode != op::EQ || ins[j + 2].opcode != op::JUMPI {
            continue;
        }
        let Some(target) = ins[j + 1].push_value().and_then(|v| usize::try_from(v).ok()) else {
            continue;
        };
        if !cfg.is_jumpdest(target) {
            continue;
        }
        let selector = ins[i].immediate.iter().fold(0u32, |acc, b| (acc << 8) | *b as u32);
        out.entry(selector).or_insert(target);
    }
    out
}

/// JUMPDEST reached when the dispatcher matches `selector`.
pub fn find_function_entry(cfg: &Cfg, selector: [u8; 4]) -> Option<usize> {
    cfg.entry_points.get(&u32::from_be_bytes(selector)).copied()
}
