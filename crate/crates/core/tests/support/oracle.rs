//! Reference interpreter over arbitrary-precision integers, independent of
//! the engine's 256-bit arithmetic.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use sha3::{Digest, Keccak256};
use sleepscan::disasm::Instruction;
use sleepscan::U256;

#[derive(Debug, Clone)]
pub enum Op {
    Push(Vec<u8>),
    /// Any opcode in 0x01..=0x1d.
    Arith(u8),
    Dup(u8),
    Swap(u8),
    Pop,
    MStore(u8),
    MStore8(u8),
    MLoad(u8),
    Sha3(u8, u8),
}

const ARITH: [(u8, usize); 25] = [
    (0x01, 2),
    (0x02, 2),
    (0x03, 2),
    (0x04, 2),
    (0x05, 2),
    (0x06, 2),
    (0x07, 2),
    (0x08, 3),
    (0x09, 3),
    (0x0a, 2),
    (0x0b, 2),
    (0x10, 2),
    (0x11, 2),
    (0x12, 2),
    (0x13, 2),
    (0x14, 2),
    (0x15, 1),
    (0x16, 2),
    (0x17, 2),
    (0x18, 2),
    (0x19, 1),
    (0x1a, 2),
    (0x1b, 2),
    (0x1c, 2),
    (0x1d, 2),
];

fn modulus() -> BigUint {
    BigUint::one() << 256
}

fn to_signed(x: &BigUint) -> BigInt {
    if x.bit(255) {
        BigInt::from(x.clone()) - BigInt::from(modulus())
    } else {
        BigInt::from(x.clone())
    }
}

fn from_signed(x: BigInt) -> BigUint {
    let m = BigInt::from(modulus());
    let r = ((x % &m) + &m) % &m;
    r.to_biguint().unwrap()
}

fn small(x: &BigUint, limit: u64) -> Option<u64> {
    x.to_u64().filter(|v| *v < limit)
}

fn word(x: &BigUint) -> [u8; 32] {
    let bytes = x.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    out
}

fn eval(opcode: u8, a: &[BigUint]) -> BigUint {
    let m = modulus();
    let b = |v: bool| if v { BigUint::one() } else { BigUint::zero() };
    match opcode {
        0x01 => (&a[0] + &a[1]) % &m,
        0x02 => (&a[0] * &a[1]) % &m,
        0x03 => (&a[0] + &m - &a[1]) % &m,
        0x04 => if a[1].is_zero() { BigUint::zero() } else { &a[0] / &a[1] },
        0x05 => {
            if a[1].is_zero() {
                BigUint::zero()
            } else {
                from_signed(to_signed(&a[0]) / to_signed(&a[1]))
            }
        }
        0x06 => if a[1].is_zero() { BigUint::zero() } else { &a[0] % &a[1] },
        0x07 => {
            if a[1].is_zero() {
                BigUint::zero()
            } else {
                from_signed(to_signed(&a[0]) % to_signed(&a[1]))
            }
        }
        0x08 => if a[2].is_zero() { BigUint::zero() } else { (&a[0] + &a[1]) % &a[2] },
        0x09 => if a[2].is_zero() { BigUint::zero() } else { (&a[0] * &a[1]) % &a[2] },
        0x0a => a[0].modpow(&a[1], &m),
        0x0b => match small(&a[0], 31) {
            Some(k) => {
                let bit = 8 * k + 7;
                let low = (BigUint::one() << (bit + 1)) - BigUint::one();
                if a[1].bit(bit) {
                    &a[1] | (&m - BigUint::one() - &low)
                } else {
                    &a[1] & &low
                }
            }
            None => a[1].clone(),
        },
        0x10 => b(a[0] < a[1]),
        0x11 => b(a[0] > a[1]),
        0x12 => b(to_signed(&a[0]) < to_signed(&a[1])),
        0x13 => b(to_signed(&a[0]) > to_signed(&a[1])),
        0x14 => b(a[0] == a[1]),
        0x15 => b(a[0].is_zero()),
        0x16 => &a[0] & &a[1],
        0x17 => &a[0] | &a[1],
        0x18 => &a[0] ^ &a[1],
        0x19 => &m - BigUint::one() - &a[0],
        0x1a => match small(&a[0], 32) {
            Some(i) => BigUint::from(word(&a[1])[i as usize]),
            None => BigUint::zero(),
        },
        0x1b => match small(&a[0], 256) {
            Some(s) => (&a[1] << s) % &m,
            None => BigUint::zero(),
        },
        0x1c => match small(&a[0], 256) {
            Some(s) => &a[1] >> s,
            None => BigUint::zero(),
        },
        0x1d => {
            let s = small(&a[0], 256).unwrap_or(256);
            let v = to_signed(&a[1]);
            // floor division by 2^s
            let d = BigInt::one() << s;
            let q = if v.sign() == Sign::Minus {
                let n: BigInt = -&v + &d - 1;
                -(n / &d)
            } else {
                v / &d
            };
            from_signed(q)
        }
        _ => unreachable!("opcode {opcode:#x}"),
    }
}

/// Runs `ops` from an empty stack and memory; the final stack, bottom first.
pub fn interpret(ops: &[Op]) -> Vec<BigUint> {
    let mut stack: Vec<BigUint> = Vec::new();
    let mut mem: Vec<u8> = Vec::new();
    let grow = |mem: &mut Vec<u8>, end: usize| {
        if mem.len() < end {
            mem.resize(end, 0);
        }
    };
    for op in ops {
        match op {
            Op::Push(bytes) => stack.push(BigUint::from_bytes_be(bytes)),
            Op::Arith(code) => {
                let arity = ARITH.iter().find(|(c, _)| c == code).unwrap().1;
                let args: Vec<BigUint> = (0..arity).map(|_| stack.pop().unwrap()).collect();
                stack.push(eval(*code, &args));
            }
            Op::Dup(n) => stack.push(stack[stack.len() - *n as usize].clone()),
            Op::Swap(n) => {
                let top = stack.len() - 1;
                stack.swap(top, top - *n as usize);
            }
            Op::Pop => {
                stack.pop();
            }
            Op::MStore(off) => {
                let v = stack.pop().unwrap();
                let o = *off as usize;
                grow(&mut mem, o + 32);
                mem[o..o + 32].copy_from_slice(&word(&v));
            }
            Op::MStore8(off) => {
                let v = stack.pop().unwrap();
                let o = *off as usize;
                grow(&mut mem, o + 1);
                mem[o] = word(&v)[31];
            }
            Op::MLoad(off) => {
                let o = *off as usize;
                grow(&mut mem, o + 32);
                stack.push(BigUint::from_bytes_be(&mem[o..o + 32]));
            }
            Op::Sha3(off, len) => {
                let (o, l) = (*off as usize, *len as usize);
                grow(&mut mem, o + l);
                stack.push(BigUint::from_bytes_be(&Keccak256::digest(&mem[o..o + l])));
            }
        }
    }
    stack
}

fn push_instr(bytes: &[u8]) -> (u8, Vec<u8>) {
    if bytes.is_empty() {
        (0x5f, Vec::new())
    } else {
        (0x5f + bytes.len() as u8, bytes.to_vec())
    }
}

/// Encodes `ops` (plus a final STOP) as engine instructions and raw code.
pub fn assemble(ops: &[Op]) -> (Vec<Instruction>, Vec<u8>) {
    let mut raw: Vec<(u8, Vec<u8>)> = Vec::new();
    for op in ops {
        match op {
            Op::Push(b) => raw.push(push_instr(b)),
            Op::Arith(c) => raw.push((*c, vec![])),
            Op::Dup(n) => raw.push((0x7f + n, vec![])),
            Op::Swap(n) => raw.push((0x8f + n, vec![])),
            Op::Pop => raw.push((0x50, vec![])),
            Op::MStore(o) => {
                raw.push(push_instr(&[*o]));
                raw.push((0x52, vec![]));
            }
            Op::MStore8(o) => {
                raw.push(push_instr(&[*o]));
                raw.push((0x53, vec![]));
            }
            Op::MLoad(o) => {
                raw.push(push_instr(&[*o]));
                raw.push((0x51, vec![]));
            }
            Op::Sha3(o, l) => {
                raw.push(push_instr(&[*l]));
                raw.push(push_instr(&[*o]));
                raw.push((0x20, vec![]));
            }
        }
    }
    raw.push((0x00, vec![]));
    let mut code = Vec::new();
    let mut instrs = Vec::new();
    for (i, (opcode, imm)) in raw.into_iter().enumerate() {
        code.push(opcode);
        code.extend(&imm);
        instrs.push(Instruction { pc: code.len() - 1 - imm.len(), opcode, immediate: imm, src: i });
    }
    (instrs, code)
}

fn operand(kind: u8, seed: [u8; 32]) -> Vec<u8> {
    let v: Vec<u8> = match kind % 9 {
        0 => vec![],
        1 => vec![1],
        2 => vec![seed[0] % 40],
        3 => vec![0xff; 32],
        4 => {
            let mut v = vec![0u8; 32];
            v[0] = 0x80;
            v
        }
        5 => vec![0xff; 20],
        6 => vec![seed[0]],
        7 => vec![1, seed[1]],
        _ => seed.to_vec(),
    };
    let first = v.iter().position(|b| *b != 0).unwrap_or(v.len());
    v[first..].to_vec()
}

/// Straight-line programs over the modeled arithmetic, stack and memory
/// opcodes. Operands skew toward boundary values.
pub fn arb_program() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec((0u8..40, any::<u8>(), any::<[u8; 32]>(), 0u8..100, 0u8..70), 1..40).prop_map(|items| {
        let mut ops = Vec::new();
        let mut depth = 0usize;
        for (choice, kind, seed, off, len) in items {
            let op = match choice {
                0..=24 => {
                    let (code, arity) = ARITH[choice as usize];
                    (depth >= arity).then_some((Op::Arith(code), arity, 1))
                }
                25..=27 => {
                    let n = 1 + kind % 16;
                    (depth >= n as usize).then_some((Op::Dup(n), 0, 1))
                }
                28..=30 => {
                    let n = 1 + kind % 16;
                    (depth > n as usize).then_some((Op::Swap(n), 0, 0))
                }
                31 => (depth >= 1).then_some((Op::Pop, 1, 0)),
                32 | 33 => (depth >= 1).then_some((Op::MStore(off), 1, 0)),
                34 => (depth >= 1).then_some((Op::MStore8(off), 1, 0)),
                35 | 36 => Some((Op::MLoad(off), 0, 1)),
                37 => Some((Op::Sha3(off, len), 0, 1)),
                _ => None,
            };
            match op {
                Some((op, pops, pushes)) => {
                    ops.push(op);
                    depth = depth - pops + pushes;
                }
                None => {
                    ops.push(Op::Push(operand(kind, seed)));
                    depth += 1;
                }
            }
        }
        ops
    })
}

pub fn to_u256(x: &BigUint) -> U256 {
    U256::from_be_bytes(word(x))
}
