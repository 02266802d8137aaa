//! Symbolic 256-bit expressions.

use crate::hash::keccak256;
use crate::U256;
use serde::Serialize;
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum OpKind {
    Add,
    Mul,
    Sub,
    Div,
    SDiv,
    Mod,
    SMod,
    AddMod,
    MulMod,
    Exp,
    SignExtend,
    Lt,
    Gt,
    Slt,
    Sgt,
    Eq,
    IsZero,
    And,
    Or,
    Xor,
    Not,
    Byte,
    Shl,
    Shr,
    Sar,
    /// keccak-256 over the concatenation of 32-byte argument words.
    Sha3,
}

impl OpKind {
    pub fn arity(self) -> Option<usize> {
        use OpKind::*;
        match self {
            IsZero | Not => Some(1),
            AddMod | MulMod => Some(3),
            Sha3 => None,
            _ => Some(2),
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Mul | OpKind::And | OpKind::Or | OpKind::Xor | OpKind::Eq)
    }

    /// Operators whose result is always 0 or 1.
    pub fn is_boolean(self) -> bool {
        matches!(self, OpKind::Lt | OpKind::Gt | OpKind::Slt | OpKind::Sgt | OpKind::Eq | OpKind::IsZero)
    }

    pub fn mnemonic(self) -> &'static str {
        use OpKind::*;
        match self {
            Add => "ADD",
            Mul => "MUL",
            Sub => "SUB",
            Div => "DIV",
            SDiv => "SDIV",
            Mod => "MOD",
            SMod => "SMOD",
            AddMod => "ADDMOD",
            MulMod => "MULMOD",
            Exp => "EXP",
            SignExtend => "SIGNEXTEND",
            Lt => "LT",
            Gt => "GT",
            Slt => "SLT",
            Sgt => "SGT",
            Eq => "EQ",
            IsZero => "ISZERO",
            And => "AND",
            Or => "OR",
            Xor => "XOR",
            Not => "NOT",
            Byte => "BYTE",
            Shl => "SHL",
            Shr => "SHR",
            Sar => "SAR",
            Sha3 => "SHA3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Env {
    Caller,
    CallValue,
    Address,
    Timestamp,
    Number,
    Origin,
    CallDataSize,
}

impl Env {
    pub fn name(self) -> &'static str {
        match self {
            Env::Caller => "msg.sender",
            Env::CallValue => "msg.value",
            Env::Address => "address(this)",
            Env::Timestamp => "block.timestamp",
            Env::Number => "block.number",
            Env::Origin => "tx.origin",
            Env::CallDataSize => "msg.data.length",
        }
    }
}

/// Where a free variable comes from. This, not the display label, is the
/// variable's identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    Parameter(usize),
    /// Calldata word at a constant offset that is not a head parameter slot
    /// (dynamic array contents, lengths, ...).
    Calldata(SymValue),
    /// Storage read whose slot expression contains no hash.
    StorageDirect(SymValue),
    /// Storage read through a hashed (mapping / dynamic array) slot.
    StorageMapping(SymValue),
    Environment(Env),
    /// Unmodeled value; `call` marks results of external calls.
    FreshExternal { id: u64, pc: usize, call: bool },
}

impl Provenance {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Provenance::Parameter(_) => "parameter",
            Provenance::Calldata(_) => "calldata",
            Provenance::StorageDirect(_) => "storage-direct",
            Provenance::StorageMapping(_) => "storage-mapping",
            Provenance::Environment(_) => "environment",
            Provenance::FreshExternal { .. } => "fresh-external",
        }
    }
}

/// Display name of a variable. Compares equal to every other label so that
/// two reads of one slot labelled from different source snippets stay the
/// same variable.
#[derive(Debug, Clone)]
pub struct Label(pub Arc<str>);

impl PartialEq for Label {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for Label {}
impl Hash for Label {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Var {
    pub prov: Provenance,
    pub label: Label,
}

impl Var {
    pub fn name(&self) -> &str {
        &self.label.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(U256),
    Var(Var),
    Op(OpKind, Vec<SymValue>),
}

#[derive(Debug)]
pub struct Node {
    pub expr: Expr,
    hash: u64,
    has_var: bool,
}

#[derive(Clone)]
pub struct SymValue(Arc<Node>);

impl PartialEq for SymValue {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.0.expr == other.0.expr)
    }
}
impl Eq for SymValue {}
impl Hash for SymValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

pub fn mask160() -> U256 {
    (U256::from(1u8) << 160) - U256::from(1u8)
}

fn bool_word(b: bool) -> U256 {
    if b {
        U256::from(1u8)
    } else {
        U256::ZERO
    }
}

impl SymValue {
    fn new(expr: Expr) -> SymValue {
        let mut h = DefaultHasher::new();
        expr.hash(&mut h);
        let has_var = match &expr {
            Expr::Const(_) => false,
            Expr::Var(_) => true,
            Expr::Op(_, args) => args.iter().any(|a| a.0.has_var),
        };
        SymValue(Arc::new(Node { hash: h.finish(), expr, has_var }))
    }

    pub fn constant(v: U256) -> SymValue {
        SymValue::new(Expr::Const(v))
    }

    pub fn from_u64(v: u64) -> SymValue {
        SymValue::constant(U256::from(v))
    }

    pub fn var(prov: Provenance, label: impl Into<Arc<str>>) -> SymValue {
        SymValue::new(Expr::Var(Var { prov, label: Label(label.into()) }))
    }

    pub fn expr(&self) -> &Expr {
        &self.0.expr
    }

    pub fn as_const(&self) -> Option<U256> {
        match self.0.expr {
            Expr::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match &self.0.expr {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_op(&self) -> Option<(OpKind, &[SymValue])> {
        match &self.0.expr {
            Expr::Op(k, a) => Some((*k, a.as_slice())),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        !self.0.has_var && matches!(self.0.expr, Expr::Const(_))
    }

    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    /// Whether the value is a comparison result (always 0 or 1).
    pub fn is_boolean(&self) -> bool {
        self.as_op().is_some_and(|(k, _)| k.is_boolean())
    }

    /// Every subexpression, each reached once (shared nodes are visited once).
    pub fn visit(&self, f: &mut impl FnMut(&SymValue)) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(Arc::as_ptr(&v.0) as usize) {
                continue;
            }
            f(&v);
            match &v.0.expr {
                Expr::Op(_, args) => stack.extend(args.iter().cloned()),
                Expr::Var(var) => match &var.prov {
                    Provenance::StorageDirect(s) | Provenance::StorageMapping(s) | Provenance::Calldata(s) => {
                        stack.push(s.clone())
                    }
                    _ => {}
                },
                Expr::Const(_) => {}
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit(&mut |v| {
            if let Some(var) = v.as_var() {
                if !out.contains(var) {
                    out.push(var.clone());
                }
            }
        });
        out
    }

    pub fn contains_sha3(&self) -> bool {
        let mut found = false;
        self.visit(&mut |v| found |= matches!(v.as_op(), Some((OpKind::Sha3, _))));
        found
    }

    /// Builds an operator node, folding constants and applying local
    /// identities. `args` are in stack-pop order.
    pub fn op(kind: OpKind, args: Vec<SymValue>) -> SymValue {
        if let Some(n) = kind.arity() {
            assert_eq!(args.len(), n, "{} takes {n} operands", kind.mnemonic());
        }
        if kind != OpKind::Sha3 {
            if let Some(values) = args.iter().map(SymValue::as_const).collect::<Option<Vec<_>>>() {
                return SymValue::constant(apply(kind, &values));
            }
        }
        let mut args = args;
        if kind.is_commutative() && args[0].is_const() && !args[1].is_const() {
            args.swap(0, 1);
        }
        if let Some(v) = simplify(kind, &args) {
            return v;
        }
        SymValue::new(Expr::Op(kind, args))
    }

    pub fn op1(kind: OpKind, a: SymValue) -> SymValue {
        SymValue::op(kind, vec![a])
    }

    pub fn op2(kind: OpKind, a: SymValue, b: SymValue) -> SymValue {
        SymValue::op(kind, vec![a, b])
    }

    /// `AND(self, 2^160 - 1)`
    pub fn mask_address(&self) -> SymValue {
        SymValue::op2(OpKind::And, self.clone(), SymValue::constant(mask160()))
    }

    /// Evaluates a variable-free expression, hashing SHA3 arguments as
    /// concatenated big-endian words.
    pub fn eval_concrete(&self) -> Option<U256> {
        match &self.0.expr {
            Expr::Const(v) => Some(*v),
            Expr::Var(_) => None,
            Expr::Op(OpKind::Sha3, args) => {
                let mut bytes = Vec::with_capacity(args.len() * 32);
                for a in args {
                    bytes.extend_from_slice(&a.eval_concrete()?.to_be_bytes::<32>());
                }
                Some(U256::from_be_bytes(keccak256(&bytes)))
            }
            Expr::Op(k, args) => {
                let values = args.iter().map(SymValue::eval_concrete).collect::<Option<Vec<_>>>()?;
                Some(apply(*k, &values))
            }
        }
    }
}

fn simplify(kind: OpKind, a: &[SymValue]) -> Option<SymValue> {
    use OpKind::*;
    let zero = U256::ZERO;
    let one = U256::from(1u8);
    let c1 = a.get(1).and_then(SymValue::as_const);
    let c0 = a.first().and_then(SymValue::as_const);
    match kind {
        Add | Or | Xor if c1 == Some(zero) => Some(a[0].clone()),
        Sub if c1 == Some(zero) => Some(a[0].clone()),
        Sub | Xor if a[0] == a[1] => Some(SymValue::constant(zero)),
        Mul if c1 == Some(one) => Some(a[0].clone()),
        Mul if c1 == Some(zero) => Some(SymValue::constant(zero)),
        Div if c1 == Some(one) => Some(a[0].clone()),
        Div if c0 == Some(zero) => Some(SymValue::constant(zero)),
        // SHL/SHR take the shift amount first
        Shl | Shr | Sar if c0 == Some(zero) => Some(a[1].clone()),
        Eq if a[0] == a[1] => Some(SymValue::constant(one)),
        And if c1 == Some(U256::MAX) => Some(a[0].clone()),
        And if c1 == Some(zero) => Some(SymValue::constant(zero)),
        And if a[0] == a[1] => Some(a[0].clone()),
        And => {
            let c = c1?;
            if a[0].is_boolean() && c.bit(0) {
                return Some(a[0].clone());
            }
            match a[0].as_op() {
                Some((And, inner)) => {
                    let ci = inner[1].as_const()?;
                    Some(SymValue::op2(And, inner[0].clone(), SymValue::constant(ci & c)))
                }
                _ => None,
            }
        }
        IsZero => match a[0].as_op() {
            // ISZERO(ISZERO(b)) = b for comparison results
            Some((IsZero, inner)) if inner[0].is_boolean() => Some(inner[0].clone()),
            _ => None,
        },
        _ => None,
    }
}

fn is_neg(x: U256) -> bool {
    x.bit(255)
}

fn abs(x: U256) -> U256 {
    if is_neg(x) {
        x.wrapping_neg()
    } else {
        x
    }
}

/// Concrete EVM semantics of `kind` over stack-ordered operands.
pub fn apply(kind: OpKind, v: &[U256]) -> U256 {
    use OpKind::*;
    let zero = U256::ZERO;
    match kind {
        Add => v[0].wrapping_add(v[1]),
        Mul => v[0].wrapping_mul(v[1]),
        Sub => v[0].wrapping_sub(v[1]),
        Div => v[0].checked_div(v[1]).unwrap_or(zero),
        SDiv => {
            if v[1] == zero {
                return zero;
            }
            let q = abs(v[0]) / abs(v[1]);
            if is_neg(v[0]) != is_neg(v[1]) {
                q.wrapping_neg()
            } else {
                q
            }
        }
        Mod => v[0].checked_rem(v[1]).unwrap_or(zero),
        SMod => {
            if v[1] == zero {
                return zero;
            }
            let r = abs(v[0]) % abs(v[1]);
            if is_neg(v[0]) {
                r.wrapping_neg()
            } else {
                r
            }
        }
        AddMod => v[0].add_mod(v[1], v[2]),
        MulMod => v[0].mul_mod(v[1], v[2]),
        Exp => v[0].wrapping_pow(v[1]),
        SignExtend => {
            if v[0] >= U256::from(31u8) {
                return v[1];
            }
            let bit = v[0].to::<usize>() * 8 + 7;
            let low = (U256::from(1u8) << (bit + 1)) - U256::from(1u8);
            if v[1].bit(bit) {
                v[1] | !low
            } else {
                v[1] & low
            }
        }
        Lt => bool_word(v[0] < v[1]),
        Gt => bool_word(v[0] > v[1]),
        Slt => bool_word(signed_lt(v[0], v[1])),
        Sgt => bool_word(signed_lt(v[1], v[0])),
        Eq => bool_word(v[0] == v[1]),
        IsZero => bool_word(v[0] == zero),
        And => v[0] & v[1],
        Or => v[0] | v[1],
        Xor => v[0] ^ v[1],
        Not => !v[0],
        Byte => {
            if v[0] >= U256::from(32u8) {
                return zero;
            }
            let i = v[0].to::<usize>();
            U256::from(v[1].byte(31 - i))
        }
        Shl => {
            if v[0] >= U256::from(256u16) {
                zero
            } else {
                v[1] << v[0].to::<usize>()
            }
        }
        Shr => {
            if v[0] >= U256::from(256u16) {
                zero
            } else {
                v[1] >> v[0].to::<usize>()
            }
        }
        Sar => {
            let neg = is_neg(v[1]);
            if v[0] >= U256::from(256u16) {
                return if neg { U256::MAX } else { zero };
            }
            let s = v[0].to::<usize>();
            if neg {
                !((!v[1]) >> s)
            } else {
                v[1] >> s
            }
        }
        Sha3 => {
            let mut bytes = Vec::with_capacity(v.len() * 32);
            for w in v {
                bytes.extend_from_slice(&w.to_be_bytes::<32>());
            }
            U256::from_be_bytes(keccak256(&bytes))
        }
    }
}

fn signed_lt(a: U256, b: U256) -> bool {
    match (is_neg(a), is_neg(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

impl fmt::Display for SymValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.expr {
            Expr::Const(v) => {
                if *v < U256::from(1u64 << 32) {
                    write!(f, "{v}")
                } else {
                    write!(f, "{v:#x}")
                }
            }
            Expr::Var(var) => write!(f, "{}", var.name()),
            Expr::Op(k, args) => {
                if *k == OpKind::And && args[1].as_const() == Some(mask160()) {
                    return write!(f, "address({})", args[0]);
                }
                write!(f, "{}(", k.mnemonic())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Debug for SymValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for SymValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: u64) -> SymValue {
        SymValue::from_u64(v)
    }

    fn x() -> SymValue {
        SymValue::var(Provenance::Parameter(0), "x")
    }

    #[test]
    fn folding() {
        assert_eq!(SymValue::op2(OpKind::Add, c(2), c(3)).as_const(), Some(U256::from(5u8)));
        assert_eq!(SymValue::op2(OpKind::Sub, c(0), c(1)).as_const(), Some(U256::MAX));
        assert_eq!(SymValue::op2(OpKind::Div, c(7), c(0)).as_const(), Some(U256::ZERO));
    }

    #[test]
    fn identities() {
        assert_eq!(SymValue::op2(OpKind::Add, x(), c(0)), x());
        assert_eq!(SymValue::op2(OpKind::Add, c(0), x()), x());
        assert_eq!(SymValue::op2(OpKind::Mul, c(1), x()), x());
        assert_eq!(SymValue::op2(OpKind::Div, x(), c(1)), x());
        assert_eq!(SymValue::op2(OpKind::Shr, c(0), x()), x());
        assert_eq!(SymValue::op2(OpKind::Eq, x(), x()).as_const(), Some(U256::from(1u8)));
        let m = x().mask_address();
        assert_eq!(m.mask_address(), m);
        let lt = SymValue::op2(OpKind::Lt, x(), c(4));
        assert_eq!(SymValue::op2(OpKind::And, lt.clone(), c(0xff)), lt);
        assert_eq!(SymValue::op1(OpKind::IsZero, SymValue::op1(OpKind::IsZero, lt.clone())), lt);
    }

    #[test]
    fn labels_do_not_affect_identity() {
        let slot = c(3);
        let a = SymValue::var(Provenance::StorageDirect(slot.clone()), "_owner");
        let b = SymValue::var(Provenance::StorageDirect(slot), "_paused");
        assert_eq!(a, b);
        assert_ne!(a, SymValue::var(Provenance::StorageDirect(c(4)), "_owner"));
    }

    #[test]
    fn sha3_stays_symbolic_but_evaluates() {
        let h = SymValue::op(OpKind::Sha3, vec![c(0), c(0)]);
        assert!(h.as_op().is_some());
        // keccak256 of 64 zero bytes
        let expected = "ad3228b676f7d3cd4284a5443f17f1962b36e491b30a40b2405849e597ba5fb5";
        assert_eq!(hex::encode(h.eval_concrete().unwrap().to_be_bytes::<32>()), expected);
        assert!(h.contains_sha3());
    }

    #[test]
    fn signed_semantics() {
        let m1 = U256::MAX;
        assert_eq!(apply(OpKind::SDiv, &[m1, U256::from(1u8)]), m1);
        assert_eq!(apply(OpKind::Slt, &[m1, U256::ZERO]), U256::from(1u8));
        assert_eq!(apply(OpKind::Sar, &[U256::from(4u8), m1]), m1);
        assert_eq!(apply(OpKind::SignExtend, &[U256::ZERO, U256::from(0x80u8)]), m1 - U256::from(0x7fu8));
        assert_eq!(apply(OpKind::Byte, &[U256::from(31u8), U256::from(0xabu8)]), U256::from(0xabu8));
    }
}
