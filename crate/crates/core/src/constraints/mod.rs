//! Path constraints, structural queries over them, and satisfiability.

mod blast;

use crate::ast::Span;
use crate::symexec::value::{mask160, Env, OpKind, Provenance, SymValue};
use serde::Serialize;
use std::fmt;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Eq,
    Neq,
    Ult,
    Ugt,
    Ule,
    Uge,
    Slt,
    Sgt,
    Sle,
    Sge,
    Nonzero,
    Zero,
}

impl Relation {
    pub fn negate(self) -> Relation {
        use Relation::*;
        match self {
            Eq => Neq,
            Neq => Eq,
            Ult => Uge,
            Uge => Ult,
            Ugt => Ule,
            Ule => Ugt,
            Slt => Sge,
            Sge => Slt,
            Sgt => Sle,
            Sle => Sgt,
            Nonzero => Zero,
            Zero => Nonzero,
        }
    }

    fn symbol(self) -> &'static str {
        use Relation::*;
        match self {
            Eq => "==",
            Neq => "!=",
            Ult => "<u",
            Ugt => ">u",
            Ule => "<=u",
            Uge => ">=u",
            Slt => "<s",
            Sgt => ">s",
            Sle => "<=s",
            Sge => ">=s",
            Nonzero => "!= 0",
            Zero => "== 0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Constraint {
    pub relation: Relation,
    pub lhs: SymValue,
    pub rhs: SymValue,
}

impl Constraint {
    pub fn new(relation: Relation, lhs: SymValue, rhs: SymValue) -> Constraint {
        Constraint { relation, lhs, rhs }
    }

    pub fn eq(lhs: SymValue, rhs: SymValue) -> Constraint {
        Constraint::new(Relation::Eq, lhs, rhs)
    }

    pub fn neq(lhs: SymValue, rhs: SymValue) -> Constraint {
        Constraint::new(Relation::Neq, lhs, rhs)
    }

    pub fn nonzero(v: SymValue) -> Constraint {
        Constraint::new(Relation::Nonzero, v, SymValue::from_u64(0))
    }

    pub fn zero(v: SymValue) -> Constraint {
        Constraint::new(Relation::Zero, v, SymValue::from_u64(0))
    }

    /// Branch condition `cond` taken (`holds`) or not, with ISZERO
    /// wrappers peeled off.
    pub fn branch(cond: SymValue, holds: bool) -> Constraint {
        let mut cond = cond;
        let mut holds = holds;
        while let Some((OpKind::IsZero, args)) = cond.as_op() {
            let inner = args[0].clone();
            cond = inner;
            holds = !holds;
        }
        if holds {
            Constraint::nonzero(cond)
        } else {
            Constraint::zero(cond)
        }
    }

    /// Exact relational negation over the same operands.
    pub fn negate(&self) -> Constraint {
        Constraint::new(self.relation.negate(), self.lhs.clone(), self.rhs.clone())
    }

    /// Truth value when both sides are constant.
    pub fn constant_truth(&self) -> Option<bool> {
        let l = self.lhs.as_const()?;
        let r = self.rhs.as_const()?;
        let lt_s = |a: crate::U256, b: crate::U256| {
            let (na, nb) = (a.bit(255), b.bit(255));
            if na != nb {
                na
            } else {
                a < b
            }
        };
        use Relation::*;
        Some(match self.relation {
            Eq => l == r,
            Neq => l != r,
            Ult => l < r,
            Ugt => l > r,
            Ule => l <= r,
            Uge => l >= r,
            Slt => lt_s(l, r),
            Sgt => lt_s(r, l),
            Sle => !lt_s(r, l),
            Sge => !lt_s(l, r),
            Nonzero => !l.is_zero(),
            Zero => l.is_zero(),
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.relation {
            Relation::Nonzero | Relation::Zero => write!(f, "{} {}", self.lhs, self.relation.symbol()),
            r => write!(f, "{} {} {}", self.lhs, r.symbol(), self.rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub constraint: Constraint,
    pub pc: usize,
    pub span: Option<Span>,
}

/// Append-only list of constraints with where each one was collected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintSet {
    entries: Vec<Entry>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, constraint: Constraint, pc: usize, span: Option<Span>) {
        self.entries.push(Entry { constraint, pc, span });
    }

    /// Functional push: returns the extended set and leaves `self` intact.
    pub fn with(&self, constraint: Constraint) -> ConstraintSet {
        let mut out = self.clone();
        out.push(constraint, 0, None);
        out
    }

    pub fn snapshot(&self) -> ConstraintSet {
        self.clone()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.entries.iter().map(|e| &e.constraint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether `c` is the exact negation of a constraint already present.
    pub fn contradicts(&self, c: &Constraint) -> bool {
        let neg = c.negate();
        self.constraints().any(|e| *e == neg)
    }

    pub fn contains_constraint(&self, c: &Constraint) -> bool {
        self.constraints().any(|e| e == c)
    }
}

/// Requirement on one side of an equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SidePattern {
    Environment(Env),
    /// Storage read through an unhashed slot. With `address_only`, the value
    /// must be an address: either masked to 160 bits or named after a state
    /// variable listed in `address_names`.
    StorageDirect { address_only: bool, address_names: Vec<String> },
    StorageMapping,
    Parameter,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintPattern {
    pub lhs: SidePattern,
    pub rhs: SidePattern,
}

impl ConstraintPattern {
    /// `msg.sender == <address state variable>`
    pub fn caller_eq_storage_direct(address_names: Vec<String>) -> Self {
        ConstraintPattern {
            lhs: SidePattern::Environment(Env::Caller),
            rhs: SidePattern::StorageDirect { address_only: true, address_names },
        }
    }
}

fn strip_mask(v: &SymValue) -> (SymValue, bool) {
    let mut cur = v.clone();
    let mut masked = false;
    while let Some((OpKind::And, args)) = cur.as_op() {
        match args[1].as_const() {
            Some(c) if c == mask160() => {
                masked = true;
                let inner = args[0].clone();
                cur = inner;
            }
            _ => break,
        }
    }
    (cur, masked)
}

fn root_name(label: &str) -> &str {
    let end = label.find(|c: char| c == '[' || c == '.' || c == '(' || c.is_whitespace()).unwrap_or(label.len());
    &label[..end]
}

impl SidePattern {
    pub fn matches(&self, v: &SymValue) -> bool {
        let (core, masked) = strip_mask(v);
        let Some(var) = core.as_var() else {
            return *self == SidePattern::Any;
        };
        match (self, &var.prov) {
            (SidePattern::Any, _) => true,
            (SidePattern::Environment(e), Provenance::Environment(w)) => e == w,
            (SidePattern::Parameter, Provenance::Parameter(_)) => true,
            (SidePattern::StorageMapping, Provenance::StorageMapping(_)) => true,
            (SidePattern::StorageDirect { address_only, address_names }, Provenance::StorageDirect(_)) => {
                !address_only || masked || address_names.iter().any(|n| n == root_name(var.name()))
            }
            _ => false,
        }
    }
}

/// Equalities implied by a constraint, including the operands of every
/// disjunct of a satisfied `||` guard (candidates, not facts).
fn equality_atoms(c: &Constraint, out: &mut Vec<(SymValue, SymValue)>) {
    match c.relation {
        Relation::Eq => out.push((c.lhs.clone(), c.rhs.clone())),
        Relation::Nonzero => nonzero_atoms(&c.lhs, out),
        Relation::Zero => zero_atoms(&c.lhs, out),
        _ => {}
    }
}

fn nonzero_atoms(v: &SymValue, out: &mut Vec<(SymValue, SymValue)>) {
    match v.as_op() {
        Some((OpKind::Eq, a)) => out.push((a[0].clone(), a[1].clone())),
        Some((OpKind::IsZero, a)) => zero_atoms(&a[0], out),
        Some((OpKind::Or, a)) => {
            nonzero_atoms(&a[0], out);
            nonzero_atoms(&a[1], out);
        }
        Some((OpKind::And, a)) if a[0].is_boolean() && a[1].is_boolean() => {
            nonzero_atoms(&a[0], out);
            nonzero_atoms(&a[1], out);
        }
        _ => {}
    }
}

fn zero_atoms(v: &SymValue, out: &mut Vec<(SymValue, SymValue)>) {
    match v.as_op() {
        Some((OpKind::Sub | OpKind::Xor, a)) => out.push((a[0].clone(), a[1].clone())),
        Some((OpKind::IsZero, a)) => nonzero_atoms(&a[0], out),
        Some((OpKind::Or, a)) => {
            zero_atoms(&a[0], out);
            zero_atoms(&a[1], out);
        }
        _ => {}
    }
}

/// Whether some constraint, or a disjunct of one, is an equality whose
/// sides match the pattern (in either orientation).
pub fn contains(set: &ConstraintSet, pattern: &ConstraintPattern) -> bool {
    find(set, pattern).is_some()
}

/// First entry that [`contains`] would match.
pub fn find<'a>(set: &'a ConstraintSet, pattern: &ConstraintPattern) -> Option<&'a Entry> {
    set.entries().iter().find(|e| {
        let mut atoms = Vec::new();
        equality_atoms(&e.constraint, &mut atoms);
        atoms.iter().any(|(a, b)| {
            (pattern.lhs.matches(a) && pattern.rhs.matches(b)) || (pattern.lhs.matches(b) && pattern.rhs.matches(a))
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveOutcome {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub timeout: Duration,
    /// Equal storage slots imply equal values (Ackermann constraints between
    /// storage reads).
    pub storage_congruence: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { timeout: Duration::from_secs(10), storage_congruence: true }
    }
}

/// Satisfiability with default limits.
/// `(equal?, a, b)` when `c` states `a == b` or `a != b` directly or through
/// an EQ / SUB / XOR guard. Operands are ordered so both spellings agree.
fn equality_atom(c: &Constraint) -> Option<(bool, SymValue, SymValue)> {
    let (pos, a, b) = match (c.relation, c.lhs.as_op()) {
        (Relation::Eq, _) => (true, c.lhs.clone(), c.rhs.clone()),
        (Relation::Neq, _) => (false, c.lhs.clone(), c.rhs.clone()),
        (Relation::Nonzero, Some((OpKind::Eq, x))) => (true, x[0].clone(), x[1].clone()),
        (Relation::Zero, Some((OpKind::Eq, x))) => (false, x[0].clone(), x[1].clone()),
        (Relation::Zero, Some((OpKind::Sub | OpKind::Xor, x))) => (true, x[0].clone(), x[1].clone()),
        (Relation::Nonzero, Some((OpKind::Sub | OpKind::Xor, x))) => (false, x[0].clone(), x[1].clone()),
        _ => return None,
    };
    if a.structural_hash() <= b.structural_hash() {
        Some((pos, a, b))
    } else {
        Some((pos, b, a))
    }
}

pub fn solve(set: &ConstraintSet) -> Result<SolveOutcome, ConstraintError> {
    solve_with(set, &SolverConfig::default())
}

pub fn solve_with(set: &ConstraintSet, config: &SolverConfig) -> Result<SolveOutcome, ConstraintError> {
    let mut live: Vec<&Constraint> = Vec::new();
    for c in set.constraints() {
        match c.constant_truth() {
            Some(true) => continue,
            Some(false) => return Ok(SolveOutcome::Unsat),
            None => live.push(c),
        }
    }
    for (i, c) in live.iter().enumerate() {
        let neg = c.negate();
        if live[..i].iter().any(|d| **d == neg) {
            return Ok(SolveOutcome::Unsat);
        }
    }
    let atoms: Vec<(bool, SymValue, SymValue)> = live.iter().filter_map(|c| equality_atom(c)).collect();
    for (i, (pos, a, b)) in atoms.iter().enumerate() {
        if atoms[..i].iter().any(|(p, x, y)| p != pos && x == a && y == b) {
            return Ok(SolveOutcome::Unsat);
        }
    }
    if live.is_empty() {
        return Ok(SolveOutcome::Sat);
    }
    blast::check(&live, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::U256;
    use crate::symexec::value::Expr;
    use proptest::prelude::*;

    fn var(i: usize, name: &str) -> SymValue {
        SymValue::var(Provenance::Parameter(i), name)
    }

    fn set_of(cs: &[Constraint]) -> ConstraintSet {
        let mut s = ConstraintSet::new();
        for c in cs {
            s.push(c.clone(), 0, None);
        }
        s
    }

    #[test]
    fn push_keeps_order_and_snapshots() {
        let x = var(0, "x");
        let mut s = ConstraintSet::new();
        let before = s.snapshot();
        s.push(Constraint::eq(x.clone(), SymValue::from_u64(5)), 1, None);
        s.push(Constraint::neq(x.clone(), SymValue::from_u64(6)), 2, None);
        assert_eq!(s.entries()[0].pc, 1);
        assert_eq!(s.entries()[1].constraint.relation, Relation::Neq);
        assert!(before.is_empty());
    }

    #[test]
    fn direct_contradiction() {
        let x = var(0, "x");
        let five = SymValue::from_u64(5);
        let s = set_of(&[Constraint::eq(x.clone(), five.clone()), Constraint::neq(x, five)]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
    }

    #[test]
    fn independent_vars_are_sat() {
        let s = set_of(&[
            Constraint::eq(var(0, "x"), SymValue::from_u64(5)),
            Constraint::neq(var(1, "y"), SymValue::from_u64(5)),
        ]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Sat);
    }

    #[test]
    fn owner_differs_from_from() {
        let owner = SymValue::var(Provenance::StorageMapping(SymValue::from_u64(9)), "_owners[...]").mask_address();
        let from = var(0, "from").mask_address();
        let s = set_of(&[Constraint::neq(owner, from)]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Sat);
    }

    #[test]
    fn semantic_unsat_needs_the_solver() {
        // x < 3 and x > 10
        let x = var(0, "x");
        let s = set_of(&[
            Constraint::new(Relation::Ult, x.clone(), SymValue::from_u64(3)),
            Constraint::new(Relation::Ugt, x.clone(), SymValue::from_u64(10)),
        ]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
        // x + 1 == 0 forces x = MAX
        let s = set_of(&[
            Constraint::zero(SymValue::op2(OpKind::Add, x.clone(), SymValue::from_u64(1))),
            Constraint::new(Relation::Ult, x, SymValue::constant(U256::MAX)),
        ]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
    }

    #[test]
    fn sha3_injectivity() {
        let a = var(0, "a");
        let b = var(1, "b");
        let ha = SymValue::op(OpKind::Sha3, vec![a.clone(), SymValue::from_u64(1)]);
        let hb = SymValue::op(OpKind::Sha3, vec![b.clone(), SymValue::from_u64(1)]);
        let s = set_of(&[Constraint::eq(ha.clone(), hb.clone()), Constraint::neq(a.clone(), b.clone())]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
        let s = set_of(&[Constraint::neq(ha, hb), Constraint::eq(a, b)]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
    }

    #[test]
    fn contains_caller_against_direct_storage() {
        let caller = SymValue::var(Provenance::Environment(Env::Caller), "msg.sender").mask_address();
        let secret = SymValue::var(Provenance::StorageDirect(SymValue::from_u64(0)), "_secretOwner").mask_address();
        let mapped = SymValue::var(Provenance::StorageMapping(SymValue::from_u64(3)), "_owners[...]").mask_address();
        let pat = ConstraintPattern::caller_eq_storage_direct(vec![]);
        let direct = set_of(&[Constraint::branch(SymValue::op2(OpKind::Eq, caller.clone(), secret), true)]);
        assert!(contains(&direct, &pat));
        let mapping = set_of(&[Constraint::branch(SymValue::op2(OpKind::Eq, caller, mapped), true)]);
        assert!(!contains(&mapping, &pat));
        assert!(!contains(&ConstraintSet::new(), &pat));
    }

    #[test]
    fn contains_sees_disjuncts() {
        let caller = SymValue::var(Provenance::Environment(Env::Caller), "msg.sender").mask_address();
        let secret = SymValue::var(Provenance::StorageDirect(SymValue::from_u64(0)), "_secretOwner").mask_address();
        let other = SymValue::op2(OpKind::Lt, var(0, "x"), SymValue::from_u64(3));
        let guard = SymValue::op2(OpKind::Or, other, SymValue::op2(OpKind::Eq, secret, caller));
        let s = set_of(&[Constraint::branch(guard, true)]);
        assert!(contains(&s, &ConstraintPattern::caller_eq_storage_direct(vec![])));
    }

    #[test]
    fn guard_spellings_contradict() {
        let (x, y) = (var(0, "x"), var(1, "y"));
        let s = set_of(&[Constraint::nonzero(SymValue::op2(OpKind::Eq, x.clone(), y.clone())), Constraint::neq(y.clone(), x.clone())]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
        let s = set_of(&[Constraint::zero(SymValue::op2(OpKind::Sub, x.clone(), y.clone())), Constraint::zero(SymValue::op2(OpKind::Eq, x.clone(), y.clone()))]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
        let s = set_of(&[Constraint::nonzero(SymValue::op2(OpKind::Eq, x.clone(), y.clone())), Constraint::eq(y, x)]);
        assert_eq!(solve(&s).unwrap(), SolveOutcome::Sat);
    }

    #[test]
    fn branch_peels_iszero() {
        let x = var(0, "x");
        let c = Constraint::branch(SymValue::op1(OpKind::IsZero, SymValue::op1(OpKind::IsZero, x.clone())), true);
        assert_eq!(c, Constraint::nonzero(x.clone()));
        let c = Constraint::branch(SymValue::op1(OpKind::IsZero, x.clone()), true);
        assert_eq!(c, Constraint::zero(x));
    }

    fn arb_leaf() -> impl Strategy<Value = SymValue> {
        prop_oneof![
            (0usize..4).prop_map(|i| var(i, "v")),
            (0u64..20).prop_map(SymValue::from_u64),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = SymValue> {
        arb_leaf().prop_recursive(3, 12, 2, |inner| {
            (
                prop::sample::select(vec![OpKind::Add, OpKind::Sub, OpKind::And, OpKind::Or, OpKind::Xor, OpKind::Lt, OpKind::Eq, OpKind::Shr]),
                inner.clone(),
                inner,
            )
                .prop_map(|(k, a, b)| SymValue::op2(k, a, b))
        })
    }

    fn arb_constraint() -> impl Strategy<Value = Constraint> {
        (
            prop::sample::select(vec![
                Relation::Eq,
                Relation::Neq,
                Relation::Ult,
                Relation::Ugt,
                Relation::Ule,
                Relation::Uge,
                Relation::Slt,
                Relation::Sgt,
                Relation::Nonzero,
                Relation::Zero,
            ]),
            arb_expr(),
            arb_expr(),
        )
            .prop_map(|(r, a, b)| match r {
                Relation::Nonzero | Relation::Zero => Constraint::new(r, a, SymValue::from_u64(0)),
                _ => Constraint::new(r, a, b),
            })
    }

    fn substitute(v: &SymValue, vals: &[u64]) -> SymValue {
        match v.expr() {
            Expr::Const(_) => v.clone(),
            Expr::Var(var) => match var.prov {
                Provenance::Parameter(i) => SymValue::from_u64(vals[i]),
                _ => v.clone(),
            },
            Expr::Op(k, args) => SymValue::op(*k, args.iter().map(|a| substitute(a, vals)).collect()),
        }
    }

    fn substitute_constraint(c: &Constraint, vals: &[u64]) -> Constraint {
        Constraint::new(c.relation, substitute(&c.lhs, vals), substitute(&c.rhs, vals))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn contradiction_law(base in prop::collection::vec(arb_constraint(), 0..5), c in arb_constraint()) {
            let mut s = set_of(&base);
            s.push(c.clone(), 0, None);
            s.push(c.negate(), 0, None);
            prop_assert_eq!(solve(&s).unwrap(), SolveOutcome::Unsat);
        }

        #[test]
        fn contradiction_law_in_the_solver(base in prop::collection::vec(arb_constraint(), 0..3), c in arb_constraint()) {
            let mut live: Vec<&Constraint> = base.iter().collect();
            let neg = c.negate();
            live.push(&c);
            live.push(&neg);
            prop_assert_eq!(blast::check(&live, &SolverConfig::default()).unwrap(), SolveOutcome::Unsat);
        }

        #[test]
        fn solver_agrees_with_concrete_evaluation(c in arb_constraint(), vals in prop::collection::vec(any::<u64>(), 4)) {
            let truth = substitute_constraint(&c, &vals).constant_truth().unwrap();
            let mut s = set_of(&[c]);
            for (i, v) in vals.iter().enumerate() {
                s.push(Constraint::eq(var(i, "v"), SymValue::from_u64(*v)), 0, None);
            }
            let expected = if truth { SolveOutcome::Sat } else { SolveOutcome::Unsat };
            prop_assert_eq!(solve(&s).unwrap(), expected);
        }

        #[test]
        fn monotone(base in prop::collection::vec(arb_constraint(), 0..5), extra in arb_constraint()) {
            let s = set_of(&base);
            let bigger = s.with(extra);
            if solve(&bigger).unwrap() == SolveOutcome::Sat {
                prop_assert_eq!(solve(&s).unwrap(), SolveOutcome::Sat);
            }
        }
    }
}
