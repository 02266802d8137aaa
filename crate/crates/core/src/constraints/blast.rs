//! Bit-blasting of 256-bit constraints into CNF for the SAT core.
//!
//! Operators without a cheap circuit (symbolic MUL/DIV/MOD/EXP, ...) become
//! uninterpreted functions tied together with Ackermann constraints. SHA3
//! applications are uninterpreted and injective: two hashes are equal iff
//! their argument lists are.

use super::{Constraint, ConstraintError, Relation, SolveOutcome, SolverConfig};
use crate::symexec::value::{Expr, OpKind, Provenance, SymValue, Var};
use crate::U256;
use batsat::{lbool, Callbacks, Lit, Solver, SolverInterface, SolverOpts};
use std::collections::HashMap;
use std::time::Instant;

const W: usize = 256;

struct Deadline(Instant);

impl Callbacks for Deadline {
    fn stop(&self) -> bool {
        Instant::now() >= self.0
    }
}

type Bits = Vec<Lit>;

struct Blaster {
    sat: Solver<Deadline>,
    t: Lit,
    terms: HashMap<SymValue, Bits>,
    vars: HashMap<Var, Bits>,
    /// (kind, argument bits, result bits) of uninterpreted applications.
    apps: Vec<(OpKind, Vec<Bits>, Bits)>,
    /// Storage reads: (slot term, value bits).
    storage: Vec<(SymValue, Bits)>,
    and_gates: HashMap<(Lit, Lit), Lit>,
    xor_gates: HashMap<(Lit, Lit), Lit>,
    /// Axioms `premise -> conclusion`, added to the solver only once a model
    /// violates them.
    lazy: Vec<(Lit, Lit)>,
}

impl Blaster {
    fn new(deadline: Instant) -> Self {
        let mut sat = Solver::new(SolverOpts::default(), Deadline(deadline));
        let v = sat.new_var_default();
        let t = Lit::new(v, true);
        sat.add_clause_reuse(&mut vec![t]);
        Blaster { sat, t, terms: HashMap::new(), vars: HashMap::new(), apps: Vec::new(), storage: Vec::new(), and_gates: HashMap::new(), xor_gates: HashMap::new(), lazy: Vec::new() }
    }

    fn f(&self) -> Lit {
        !self.t
    }

    fn fresh(&mut self) -> Lit {
        let v = self.sat.new_var_default();
        Lit::new(v, true)
    }

    fn fresh_bits(&mut self) -> Bits {
        (0..W).map(|_| self.fresh()).collect()
    }

    fn clause(&mut self, lits: &[Lit]) {
        let mut c = lits.to_vec();
        self.sat.add_clause_reuse(&mut c);
    }

    fn is_const(&self, l: Lit) -> Option<bool> {
        if l == self.t {
            Some(true)
        } else if l == !self.t {
            Some(false)
        } else {
            None
        }
    }

    fn and(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(false), _) | (_, Some(false)) => return self.f(),
            (Some(true), _) => return b,
            (_, Some(true)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if a == !b {
            return self.f();
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&g) = self.and_gates.get(&key) {
            return g;
        }
        let g = self.fresh();
        self.and_gates.insert(key, g);
        self.clause(&[!g, a]);
        self.clause(&[!g, b]);
        self.clause(&[g, !a, !b]);
        g
    }

    fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.is_const(a), self.is_const(b)) {
            (Some(x), Some(y)) => return if x ^ y { self.t } else { self.f() },
            (Some(false), _) => return b,
            (Some(true), _) => return !b,
            (_, Some(false)) => return a,
            (_, Some(true)) => return !a,
            _ => {}
        }
        if a == b {
            return self.f();
        }
        if a == !b {
            return self.t;
        }
        // canonical form: both inputs positive, output polarity adjusted
        let flip = a.sign() != b.sign();
        let (pa, pb) = (a.apply_sign(a.sign()), b.apply_sign(b.sign()));
        let key = if pa < pb { (pa, pb) } else { (pb, pa) };
        if let Some(&g) = self.xor_gates.get(&key) {
            return g.apply_sign(!flip);
        }
        let (a, b) = key;
        let g = self.fresh();
        self.xor_gates.insert(key, g);
        self.clause(&[!g, a, b]);
        self.clause(&[!g, !a, !b]);
        self.clause(&[g, !a, b]);
        self.clause(&[g, a, !b]);
        g.apply_sign(!flip)
    }

    /// `s ? a : b`
    fn mux(&mut self, s: Lit, a: Lit, b: Lit) -> Lit {
        match self.is_const(s) {
            Some(true) => return a,
            Some(false) => return b,
            None => {}
        }
        if a == b {
            return a;
        }
        let x = self.and(s, a);
        let y = self.and(!s, b);
        self.or(x, y)
    }

    fn and_all(&mut self, lits: &[Lit]) -> Lit {
        let mut acc = self.t;
        for &l in lits {
            acc = self.and(acc, l);
            if acc == self.f() {
                break;
            }
        }
        acc
    }

    fn const_bits(&self, v: U256) -> Bits {
        (0..W).map(|i| if v.bit(i) { self.t } else { self.f() }).collect()
    }

    fn bool_word(&self, l: Lit) -> Bits {
        let mut out = vec![self.f(); W];
        out[0] = l;
        out
    }

    /// Sum bits and the final carry of `a + b + cin`.
    fn adder(&mut self, a: &[Lit], b: &[Lit], cin: Lit) -> (Bits, Lit) {
        let mut carry = cin;
        let mut out = Vec::with_capacity(W);
        for i in 0..W {
            let axb = self.xor(a[i], b[i]);
            out.push(self.xor(axb, carry));
            let g = self.and(a[i], b[i]);
            let p = self.and(axb, carry);
            carry = self.or(g, p);
        }
        (out, carry)
    }

    fn add(&mut self, a: &[Lit], b: &[Lit]) -> Bits {
        let f = self.f();
        self.adder(a, b, f).0
    }

    fn sub(&mut self, a: &[Lit], b: &[Lit]) -> Bits {
        let nb: Bits = b.iter().map(|&l| !l).collect();
        let t = self.t;
        self.adder(a, &nb, t).0
    }

    /// `a <u b`: no carry out of `a + !b + 1` means a borrow.
    fn ult(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let nb: Bits = b.iter().map(|&l| !l).collect();
        let t = self.t;
        !self.adder(a, &nb, t).1
    }

    fn slt(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let (sa, sb) = (a[W - 1], b[W - 1]);
        let differ = self.xor(sa, sb);
        let u = self.ult(a, b);
        self.mux(differ, sa, u)
    }

    fn eq(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let mut same = Vec::with_capacity(W);
        for i in 0..W {
            let x = self.xor(a[i], b[i]);
            if x == self.t {
                return self.f();
            }
            same.push(!x);
        }
        self.and_all(&same)
    }

    fn is_zero(&mut self, a: &[Lit]) -> Lit {
        let inv: Bits = a.iter().map(|&l| !l).collect();
        self.and_all(&inv)
    }

    fn shift_const(&self, v: &[Lit], by: usize, left: bool, fill: Lit) -> Bits {
        (0..W)
            .map(|i| {
                let src = if left { i.checked_sub(by) } else { (i + by < W).then_some(i + by) };
                src.map_or(fill, |s| v[s])
            })
            .collect()
    }

    fn shift(&mut self, amount: &[Lit], v: &[Lit], left: bool, arithmetic: bool) -> Bits {
        let fill = if arithmetic { v[W - 1] } else { self.f() };
        if let Some(c) = self.const_value(amount) {
            return if c >= U256::from(W) {
                vec![fill; W]
            } else {
                self.shift_const(v, c.to::<usize>(), left, fill)
            };
        }
        let mut cur: Bits = v.to_vec();
        for (stage, &bit) in amount.iter().enumerate().take(8) {
            let shifted = self.shift_const(&cur, 1 << stage, left, fill);
            cur = (0..W).map(|i| self.mux(bit, shifted[i], cur[i])).collect();
        }
        let high: Vec<Lit> = amount[8..].to_vec();
        let any_high = {
            let none = self.is_zero(&high);
            !none
        };
        (0..W).map(|i| self.mux(any_high, fill, cur[i])).collect()
    }

    fn const_value(&self, bits: &[Lit]) -> Option<U256> {
        let mut v = U256::ZERO;
        for (i, &l) in bits.iter().enumerate() {
            match self.is_const(l)? {
                true => v.set_bit(i, true),
                false => {}
            }
        }
        Some(v)
    }

    fn mul_const(&mut self, a: &[Lit], c: U256) -> Bits {
        let mut acc = self.const_bits(U256::ZERO);
        let f = self.f();
        for i in 0..W {
            if c.bit(i) {
                let shifted = self.shift_const(a, i, true, f);
                acc = self.add(&acc, &shifted);
            }
        }
        acc
    }

    fn uninterpreted(&mut self, kind: OpKind, args: Vec<Bits>) -> Bits {
        let out = self.fresh_bits();
        self.apps.push((kind, args, out.clone()));
        out
    }

    fn var_bits(&mut self, v: &Var) -> Bits {
        if let Some(b) = self.vars.get(v) {
            return b.clone();
        }
        let b = self.fresh_bits();
        self.vars.insert(v.clone(), b.clone());
        if let Provenance::StorageDirect(slot) | Provenance::StorageMapping(slot) = &v.prov {
            self.storage.push((slot.clone(), b.clone()));
        }
        b
    }

    fn term(&mut self, v: &SymValue) -> Bits {
        if let Some(b) = self.terms.get(v) {
            return b.clone();
        }
        let bits = match v.expr() {
            Expr::Const(c) => self.const_bits(*c),
            Expr::Var(var) => self.var_bits(var),
            Expr::Op(kind, args) => {
                let a: Vec<Bits> = args.iter().map(|x| self.term(x)).collect();
                self.op(*kind, a)
            }
        };
        self.terms.insert(v.clone(), bits.clone());
        bits
    }

    fn op(&mut self, kind: OpKind, a: Vec<Bits>) -> Bits {
        use OpKind::*;
        match kind {
            Add => self.add(&a[0], &a[1]),
            Sub => self.sub(&a[0], &a[1]),
            Mul => {
                let consts = (self.const_value(&a[0]), self.const_value(&a[1]));
                match consts {
                    (_, Some(c)) if c.count_ones() <= 32 => self.mul_const(&a[0], c),
                    (Some(c), _) if c.count_ones() <= 32 => self.mul_const(&a[1], c),
                    _ => self.uninterpreted(kind, a),
                }
            }
            And => (0..W).map(|i| self.and(a[0][i], a[1][i])).collect(),
            Or => (0..W).map(|i| self.or(a[0][i], a[1][i])).collect(),
            Xor => (0..W).map(|i| self.xor(a[0][i], a[1][i])).collect(),
            Not => a[0].iter().map(|&l| !l).collect(),
            Lt => {
                let l = self.ult(&a[0], &a[1]);
                self.bool_word(l)
            }
            Gt => {
                let l = self.ult(&a[1], &a[0]);
                self.bool_word(l)
            }
            Slt => {
                let l = self.slt(&a[0], &a[1]);
                self.bool_word(l)
            }
            Sgt => {
                let l = self.slt(&a[1], &a[0]);
                self.bool_word(l)
            }
            Eq => {
                let l = self.eq(&a[0], &a[1]);
                self.bool_word(l)
            }
            IsZero => {
                let l = self.is_zero(&a[0]);
                self.bool_word(l)
            }
            Shl => self.shift(&a[0], &a[1], true, false),
            Shr => self.shift(&a[0], &a[1], false, false),
            Sar => self.shift(&a[0], &a[1], false, true),
            Byte => match self.const_value(&a[0]) {
                Some(i) if i < U256::from(32u8) => {
                    let i = i.to::<usize>();
                    let lo = (31 - i) * 8;
                    let f = self.f();
                    (0..W).map(|k| if k < 8 { a[1][lo + k] } else { f }).collect()
                }
                Some(_) => self.const_bits(U256::ZERO),
                None => self.uninterpreted(kind, a),
            },
            SignExtend => match self.const_value(&a[0]) {
                Some(b) if b < U256::from(31u8) => {
                    let top = b.to::<usize>() * 8 + 7;
                    let sign = a[1][top];
                    (0..W).map(|k| if k <= top { a[1][k] } else { sign }).collect()
                }
                Some(_) => a[1].clone(),
                None => self.uninterpreted(kind, a),
            },
            Div | SDiv | Mod | SMod | AddMod | MulMod | Exp | Sha3 => self.uninterpreted(kind, a),
        }
    }

    fn assert_constraint(&mut self, c: &Constraint) {
        let l = self.term(&c.lhs);
        let lit = match c.relation {
            Relation::Nonzero => !self.is_zero(&l),
            Relation::Zero => self.is_zero(&l),
            rel => {
                let r = self.term(&c.rhs);
                match rel {
                    Relation::Eq => self.eq(&l, &r),
                    Relation::Neq => !self.eq(&l, &r),
                    Relation::Ult => self.ult(&l, &r),
                    Relation::Ugt => self.ult(&r, &l),
                    Relation::Ule => !self.ult(&r, &l),
                    Relation::Uge => !self.ult(&l, &r),
                    Relation::Slt => self.slt(&l, &r),
                    Relation::Sgt => self.slt(&r, &l),
                    Relation::Sle => !self.slt(&r, &l),
                    Relation::Sge => !self.slt(&l, &r),
                    Relation::Nonzero | Relation::Zero => unreachable!(),
                }
            }
        };
        self.clause(&[lit]);
    }

    /// Congruence for uninterpreted functions plus injectivity for SHA3.
    fn add_function_axioms(&mut self) {
        let apps = std::mem::take(&mut self.apps);
        for i in 0..apps.len() {
            for j in i + 1..apps.len() {
                let (ka, aa, ra) = &apps[i];
                let (kb, ab, rb) = &apps[j];
                if ka != kb {
                    continue;
                }
                if aa.len() != ab.len() {
                    if *ka == OpKind::Sha3 {
                        let same = self.eq(ra, rb);
                        self.clause(&[!same]);
                    }
                    continue;
                }
                let mut arg_eqs = Vec::with_capacity(aa.len());
                for k in 0..aa.len() {
                    arg_eqs.push(self.eq(&aa[k], &ab[k]));
                }
                let args_same = self.and_all(&arg_eqs);
                let res_same = self.eq(ra, rb);
                self.implies(args_same, res_same);
                if *ka == OpKind::Sha3 {
                    self.implies(res_same, args_same);
                }
            }
        }
        self.apps = apps;
    }

    fn implies(&mut self, premise: Lit, conclusion: Lit) {
        if premise != self.f() && conclusion != self.t {
            self.lazy.push((premise, conclusion));
        }
    }

    /// Solves, then adds the lazy axioms the model breaks and solves again
    /// until none is broken.
    fn solve(&mut self) -> lbool {
        loop {
            let r = self.sat.solve_limited(&[]);
            if r != lbool::TRUE {
                return r;
            }
            let value = |sat: &Solver<Deadline>, l: Lit| SolverInterface::value_lit(sat, l);
            let (broken, kept): (Vec<(Lit, Lit)>, Vec<(Lit, Lit)>) = self
                .lazy
                .iter()
                .partition(|(p, c)| value(&self.sat, *p) == lbool::TRUE && value(&self.sat, *c) == lbool::FALSE);
            if broken.is_empty() {
                return r;
            }
            self.lazy = kept;
            for (p, c) in broken {
                self.clause(&[!p, c]);
            }
            if !self.sat.is_ok() {
                return lbool::FALSE;
            }
        }
    }

    /// Slot equality, using SHA3 injectivity to compare hashed slots by
    /// their arguments instead of blasting the hashes.
    fn slot_eq(&mut self, a: &SymValue, b: &SymValue) -> Lit {
        if a == b {
            return !self.f();
        }
        match (a.as_op(), b.as_op()) {
            (Some((OpKind::Sha3, x)), Some((OpKind::Sha3, y))) => {
                if x.len() != y.len() {
                    return self.f();
                }
                let eqs: Vec<Lit> = x.iter().zip(y).map(|(p, q)| self.slot_eq(p, q)).collect();
                self.and_all(&eqs)
            }
            _ => {
                let (ta, tb) = (self.term(a), self.term(b));
                self.eq(&ta, &tb)
            }
        }
    }

    fn add_storage_axioms(&mut self) {
        let reads = std::mem::take(&mut self.storage);
        for i in 0..reads.len() {
            for j in i + 1..reads.len() {
                let slot_same = self.slot_eq(&reads[i].0, &reads[j].0);
                if slot_same == self.f() {
                    continue;
                }
                let value_same = self.eq(&reads[i].1, &reads[j].1);
                self.implies(slot_same, value_same);
            }
        }
    }
}

pub(super) fn check(constraints: &[&Constraint], config: &SolverConfig) -> Result<SolveOutcome, ConstraintError> {
    let deadline = Instant::now() + config.timeout;
    let mut b = Blaster::new(deadline);
    for c in constraints {
        b.assert_constraint(c);
        if Instant::now() >= deadline {
            return Ok(SolveOutcome::Unknown);
        }
    }
    if config.storage_congruence {
        // blasting slot terms may add SHA3 applications, so this goes first
        b.add_storage_axioms();
    }
    b.add_function_axioms();
    if !b.sat.is_ok() {
        return Ok(SolveOutcome::Unsat);
    }
    let r = b.solve();
    Ok(if r == lbool::TRUE {
        SolveOutcome::Sat
    } else if r == lbool::FALSE {
        SolveOutcome::Unsat
    } else {
        SolveOutcome::Unknown
    })
}
