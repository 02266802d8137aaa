#![allow(dead_code)]

pub mod oracle;

use proptest::prelude::*;
use sleepscan::ast::{self, FunctionInfo};
use sleepscan::constraints::{Constraint, Relation};
use sleepscan::detectors::DetectorConfig;
use sleepscan::disasm::build_cfg;
use sleepscan::ingestion::{load_compilation, CompilationUnit, JumpKind, SourceMapEntry};
use sleepscan::report::{analyze_unit, ContractReport, RunConfig};
use sleepscan::symexec::{ExplorationBudget, Explorer, OpKind, PathRecord, Provenance, SymValue};
use std::path::{Path, PathBuf};

/// Artifact stem and the exact (code, function) findings it must produce.
pub const EXPECTED: &[(&str, &[(&str, &str)])] = &[
    ("fig1_privileged_address-0.8.21", &[("PA", "transferFrom")]),
    ("fig2_unrestricted_from-0.8.21", &[("UF", "transferFrom")]),
    ("fig2_unrestricted_from_legacy-0.4.24", &[("UF", "transferFrom")]),
    ("fig2_unrestricted_from_legacy-0.5.17", &[("UF", "transferFrom")]),
    ("fig3_owner_inconsistency-0.8.21", &[("OI", "transferFrom")]),
    ("fig4_empty_transfer_event-0.8.21", &[("ETE", "emitTransfers")]),
    ("composed_fig2_fig4-0.8.21", &[("ETE", "emitTransfers"), ("UF", "transferFrom")]),
    ("fp_pause_guard-0.8.21", &[("PA", "transferFrom")]),
    ("fp_assigned_from-0.8.21", &[("UF", "transferFrom")]),
    ("fp_remote_transfer-0.8.21", &[("ETE", "transferFrom")]),
    ("fn_double_emit_mint-0.8.21", &[]),
    ("fn_log1_transfer-0.4.24", &[]),
    ("clean_erc721-0.8.21", &[]),
    ("clean_erc721_legacy-0.4.24", &[]),
    ("clean_erc721_legacy-0.5.17", &[]),
    ("renamed_owner-0.8.21", &[]),
    ("approval_only-0.8.21", &[]),
    ("emit_then_store-0.8.21", &[]),
    ("pruning_wide-0.8.21", &[]),
];

pub fn expected_for(stem: &str) -> Vec<(String, String)> {
    let (_, e) = EXPECTED.iter().find(|(s, _)| *s == stem).unwrap_or_else(|| panic!("no expectation for {stem}"));
    let mut v: Vec<(String, String)> = e.iter().map(|(c, f)| (c.to_string(), f.to_string())).collect();
    v.sort();
    v
}

pub fn observed(r: &ContractReport) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = r.findings.iter().map(|f| (f.defect_type.code().to_string(), f.function.clone())).collect();
    v.sort();
    v
}

/// Path records of every pruned target function, with the detector
/// configuration the report pipeline would use.
pub fn records(u: &CompilationUnit) -> (Vec<FunctionInfo>, Vec<PathRecord>, DetectorConfig) {
    let targets: Vec<FunctionInfo> = ast::select_target_functions(u).unwrap().into_iter().filter(|f| f.selector.is_some()).collect();
    let cfg = build_cfg(&u.instructions);
    let binding = ast::find_owner_return_binding(u);
    let explorer = Explorer::new(u, &cfg, binding.as_ref());
    let mut out = Vec::new();
    for f in &targets {
        if let Ok(ex) = explorer.explore(f, &ExplorationBudget::default()) {
            out.extend(ex.records);
        }
    }
    let config = DetectorConfig::default().with_state_types(&ast::state_variable_types(u));
    (targets, out, config)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().unwrap().to_string_lossy().into_owned()
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn artifact(stem: &str) -> PathBuf {
    fixtures_dir().join("artifacts").join(format!("{stem}.json"))
}

pub fn all_artifacts() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(fixtures_dir().join("artifacts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}

pub fn unit(stem: &str) -> CompilationUnit {
    load_compilation(&artifact(stem)).unwrap_or_else(|e| panic!("{stem}: {e}"))
}

pub fn analyze(stem: &str) -> ContractReport {
    analyze_unit(&unit(stem), &RunConfig::default())
}

pub fn codes(r: &ContractReport) -> Vec<&'static str> {
    r.findings.iter().map(|f| f.defect_type.code()).collect()
}

pub fn var(i: usize) -> SymValue {
    SymValue::var(Provenance::Parameter(i), format!("v{i}"))
}

fn arb_leaf() -> impl Strategy<Value = SymValue> {
    prop_oneof![(0usize..4).prop_map(var), (0u64..20).prop_map(SymValue::from_u64)]
}

pub fn arb_expr() -> impl Strategy<Value = SymValue> {
    arb_leaf().prop_recursive(3, 12, 2, |inner| {
        (
            prop::sample::select(vec![OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::And, OpKind::Or, OpKind::Xor, OpKind::Lt, OpKind::Eq, OpKind::Shl]),
            inner.clone(),
            inner,
        )
            .prop_map(|(k, a, b)| SymValue::op2(k, a, b))
    })
}

pub fn arb_constraint() -> impl Strategy<Value = Constraint> {
    (
        prop::sample::select(vec![
            Relation::Eq,
            Relation::Neq,
            Relation::Ult,
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

pub fn arb_source_map() -> impl Strategy<Value = Vec<SourceMapEntry>> {
    let one = (0i64..5000, 0i64..300, -1i64..4, 0u8..3, prop::option::of(0i64..3)).prop_map(|(s, l, f, j, m)| SourceMapEntry {
        start: s,
        length: l,
        file: f,
        jump: [JumpKind::Regular, JumpKind::IntoFunction, JumpKind::ReturnFromFunction][j as usize],
        modifier_depth: m,
    });
    prop::collection::vec((one, 0u8..4), 1..80).prop_map(|items| {
        let mut out: Vec<SourceMapEntry> = Vec::new();
        for (e, keep) in items {
            match out.last() {
                Some(prev) if keep == 0 => out.push(*prev),
                Some(prev) if keep == 1 => out.push(SourceMapEntry { length: e.length, ..*prev }),
                _ => out.push(e),
            }
        }
        // an optional field can only be omitted while every later one is too
        let mut seen = false;
        for e in out.iter_mut() {
            seen |= e.modifier_depth.is_some();
            if seen && e.modifier_depth.is_none() {
                e.modifier_depth = Some(0);
            }
        }
        out
    })
}
