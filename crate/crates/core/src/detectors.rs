//! The four sleepminting rules, applied to the path records of one contract.

use crate::ast::{FunctionInfo, Span};
use crate::constraints::{self, Constraint, ConstraintPattern, ConstraintSet, SolveOutcome, SolverConfig};
use crate::symexec::{EndKind, PathRecord, Provenance, SymValue};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectType {
    PrivilegedAddress,
    UnrestrictedFrom,
    OwnerInconsistency,
    EmptyTransferEvent,
}

impl DefectType {
    pub const ALL: [DefectType; 4] = [
        DefectType::PrivilegedAddress,
        DefectType::UnrestrictedFrom,
        DefectType::OwnerInconsistency,
        DefectType::EmptyTransferEvent,
    ];

    pub fn code(self) -> &'static str {
        match self {
            DefectType::PrivilegedAddress => "PA",
            DefectType::UnrestrictedFrom => "UF",
            DefectType::OwnerInconsistency => "OI",
            DefectType::EmptyTransferEvent => "ETE",
        }
    }
}

impl fmt::Display for DefectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for DefectType {
    type Err = String;

    /// Accepts the short code or the full name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        DefectType::ALL
            .into_iter()
            .find(|d| d.code().eq_ignore_ascii_case(t) || format!("{d:?}").eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown defect type `{s}` (expected PA, UF, OI or ETE)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub defect_type: DefectType,
    pub path_id: usize,
    pub witness: Vec<String>,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub defect_type: DefectType,
    pub contract: String,
    pub function: String,
    pub src_span: Span,
    pub witness: Vec<String>,
    pub path_id: usize,
    pub confidence: Confidence,
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub enabled: BTreeSet<DefectType>,
    /// State variables declared with an address (or contract) type.
    pub address_state_vars: Vec<String>,
    pub solver: SolverConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { enabled: DefectType::ALL.into_iter().collect(), address_state_vars: Vec::new(), solver: SolverConfig::default() }
    }
}

impl DetectorConfig {
    pub fn with_state_types(mut self, types: &HashMap<String, String>) -> Self {
        let mut names: Vec<String> = types
            .iter()
            .filter(|(_, t)| *t == "address" || t.starts_with("address ") || t.starts_with("contract "))
            .map(|(n, _)| n.clone())
            .collect();
        names.sort();
        self.address_state_vars = names;
        self
    }
}

fn feasible(set: &ConstraintSet, config: &DetectorConfig) -> bool {
    matches!(constraints::solve_with(set, &config.solver), Ok(SolveOutcome::Sat))
}

fn depends_on_call(v: &SymValue) -> bool {
    v.vars().iter().any(|var| matches!(var.prov, Provenance::FreshExternal { call: true, .. }))
}

fn constraints_depend_on_call(set: &ConstraintSet) -> bool {
    set.constraints().any(|c| depends_on_call(&c.lhs) || depends_on_call(&c.rhs))
}

fn distinct_owners(trace: &[SymValue]) -> usize {
    trace.iter().collect::<HashSet<_>>().len()
}

/// `caller == <address state variable>` on a feasible emitting path.
pub fn detect_privileged_address(rec: &PathRecord, config: &DetectorConfig) -> Option<Detection> {
    if rec.end_kind != EndKind::TransferEmission {
        return None;
    }
    let pattern = ConstraintPattern::caller_eq_storage_direct(config.address_state_vars.clone());
    let entry = constraints::find(&rec.constraints, &pattern)?;
    if !feasible(&rec.constraints, config) {
        return None;
    }
    let confidence = if constraints_depend_on_call(&rec.constraints) { Confidence::Low } else { Confidence::High };
    Some(Detection {
        defect_type: DefectType::PrivilegedAddress,
        path_id: rec.path_id,
        witness: vec![format!("{} (pc {})", entry.constraint, entry.pc)],
        confidence,
    })
}

/// Whether the latest owner can differ from `from` on this path.
fn owner_may_differ(rec: &PathRecord, config: &DetectorConfig) -> Option<(Constraint, Confidence)> {
    let owner = rec.owner_trace.last()?;
    let from = rec.from_param.as_ref()?;
    let query = Constraint::neq(owner.mask_address(), from.mask_address());
    let set = rec.constraints.with(query.clone());
    if !feasible(&set, config) {
        return None;
    }
    let tainted = depends_on_call(owner) || constraints_depend_on_call(&rec.constraints);
    Some((query, if tainted { Confidence::Low } else { Confidence::High }))
}

fn owner_witness(rec: &PathRecord, query: &Constraint) -> Vec<String> {
    let trace: Vec<String> = rec.owner_trace.iter().map(|o| o.to_string()).collect();
    vec![format!("owner trace: [{}]", trace.join(", ")), format!("satisfiable: {query}")]
}

/// Single owner value that the path never ties to `from`.
pub fn detect_unrestricted_from(rec: &PathRecord, config: &DetectorConfig) -> Option<Detection> {
    if rec.end_kind != EndKind::TransferEmission || distinct_owners(&rec.owner_trace) != 1 {
        return None;
    }
    let (query, confidence) = owner_may_differ(rec, config)?;
    Some(Detection {
        defect_type: DefectType::UnrestrictedFrom,
        path_id: rec.path_id,
        witness: owner_witness(rec, &query),
        confidence,
    })
}

/// The owner changed during the path, and the latest one is not tied to `from`.
pub fn detect_owner_inconsistency(rec: &PathRecord, config: &DetectorConfig) -> Option<Detection> {
    if rec.end_kind != EndKind::TransferEmission || distinct_owners(&rec.owner_trace) < 2 {
        return None;
    }
    let (query, confidence) = owner_may_differ(rec, config)?;
    Some(Detection {
        defect_type: DefectType::OwnerInconsistency,
        path_id: rec.path_id,
        witness: owner_witness(rec, &query),
        confidence,
    })
}

/// A `Transfer` emitted on a path that writes no storage before the emission
/// nor anywhere up to the end of the function.
pub fn detect_empty_transfer_event(recs: &[&PathRecord], config: &DetectorConfig) -> Option<Detection> {
    for e in recs.iter().filter(|r| r.end_kind == EndKind::TransferEmission && !r.sstore_mark) {
        let Some(id) = e.emission.as_ref().map(|em| em.id) else { continue };
        let exit = recs.iter().find(|x| {
            x.end_kind == EndKind::NormalExit && !x.sstore_mark && x.emission_ids.contains(&id) && feasible(&x.constraints, config)
        });
        if let Some(x) = exit {
            let at = e.emission.as_ref().map_or(0, |em| em.at_pc);
            return Some(Detection {
                defect_type: DefectType::EmptyTransferEvent,
                path_id: e.path_id,
                witness: vec![format!("Transfer at pc {at} with no storage write up to exit at pc {}", x.end_pc)],
                confidence: if e.external_call || x.external_call { Confidence::Low } else { Confidence::High },
            });
        }
    }
    None
}

/// Runs every enabled rule, keeps one finding per (type, function) and
/// orders them by source position.
pub fn analyze_contract(
    contract: &str,
    functions: &[FunctionInfo],
    records: &[PathRecord],
    config: &DetectorConfig,
) -> Vec<Finding> {
    let mut by_function: BTreeMap<&str, Vec<&PathRecord>> = BTreeMap::new();
    for r in records {
        by_function.entry(r.function.as_str()).or_default().push(r);
    }
    let on = |d: DefectType| config.enabled.contains(&d);
    let mut best: BTreeMap<(DefectType, &str), Detection> = BTreeMap::new();
    for (name, recs) in &by_function {
        let mut found: Vec<Detection> = Vec::new();
        for r in recs {
            if on(DefectType::PrivilegedAddress) {
                found.extend(detect_privileged_address(r, config));
            }
            if on(DefectType::UnrestrictedFrom) {
                found.extend(detect_unrestricted_from(r, config));
            }
            if on(DefectType::OwnerInconsistency) {
                found.extend(detect_owner_inconsistency(r, config));
            }
        }
        if on(DefectType::EmptyTransferEvent) {
            found.extend(detect_empty_transfer_event(recs, config));
        }
        for d in found {
            match best.get(&(d.defect_type, *name)) {
                Some(prev) if prev.confidence >= d.confidence => {}
                _ => {
                    best.insert((d.defect_type, name), d);
                }
            }
        }
    }
    let mut out: Vec<Finding> = best
        .into_iter()
        .map(|((_, name), d)| {
            let span = functions
                .iter()
                .find(|f| f.name == name)
                .map_or(Span { start: 0, length: 0, file: -1 }, |f| f.src_span);
            Finding {
                defect_type: d.defect_type,
                contract: contract.to_string(),
                function: name.to_string(),
                src_span: span,
                witness: d.witness,
                path_id: d.path_id,
                confidence: d.confidence,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.src_span.file, a.src_span.start, a.defect_type, &a.function).cmp(&(b.src_span.file, b.src_span.start, b.defect_type, &b.function))
    });
    out
}
