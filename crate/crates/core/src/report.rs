//! Batch driver, JSON report schema and labeled-corpus scoring.

use crate::ast::{self, FunctionInfo};
use crate::constraints::SolverConfig;
use crate::detectors::{analyze_contract, Confidence, DefectType, DetectorConfig, Finding};
use crate::disasm::build_cfg;
use crate::ingestion::{load_compilations, CompilationUnit};
use crate::symexec::{summarize, ExplorationBudget, Explorer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub timeout_seconds: u64,
    pub loop_bound: u32,
    pub max_steps: u64,
    pub max_paths: usize,
    pub solver_query_seconds: u64,
    pub enabled_detectors: BTreeSet<DefectType>,
    pub output_format: OutputFormat,
    /// Analyze only functions that can reach a `Transfer` emission.
    pub prune: bool,
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            timeout_seconds: 600,
            loop_bound: 3,
            max_steps: 100_000,
            max_paths: 5_000,
            solver_query_seconds: 10,
            enabled_detectors: DefectType::ALL.into_iter().collect(),
            output_format: OutputFormat::Text,
            prune: true,
            jobs: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("no input paths given")]
    NoInputs,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.inputs.is_empty() {
            return Err(RunError::NoInputs);
        }
        let limits = [
            ("timeout", self.timeout_seconds),
            ("loop bound", self.loop_bound as u64),
            ("max steps", self.max_steps),
            ("max paths", self.max_paths as u64),
            ("solver timeout", self.solver_query_seconds),
        ];
        for (name, v) in limits {
            if v == 0 {
                return Err(RunError::NonPositive(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFinding {
    #[serde(rename = "type")]
    pub defect_type: DefectType,
    pub function: String,
    pub file: Option<String>,
    pub start: usize,
    pub length: usize,
    pub confidence: Confidence,
    pub witness: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    /// Exploration time per analyzed function.
    pub functions_ms: BTreeMap<String, u64>,
    pub detection_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathStats {
    pub steps: u64,
    pub records: usize,
    pub by_end_kind: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub schema_version: u32,
    pub contract: String,
    pub id: String,
    pub compiler_version: String,
    pub functions_total: usize,
    pub functions_analyzed: usize,
    pub findings: Vec<ReportFinding>,
    pub timings: Timings,
    pub timed_out: bool,
    pub paths: PathStats,
    pub diagnostics: Vec<String>,
    /// Set when the artifact could not be analyzed at all.
    pub error: Option<String>,
}

impl ContractReport {
    fn failed(id: String, error: String) -> Self {
        ContractReport {
            schema_version: SCHEMA_VERSION,
            contract: id.rsplit(':').next().unwrap_or_default().to_string(),
            id,
            compiler_version: String::new(),
            functions_total: 0,
            functions_analyzed: 0,
            findings: Vec::new(),
            timings: Timings::default(),
            timed_out: false,
            paths: PathStats::default(),
            diagnostics: Vec::new(),
            error: Some(error),
        }
    }

    /// Findings as (type, function) pairs, which is what corpus labels hold.
    pub fn finding_keys(&self) -> BTreeSet<(DefectType, String)> {
        self.findings.iter().map(|f| (f.defect_type, f.function.clone())).collect()
    }
}

fn millis(d: Duration) -> u64 {
    d.as_millis() as u64
}

fn target_functions(unit: &CompilationUnit, prune: bool) -> Result<(usize, Vec<FunctionInfo>), ast::AstError> {
    let callable = ast::callable_functions(unit)?;
    let total = callable.len();
    let targets = if prune { ast::select_target_functions(unit)? } else { callable };
    Ok((total, targets.into_iter().filter(|f| f.selector.is_some()).collect()))
}

/// Explores the target functions of one contract and applies the detectors.
/// The wall-clock limit covers the whole contract.
pub fn analyze_unit(unit: &CompilationUnit, config: &RunConfig) -> ContractReport {
    let start = Instant::now();
    let deadline = start + Duration::from_secs(config.timeout_seconds);
    let mut report = ContractReport {
        schema_version: SCHEMA_VERSION,
        contract: unit.contract_name.clone(),
        id: unit.id(),
        compiler_version: unit.compiler_version.to_string(),
        functions_total: 0,
        functions_analyzed: 0,
        findings: Vec::new(),
        timings: Timings::default(),
        timed_out: false,
        paths: PathStats::default(),
        diagnostics: Vec::new(),
        error: None,
    };
    let (total, targets) = match target_functions(unit, config.prune) {
        Ok(t) => t,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.functions_total = total;
    let cfg = build_cfg(&unit.instructions);
    let binding = ast::find_owner_return_binding(unit);
    if binding.is_none() {
        report.diagnostics.push("no ownerOf return found; owner traces are empty".into());
    }
    let explorer = Explorer::new(unit, &cfg, binding.as_ref());
    let budget = ExplorationBudget {
        max_steps: config.max_steps,
        max_paths: config.max_paths,
        loop_bound: config.loop_bound,
        deadline: Some(deadline),
    };
    let mut records = Vec::new();
    for f in &targets {
        if Instant::now() >= deadline {
            report.timed_out = true;
            report.diagnostics.push(format!("{}: skipped after timeout", f.name));
            continue;
        }
        let t = Instant::now();
        match explorer.explore(f, &budget) {
            Ok(ex) => {
                report.functions_analyzed += 1;
                report.timed_out |= ex.timed_out;
                report.paths.steps += ex.steps;
                let exhausted = ex.records.iter().filter(|r| r.note.as_deref() == Some("step or path budget")).count();
                if exhausted > 0 {
                    report.diagnostics.push(format!("{}: {exhausted} paths cut by the step/path budget", f.name));
                }
                records.extend(ex.records);
            }
            Err(e) => report.diagnostics.push(format!("{}: {e}", f.name)),
        }
        report.timings.functions_ms.insert(f.name.clone(), millis(t.elapsed()));
    }
    report.paths.records = records.len();
    report.paths.by_end_kind = summarize(&records).into_iter().map(|(k, v)| (k.to_string(), v)).collect();

    let t = Instant::now();
    let detector_config = DetectorConfig {
        enabled: config.enabled_detectors.clone(),
        solver: SolverConfig { timeout: Duration::from_secs(config.solver_query_seconds), ..SolverConfig::default() },
        ..DetectorConfig::default()
    }
    .with_state_types(&ast::state_variable_types(unit));
    let findings = analyze_contract(&unit.contract_name, &targets, &records, &detector_config);
    report.findings = findings.iter().map(|f| report_finding(unit, f)).collect();
    report.timings.detection_ms = millis(t.elapsed());
    report.timings.total_ms = millis(start.elapsed());
    report
}

fn report_finding(unit: &CompilationUnit, f: &Finding) -> ReportFinding {
    ReportFinding {
        defect_type: f.defect_type,
        function: f.function.clone(),
        file: unit.source_name(f.src_span.file).map(str::to_string),
        start: f.src_span.start,
        length: f.src_span.length,
        confidence: f.confidence,
        witness: f.witness.clone(),
    }
}

/// Directories holding `.json` artifacts expand to those files; any other
/// directory is passed through as a loose compiler-output layout.
pub fn expand_inputs(inputs: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut jsons: Vec<PathBuf> = std::fs::read_dir(p)
                .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|q| q.extension().is_some_and(|x| x == "json")).collect())
                .unwrap_or_default();
            if !jsons.is_empty() {
                jsons.sort();
                out.extend(jsons);
                continue;
            }
        }
        out.push(p.clone());
    }
    out
}

fn analyze_path(path: &Path, config: &RunConfig) -> Vec<ContractReport> {
    match load_compilations(path) {
        Ok(units) => units.iter().map(|u| analyze_unit(u, config)).collect(),
        Err(e) => vec![ContractReport::failed(path.display().to_string(), e.to_string())],
    }
}

/// Analyzes every input on a bounded worker pool. Report order follows the
/// (expanded) input order regardless of scheduling.
pub fn run(config: &RunConfig) -> Result<Vec<ContractReport>, RunError> {
    config.validate()?;
    let inputs = expand_inputs(&config.inputs);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.jobs {
        builder = builder.num_threads(n.max(1));
    }
    let work = || inputs.par_iter().map(|p| analyze_path(p, config)).collect::<Vec<_>>();
    let nested = match builder.build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    };
    Ok(nested.into_iter().flatten().collect())
}

pub fn render_text(reports: &[ContractReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{} (solc {})", r.id, r.compiler_version);
        if let Some(e) = &r.error {
            let _ = writeln!(out, "  error: {e}");
            continue;
        }
        let _ = writeln!(
            out,
            "  functions analyzed: {}/{}, paths: {}, {} ms{}",
            r.functions_analyzed,
            r.functions_total,
            r.paths.records,
            r.timings.total_ms,
            if r.timed_out { ", TIMED OUT" } else { "" }
        );
        if r.findings.is_empty() {
            let _ = writeln!(out, "  no findings");
        }
        for f in &r.findings {
            let _ = writeln!(
                out,
                "  [{}] {} in {} at {}:{} ({} confidence)",
                f.defect_type.code(),
                f.defect_type,
                f.function,
                f.file.as_deref().unwrap_or("?"),
                f.start,
                match f.confidence {
                    Confidence::High => "high",
                    Confidence::Low => "low",
                }
            );
            for w in &f.witness {
                let _ = writeln!(out, "      {w}");
            }
        }
        for d in &r.diagnostics {
            let _ = writeln!(out, "  note: {d}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFinding {
    #[serde(rename = "type")]
    pub defect_type: DefectType,
    pub function: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusLabel {
    /// Matches a report's `id`, its contract name, or its artifact file stem.
    pub contract: String,
    #[serde(default)]
    pub expected: Vec<ExpectedFinding>,
    #[serde(default)]
    pub notes: String,
}

impl CorpusLabel {
    fn matches(&self, r: &ContractReport) -> bool {
        if self.contract == r.id || self.contract == r.contract {
            return true;
        }
        let artifact = r.id.rsplit_once(':').map_or(r.id.as_str(), |(a, _)| a);
        Path::new(artifact).file_stem().is_some_and(|s| s.to_string_lossy() == self.contract)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Score {
    /// `TP / (TP + FP)` in percent; undefined without any finding.
    pub fn precision(&self) -> Option<f64> {
        let flagged = self.tp + self.fp;
        (flagged > 0).then(|| self.tp as f64 * 100.0 / flagged as f64)
    }

    fn add(&mut self, other: &Score) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_type: BTreeMap<DefectType, Score>,
    pub overall: Score,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no label for contract {0}")]
    UnlabeledContract(String),
}

pub fn format_precision(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}%"))
}

/// Scores reports against labels: a finding is a true positive when its
/// (type, function) pair is labeled, a false positive otherwise; labeled
/// pairs without a finding are false negatives.
pub fn evaluate_corpus(labels: &[CorpusLabel], reports: &[ContractReport]) -> Result<Evaluation, EvalError> {
    let mut per_type: BTreeMap<DefectType, Score> = DefectType::ALL.into_iter().map(|d| (d, Score::default())).collect();
    for r in reports {
        let label = labels.iter().find(|l| l.matches(r)).ok_or_else(|| EvalError::UnlabeledContract(r.id.clone()))?;
        let expected: BTreeSet<(DefectType, String)> = label.expected.iter().map(|e| (e.defect_type, e.function.clone())).collect();
        let found = r.finding_keys();
        for key in &found {
            let s = per_type.get_mut(&key.0).expect("all types present");
            if expected.contains(key) {
                s.tp += 1;
            } else {
                s.fp += 1;
            }
        }
        for key in expected.difference(&found) {
            per_type.get_mut(&key.0).expect("all types present").fn_ += 1;
        }
    }
    let mut overall = Score::default();
    for s in per_type.values() {
        overall.add(s);
    }
    Ok(Evaluation { per_type, overall })
}

pub fn render_evaluation(e: &Evaluation) -> String {
    let mut out = String::from("type  TP  FP  FN  precision\n");
    for (t, s) in &e.per_type {
        let _ = writeln!(out, "{:<4} {:>3} {:>3} {:>3}  {}", t.code(), s.tp, s.fp, s.fn_, format_precision(s.precision()));
    }
    let o = &e.overall;
    let _ = writeln!(out, "all  {:>3} {:>3} {:>3}  {}", o.tp, o.fp, o.fn_, format_precision(o.precision()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(id: &str, findings: &[(DefectType, &str)]) -> ContractReport {
        let mut r = ContractReport::failed(id.to_string(), String::new());
        r.error = None;
        r.findings = findings
            .iter()
            .map(|(t, f)| ReportFinding {
                defect_type: *t,
                function: f.to_string(),
                file: None,
                start: 0,
                length: 0,
                confidence: Confidence::High,
                witness: Vec::new(),
            })
            .collect();
        r
    }

    #[test]
    fn precision_edge_cases() {
        assert_eq!(Score::default().precision(), None);
        assert_eq!(format_precision(None), "n/a");
        assert_eq!(Score { tp: 1, fp: 0, fn_: 0 }.precision(), Some(100.0));
    }

    #[test]
    fn scoring() {
        let reports = vec![report_with("a.json:A", &[(DefectType::PrivilegedAddress, "f"), (DefectType::UnrestrictedFrom, "g")])];
        let labels = vec![CorpusLabel {
            contract: "A".into(),
            expected: vec![
                ExpectedFinding { defect_type: DefectType::PrivilegedAddress, function: "f".into() },
                ExpectedFinding { defect_type: DefectType::EmptyTransferEvent, function: "h".into() },
            ],
            notes: String::new(),
        }];
        let e = evaluate_corpus(&labels, &reports).unwrap();
        assert_eq!(e.per_type[&DefectType::PrivilegedAddress], Score { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(e.per_type[&DefectType::UnrestrictedFrom], Score { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(e.per_type[&DefectType::EmptyTransferEvent], Score { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(e.overall, Score { tp: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn unlabeled_contract_is_an_error() {
        let reports = vec![report_with("x.json:X", &[])];
        assert_eq!(evaluate_corpus(&[], &reports), Err(EvalError::UnlabeledContract("x.json:X".into())));
    }

    #[test]
    fn label_matches_file_stem() {
        let r = report_with("dir/fig1-0.8.21.json:Test", &[]);
        let l = CorpusLabel { contract: "fig1-0.8.21".into(), expected: vec![], notes: String::new() };
        assert!(l.matches(&r));
    }

    #[test]
    fn config_validation() {
        assert_eq!(RunConfig::default().validate(), Err(RunError::NoInputs));
        let c = RunConfig { inputs: vec!["x".into()], loop_bound: 0, ..RunConfig::default() };
        assert_eq!(c.validate(), Err(RunError::NonPositive("loop bound")));
    }
}
