mod support;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use sha3::{Digest, Keccak256};
use sleepscan::constraints::{self, ConstraintSet, SolveOutcome};
use sleepscan::detectors::{detect_owner_inconsistency, detect_unrestricted_from, Confidence, DefectType};
use sleepscan::ingestion::{decode_source_map, encode_source_map};
use sleepscan::report::{analyze_unit, evaluate_corpus, ContractReport, CorpusLabel, ExpectedFinding, ReportFinding, RunConfig};
use sleepscan::symexec::run_straight_line;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};
use support::oracle::{arb_program, assemble, interpret, to_u256};
use support::{all_artifacts, analyze, expected_for, observed, records, stem, unit};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn classify(stems: &[&str]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for s in stems {
        let r = analyze(s);
        let got = observed(&r);
        let want = expected_for(s);
        ok &= got == want && r.error.is_none() && !r.timed_out;
        let shown: Vec<String> = got.iter().map(|(c, f)| format!("{c}:{f}")).collect();
        lines.push(format!("{s}=[{}]", shown.join(",")));
    }
    check(ok, lines.join(" "))
}

fn fixture_classification() -> Outcome {
    let started = Instant::now();
    let detail = classify(&[
        "fig1_privileged_address-0.8.21",
        "fig2_unrestricted_from-0.8.21",
        "fig3_owner_inconsistency-0.8.21",
        "fig4_empty_transfer_event-0.8.21",
        "clean_erc721-0.8.21",
        "clean_erc721_legacy-0.5.17",
    ]);
    let elapsed = started.elapsed();
    let timing = format!("{:.2}s total", elapsed.as_secs_f64());
    match detail {
        Ok(d) if elapsed < Duration::from_secs(60) => Ok(format!("{d} {timing}")),
        Ok(d) | Err(d) => Err(format!("{d} {timing}")),
    }
}

fn known_false_positives() -> Outcome {
    classify(&["fp_pause_guard-0.8.21", "fp_assigned_from-0.8.21", "fp_remote_transfer-0.8.21"])
}

fn known_false_negatives() -> Outcome {
    classify(&["fn_double_emit_mint-0.8.21", "fn_log1_transfer-0.4.24"])
}

fn synthetic_report(id: usize, defect_type: DefectType) -> ContractReport {
    ContractReport {
        schema_version: 1,
        contract: format!("C{id}"),
        id: format!("corpus/c{id}.json:C{id}"),
        compiler_version: "0.8.21".into(),
        functions_total: 1,
        functions_analyzed: 1,
        findings: vec![ReportFinding {
            defect_type,
            function: "transferFrom".into(),
            file: None,
            start: 0,
            length: 0,
            confidence: Confidence::High,
            witness: Vec::new(),
        }],
        timings: Default::default(),
        timed_out: false,
        paths: Default::default(),
        diagnostics: Vec::new(),
        error: None,
    }
}

fn precision_arithmetic() -> Outcome {
    let table = [
        (DefectType::PrivilegedAddress, 25, 7, 78.1),
        (DefectType::UnrestrictedFrom, 3, 2, 60.0),
        (DefectType::OwnerInconsistency, 10, 2, 83.3),
        (DefectType::EmptyTransferEvent, 63, 3, 95.5),
    ];
    let (mut reports, mut labels) = (Vec::new(), Vec::new());
    for (t, tp, fp, _) in table {
        for k in 0..tp + fp {
            let r = synthetic_report(reports.len(), t);
            let expected = if k < tp { vec![ExpectedFinding { defect_type: t, function: "transferFrom".into() }] } else { Vec::new() };
            labels.push(CorpusLabel { contract: r.contract.clone(), expected, notes: String::new() });
            reports.push(r);
        }
    }
    let e = evaluate_corpus(&labels, &reports).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (t, _, _, want) in table {
        let p = e.per_type[&t].precision().unwrap_or(f64::NAN);
        ok &= (p - want).abs() <= 0.05;
        parts.push(format!("{}={p:.1}", t.code()));
    }
    let overall = e.overall.precision().unwrap_or(f64::NAN);
    ok &= (overall - 87.8).abs() <= 0.05;
    parts.push(format!("overall={overall:.1}"));
    check(ok, parts.join(" "))
}

fn min_runtime(config: &RunConfig, stem: &str, runs: usize) -> (Duration, usize) {
    let u = unit(stem);
    let mut best = Duration::MAX;
    let mut analyzed = 0;
    for _ in 0..runs {
        let t = Instant::now();
        let r = analyze_unit(&u, config);
        best = best.min(t.elapsed());
        analyzed = r.functions_analyzed;
    }
    (best, analyzed)
}

fn pruning_effect() -> Outcome {
    let stem = "pruning_wide-0.8.21";
    let (pruned, n_pruned) = min_runtime(&RunConfig::default(), stem, 5);
    let (full, n_full) = min_runtime(&RunConfig { prune: false, ..RunConfig::default() }, stem, 5);
    let speedup = full.as_secs_f64() / pruned.as_secs_f64();
    check(
        n_pruned == 2 && n_full == 20 && speedup >= 5.0,
        format!("analyzed {n_pruned} vs {n_full}, {:.1}ms vs {:.1}ms, speedup {speedup:.1}x", pruned.as_secs_f64() * 1e3, full.as_secs_f64() * 1e3),
    )
}

fn version_compatibility() -> Outcome {
    let stems = ["fig2_unrestricted_from_legacy-0.4.24", "fig2_unrestricted_from_legacy-0.5.17", "fig2_unrestricted_from-0.8.21"];
    let push0 = unit(stems[2]).instructions.iter().any(|i| i.opcode == 0x5f);
    let legacy_push0 = stems[..2].iter().any(|s| unit(s).instructions.iter().any(|i| i.opcode == 0x5f));
    let detail = classify(&stems);
    let note = format!("PUSH0 in 0.8.21: {push0}, in legacy: {legacy_push0}");
    match detail {
        Ok(d) if push0 && !legacy_push0 => Ok(format!("{d} {note}")),
        Ok(d) | Err(d) => Err(format!("{d} {note}")),
    }
}

fn run_property<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<u32, String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map(|_| cases).map_err(|e| e.to_string())
}

fn engine_properties() -> Outcome {
    let differential = run_property(1000, arb_program(), |ops| {
        let expected: Vec<_> = interpret(&ops).iter().map(to_u256).collect();
        let (instrs, _) = assemble(&ops);
        let stack = run_straight_line(&instrs).ok_or_else(|| TestCaseError::fail("halted abnormally"))?;
        let got: Option<Vec<_>> = stack.iter().map(|v| v.eval_concrete()).collect();
        prop_assert_eq!(got, Some(expected), "{:?}", ops);
        Ok(())
    })?;
    let contradiction = run_property(
        200,
        (prop::collection::vec(support::arb_constraint(), 0..5), support::arb_constraint()),
        |(base, c)| {
            let mut s = ConstraintSet::new();
            for b in base {
                s.push(b, 0, None);
            }
            s.push(c.negate(), 0, None);
            s.push(c, 0, None);
            prop_assert_eq!(constraints::solve(&s).unwrap(), SolveOutcome::Unsat);
            Ok(())
        },
    )?;
    let round_trip = run_property(200, support::arb_source_map(), |map| {
        let text = encode_source_map(&map);
        prop_assert_eq!(decode_source_map(&text).unwrap(), map);
        Ok(())
    })?;
    let oracle: [u8; 32] = Keccak256::digest(b"Transfer(address,address,uint256)").into();
    let topic_ok = sleepscan::hash::transfer_topic() == oracle;
    check(
        topic_ok,
        format!("differential {differential} cases, contradiction {contradiction} sets, source maps {round_trip}, topic 0x{}", hex::encode(oracle)),
    )
}

fn mutual_exclusion() -> Outcome {
    let mut checked = 0;
    for p in all_artifacts() {
        let u = sleepscan::ingestion::load_compilation(&p).map_err(|e| e.to_string())?;
        let (_, recs, config) = records(&u);
        for r in &recs {
            if detect_unrestricted_from(r, &config).is_some() && detect_owner_inconsistency(r, &config).is_some() {
                return Err(format!("{} path {} yields both", stem(&p), r.path_id));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} path records"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("fixture classification", fixture_classification),
        ("known false positives", known_false_positives),
        ("known false negatives", known_false_negatives),
        ("precision arithmetic", precision_arithmetic),
        ("pruning effect", pruning_effect),
        ("version compatibility", version_compatibility),
        ("engine properties", engine_properties),
        ("owner rule exclusivity", mutual_exclusion),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("criterion {} PASS: {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} FAIL: {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
