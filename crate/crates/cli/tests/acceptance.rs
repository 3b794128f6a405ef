//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use graphtaint_cli::project::Project;
use graphtaint_core::dependency::{dependency_reasons, universally_sequentially_independent};
use graphtaint_core::dpo::{apply_inverse, classify_rule, RuleClass};
use graphtaint_core::iso::are_isomorphic;
use graphtaint_core::oracle::{compare_with_brute_force, find_indirect_flow, all_steps, steps_of};
use graphtaint_core::planner::{check_flow_coverage, check_role_coverage, generate_minimal_tests, TestPlan};
use graphtaint_core::taint::{apply_review, check_theorem_conditions, classify_sources_sinks, tainted_flow, TheoremVerdict};
use graphtaint_core::{InstanceGraph, Rule};
use graphtaint_dynamic::mock::FORBIDDEN;
use graphtaint_dynamic::protocol::{AuthScheme, GraphqlRequest};
use graphtaint_dynamic::runner::{HttpTransport, InProcessTransport, Verdict};
use graphtaint_dynamic::server::spawn;
use graphtaint_dynamic::{run_plan, Classification, FaultInjection, MockTarget, RunnerConfig, TestReport};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{Map, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn project_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../projects").join(name)
}

fn project(name: &str) -> Project {
    Project::load(&project_dir(name)).expect("project loads")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn plan_for(p: &Project) -> TestPlan {
    let roles = p.roles().unwrap();
    let policy = p.policy(&roles).unwrap();
    let flow = apply_review(&tainted_flow(&p.api().unwrap()).unwrap(), &p.ledger().unwrap()).unwrap();
    generate_minimal_tests(&flow, &p.rules, &roles, &policy, p.planner_options(false, None)).unwrap()
}

/// Role -> token, taken from the project's mock token table.
fn runner_config(p: &Project, endpoint: &str) -> RunnerConfig {
    let mut tokens = std::collections::BTreeMap::new();
    for (token, role) in p.mock_config().unwrap().tokens {
        tokens.entry(role).or_insert(token);
    }
    RunnerConfig::new(endpoint, tokens)
}

fn in_process(p: &Project, faults: Vec<FaultInjection>) -> InProcessTransport {
    let mut cfg = p.mock_config().unwrap();
    cfg.faults = faults;
    InProcessTransport {
        target: Arc::new(Mutex::new(MockTarget::new(p.rules.clone(), cfg).unwrap())),
    }
}

fn rule<'a>(rules: &'a [Rule], name: &str) -> &'a Rule {
    rules.iter().find(|r| r.name() == name).unwrap()
}

// ------------------------------------------------------------------ criteria

fn running_example_edges() -> Outcome {
    let out = std::env::temp_dir().join(format!("graphtaint-analysis-{}.json", std::process::id()));
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_graphtaint"))
        .args(["analyze", "--project"])
        .arg(project_dir("running-example"))
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let _ = std::fs::remove_file(&out);
    let got: BTreeSet<(String, String)> = doc["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["source"].as_str().unwrap().into(), e["sink"].as_str().unwrap().into()))
        .collect();
    let want: BTreeSet<(String, String)> = [
        ("createIssue", "updateIssue"),
        ("createIssue", "deleteIssue"),
        ("createProject", "getProject"),
        ("createRepo", "updateRepo"),
        ("createProject", "deleteProject"),
        ("createRepo", "createIssue"),
    ]
    .into_iter()
    .map(|(a, b)| (a.into(), b.into()))
    .collect();
    ensure(got == want, format!("edges {got:?}"))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("6 edges in {elapsed:.2?}"))
}

fn full_rhs_overlap() -> Outcome {
    let p = project("running-example");
    let create = rule(&p.rules, "createRepo");
    let reasons = dependency_reasons(create, rule(&p.rules, "updateRepo")).map_err(|e| e.to_string())?;
    let full: Vec<_> = reasons
        .iter()
        .filter(|r| r.span.source_nodes() == create.rhs().node_ids() && r.span.source_edges() == create.rhs().edge_ids())
        .collect();
    ensure(full.len() == 1, format!("{} full-RHS reasons among {}", full.len(), reasons.len()))?;
    Ok(format!("{} covers the whole right-hand side", full[0].id))
}

fn dangling_blind_spots() -> Outcome {
    let p = project("toy-dangling");
    let src = rule(&p.rules, "createIncidentT");
    let mut found = Vec::new();
    for (sink, middle) in [("deleteT", "deleteIncidentA"), ("createIncidentBPlus", "createIncidentB")] {
        let dr = dependency_reasons(src, rule(&p.rules, sink)).map_err(|e| e.to_string())?;
        ensure(dr.is_empty(), format!("DR(createIncidentT, {sink}) has {} reasons", dr.len()))?;
        let flow = find_indirect_flow(&p.rules, src.name(), sink, 3).ok_or(format!("no indirect flow to {sink}"))?;
        ensure(flow.rules[1] == middle, format!("unexpected witness {:?}", flow.rules))?;
        found.push(flow.rules.join(";"));
    }
    Ok(format!("both reason sets empty; witnesses {}", found.join(" and ")))
}

fn theorem_checker() -> Outcome {
    let p = project("running-example");
    let keep = ["createUser", "createRepo", "updateRepo", "createProject"];
    let rules: Vec<Rule> = p.rules.iter().filter(|r| keep.contains(&r.name())).cloned().collect();
    let indep = universally_sequentially_independent(rule(&rules, "createProject"), rule(&rules, "updateRepo"))
        .map_err(|e| e.to_string())?;
    ensure(indep, "(createProject, updateRepo) is not independent")?;
    let api = classify_sources_sinks(&rules, &p.tainted().unwrap()).map_err(|e| e.to_string())?;
    let check = check_theorem_conditions(&api, "createRepo", "updateRepo").map_err(|e| e.to_string())?;
    ensure(check.verdict != TheoremVerdict::Neither, "no condition holds for (createRepo, updateRepo)")?;
    Ok(format!("(createRepo, updateRepo) verdict {:?}", check.verdict))
}

fn oracle_equivalence() -> Outcome {
    let p = project("running-example");
    let start = Instant::now();
    let report = compare_with_brute_force(&p.rules, 3).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.agrees(), format!("disagreements: {:?}", report.disagreements))?;
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} hosts, {} sequences, 0 disagreements in {elapsed:.2?}",
        report.hosts, report.sequences
    ))
}

fn coverage_reproduction() -> Outcome {
    let p = project("running-example");
    let roles = p.roles().unwrap();
    let policy = p.policy(&roles).unwrap();
    let flow = apply_review(&tainted_flow(&p.api().unwrap()).unwrap(), &p.ledger().unwrap()).unwrap();
    let plan = plan_for(&p);
    let (f, r) = (plan.flow_tests().count(), plan.role_tests().count());
    ensure(f == 12 && r == 6, format!("{f} flow + {r} role tests"))?;
    let fc = check_flow_coverage(&plan, &flow, &p.rules, &policy);
    ensure(fc.satisfied(), format!("flow coverage not satisfied: {:?}", fc.simulation_errors))?;
    ensure(check_role_coverage(&plan, &roles).satisfied(), "role coverage not satisfied")?;
    Ok("12 flow + 6 role-coverage tests, both checkers satisfied".into())
}

fn run_correct_target() -> Result<TestReport, String> {
    let p = project("running-example");
    let cfg = p.mock_config().unwrap();
    let target = Arc::new(Mutex::new(MockTarget::new(p.rules.clone(), cfg).unwrap()));
    let server = spawn(target, SocketAddr::from(([127, 0, 0, 1], 0))).map_err(|e| e.to_string())?;
    let config = runner_config(&p, &server.url());
    let mut http = HttpTransport::new(&server.url(), config.timeout());
    let report = run_plan(&plan_for(&p), &config, &mut http).map_err(|e| e.to_string());
    server.stop().map_err(|e| e.to_string())?;
    report
}

fn end_to_end_correct() -> Outcome {
    let start = Instant::now();
    let report = run_correct_target()?;
    let elapsed = start.elapsed();
    let s = &report.summary;
    ensure(s.total == 18 && s.success == 18, report.to_text())?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("18/18 *-success over HTTP in {elapsed:.2?}"))
}

fn end_to_end_fault() -> Outcome {
    let p = project("running-example");
    let plan = plan_for(&p);
    let config = runner_config(&p, "in-process");
    let baseline = run_plan(&plan, &config, &mut in_process(&p, vec![])).map_err(|e| e.to_string())?;
    let fault = FaultInjection::DropCheck {
        rule: "updateIssue".into(),
    };
    let faulted = run_plan(&plan, &config, &mut in_process(&p, vec![fault])).map_err(|e| e.to_string())?;
    let targeted: BTreeSet<&str> = plan
        .tests
        .iter()
        .filter(|t| !t.expected_access && t.steps.last().map(|s| s.rule.as_str()) == Some("updateIssue"))
        .map(|t| t.id.as_str())
        .collect();
    ensure(!targeted.is_empty(), "plan has no negative updateIssue test")?;
    for (b, f) in baseline.results.iter().zip(&faulted.results) {
        if targeted.contains(f.test_id.as_str()) {
            ensure(
                f.verdict == Verdict::Fail && f.classification == Some(Classification::NegativeFail),
                format!("{} is {:?}", f.test_id, f.classification),
            )?;
        } else {
            ensure(
                b.verdict == f.verdict && b.classification == f.classification,
                format!("{} changed verdict", f.test_id),
            )?;
        }
    }
    let listed: BTreeSet<&str> = faulted.detected_vulnerabilities.iter().map(|v| v.test_id.as_str()).collect();
    ensure(listed == targeted, format!("detected {listed:?}"))?;
    Ok(format!("exactly {} negative-fail: {}", targeted.len(), targeted.into_iter().collect::<Vec<_>>().join(", ")))
}

fn permissions_issue() -> Outcome {
    let p = project("permissions-issue");
    let flow = tainted_flow(&p.api().unwrap()).map_err(|e| e.to_string())?;
    ensure(
        flow.pairs().contains(&("createCommitOnBranch".into(), "compare".into())),
        "no (createCommitOnBranch, compare) edge",
    )?;
    let plan = plan_for(&p);
    let compare: Vec<_> = plan
        .tests
        .iter()
        .filter(|t| !t.expected_access && t.steps.last().map(|s| s.rule.as_str()) == Some("compare"))
        .cloned()
        .collect();
    ensure(!compare.is_empty(), "no negative compare test")?;
    let sub = TestPlan {
        tests: compare,
        ..plan.clone()
    };
    let mut config = runner_config(&p, "in-process");
    let bearer = run_plan(&sub, &config, &mut in_process(&p, vec![])).map_err(|e| e.to_string())?;
    ensure(
        bearer.results.iter().all(|r| r.classification == Some(Classification::NegativeSuccess)),
        format!("bearer mode:\n{}", bearer.to_text()),
    )?;
    config.default_scheme = AuthScheme::FineGrained;
    let fine = run_plan(&sub, &config, &mut in_process(&p, vec![])).map_err(|e| e.to_string())?;
    for r in &fine.results {
        let last = r.transcript.last().and_then(|s| s.response.as_ref());
        ensure(
            last.is_some_and(|resp| resp.errors.is_empty() && resp.data.is_some()),
            format!("fine-grained compare did not succeed in {}", r.test_id),
        )?;
    }
    Ok(format!(
        "bearer denies compare ({} tests), fine-grained executes it",
        bearer.results.len()
    ))
}

/// Drives a random sequence of rule applications from the empty graph.
fn random_host(rules: &[Rule], picks: &[(usize, usize)]) -> InstanceGraph {
    let mut host = InstanceGraph::new();
    for &(ri, pick) in picks {
        let steps = steps_of(&rules[ri % rules.len()], &host);
        if !steps.is_empty() {
            host = steps[pick % steps.len()].result.clone();
        }
    }
    host
}

fn dpo_invariants() -> Outcome {
    let p = project("running-example");
    let rules = &p.rules;
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new(config.clone());
    let case = (proptest::collection::vec((0usize..16, 0usize..16), 0..7), 0usize..64);
    let applied = Cell::new(0usize);
    runner
        .run(&case, |(prefix, pick)| {
            let host = random_host(rules, &prefix);
            // every enabled step of every rule; the bootstrap rule keeps this non-empty
            let steps = all_steps(rules, &host);
            prop_assert!(!steps.is_empty());
            applied.set(applied.get() + 1);
            let t = &steps[pick % steps.len()];
            let r = rule(rules, &t.rule);
            if classify_rule(r) == RuleClass::Read {
                prop_assert_eq!(&t.result, &host, "read rule changed the host");
            }
            let (back, _) = apply_inverse(r, &t.result, &t.comatch).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(are_isomorphic(&back, &host), "round trip lost structure");
            // frame: everything outside the match image survives unchanged
            let (mn, me) = (t.matching.node_image(), t.matching.edge_image());
            for (n, ty) in host.nodes().filter(|(n, _)| !mn.contains(*n)) {
                prop_assert_eq!(t.result.node_type(n), Some(ty));
            }
            for (e, edge) in host.edges().filter(|(e, _)| !me.contains(*e)) {
                prop_assert_eq!(t.result.edge(e), Some(edge));
            }
            Ok(())
        })
        .map_err(|e| format!("dpo invariants: {e}"))?;

    let tokens = ["owner-token", "collaborator-token", "nope-token"];
    let denials = Cell::new(0usize);
    let cases = Cell::new(0usize);
    let mut runner = TestRunner::new(config);
    let calls = proptest::collection::vec((0usize..16, 0usize..3, 0usize..8), 1..10);
    runner
        .run(&calls, |calls| {
            cases.set(cases.get() + 1);
            let mut target = MockTarget::new(rules.clone(), p.mock_config().unwrap()).unwrap();
            for (ri, ti, pick) in calls {
                let r = &rules[ri % rules.len()];
                let mut vars = Map::new();
                for (var, l) in r.bindings() {
                    let ty = r.lhs().node_type(l).unwrap();
                    let ids: Vec<String> = target
                        .state()
                        .graph
                        .nodes()
                        .filter(|(_, t)| *t == ty)
                        .map(|(n, _)| n.to_string())
                        .collect();
                    if !ids.is_empty() {
                        vars.insert(var.clone(), Value::String(ids[pick % ids.len()].clone()));
                    }
                }
                let before = serde_json::to_vec(target.state()).unwrap();
                let resp = target.handle(&GraphqlRequest::new(r.operation(), vars), Some(&format!("bearer {}", tokens[ti])));
                if resp.first_code() == Some(FORBIDDEN) {
                    denials.set(denials.get() + 1);
                    prop_assert_eq!(serde_json::to_vec(target.state()).unwrap(), before);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("deny identity: {e}"))?;
    let (applied, denials) = (applied.get(), denials.get());
    ensure(applied == 1000 && denials > 0, format!("generators never exercised the properties ({applied} applications, {denials} denials, {} cases)", cases.get()))?;
    Ok(format!("1000 + 1000 cases ({applied} applications, {denials} denials checked)"))
}

/// Writes straight to the process stdout so the verdict lines show up even
/// when the harness captures test output.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("running-example static analysis", running_example_edges),
        ("full right-hand-side overlap", full_rhs_overlap),
        ("dangling-edge blind spots", dangling_blind_spots),
        ("independence-condition checker", theorem_checker),
        ("oracle equivalence at depth 3", oracle_equivalence),
        ("coverage reproduction", coverage_reproduction),
        ("end-to-end correct target", end_to_end_correct),
        ("end-to-end fault detection", end_to_end_fault),
        ("permissions-issue scenario", permissions_issue),
        ("DPO invariant suite", dpo_invariants),
    ];
    let mut failed = Vec::new();
    report("");
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => report(&format!("criterion {:>2} PASS  {name}: {detail} [{elapsed:.2?}]", i + 1)),
            Err(why) => {
                report(&format!("criterion {:>2} FAIL  {name}: {why} [{elapsed:.2?}]", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
