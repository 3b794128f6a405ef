mod common;

use std::collections::BTreeMap;

use graphtaint_core::dependency::{dependency_graph, dependency_reasons};
use graphtaint_core::oracle::compare_with_brute_force;

#[test]
fn brute_force_agrees_at_depth_three() {
    let rules = common::rules("running-example");
    let report = compare_with_brute_force(&rules, 3).unwrap();
    assert!(report.agrees(), "{:#?}", report.disagreements);
    // frozen enumeration sizes
    assert_eq!(report.hosts, 12);
    assert_eq!(report.sequences, 368);
    assert_eq!(report.produce_use_sequences, 76);
}

#[test]
fn independence_verdicts_are_frozen() {
    let rules = common::rules("running-example");
    let report = compare_with_brute_force(&rules, 3).unwrap();
    let verdict: BTreeMap<(&str, &str), bool> = report
        .pairs
        .iter()
        .map(|p| ((p.first.as_str(), p.second.as_str()), p.static_independent))
        .collect();
    assert!(verdict[&("createProject", "updateRepo")]);
    assert!(verdict[&("createRepo", "createProject")]);
    assert!(!verdict[&("createRepo", "updateRepo")]);
    assert!(!verdict[&("createIssue", "deleteIssue")]);
    assert!(!verdict[&("getProject", "deleteProject")]);
}

#[test]
fn reason_counts_are_frozen() {
    let rules = common::rules("running-example");
    let g = dependency_graph(&rules).unwrap();
    let counts: BTreeMap<(String, String), usize> = g
        .edges
        .iter()
        .map(|e| ((e.source.clone(), e.sink.clone()), e.reasons.len()))
        .collect();
    let by_name = |a: &str, b: &str| {
        let r1 = rules.iter().find(|r| r.name() == a).unwrap();
        let r2 = rules.iter().find(|r| r.name() == b).unwrap();
        dependency_reasons(r1, r2).unwrap().len()
    };
    for ((a, b), n) in &counts {
        assert_eq!(by_name(a, b), *n, "{a} -> {b}");
    }
    assert_eq!(by_name("createRepo", "updateRepo"), 1);
    assert_eq!(by_name("createProject", "getProject"), 1);
    assert_eq!(by_name("getProject", "deleteProject"), 0);
}

#[test]
fn toy_system_agrees_with_brute_force() {
    let rules = common::rules("toy-dangling");
    let report = compare_with_brute_force(&rules, 3).unwrap();
    assert!(report.agrees(), "{:#?}", report.disagreements);
    assert_eq!((report.hosts, report.sequences, report.produce_use_sequences), (9, 83, 25));
}
