#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use graphtaint_core::planner::{generate_minimal_tests, PlannerOptions, PolicyAnnotation, RoleSpec, TestPlan};
use graphtaint_core::rule::{load_rules, RuleSetDocument};
use graphtaint_core::schema::{parse_sdl, to_type_graph, TypeGraphOptions};
use graphtaint_core::taint::{apply_review, classify_sources_sinks, tainted_flow, ReviewEntry, TaintedTypeGraph};
use graphtaint_core::Rule;
use graphtaint_dynamic::{FaultInjection, MockConfig, MockTarget};
use serde_json::Value;

const DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../projects/running-example");

fn read(name: &str) -> String {
    std::fs::read_to_string(format!("{DIR}/{name}")).unwrap()
}

pub fn rules() -> Vec<Rule> {
    let tg = to_type_graph(&parse_sdl(&read("schema.graphql")).unwrap(), TypeGraphOptions::default()).unwrap();
    let doc: RuleSetDocument = serde_json::from_str(&read("rules.json")).unwrap();
    load_rules(&doc, Arc::new(tg)).unwrap()
}

pub fn roles() -> RoleSpec {
    serde_json::from_str(&read("roles.json")).unwrap()
}

pub fn policy() -> PolicyAnnotation {
    serde_json::from_str(&read("policy.json")).unwrap()
}

pub fn tokens() -> BTreeMap<String, String> {
    let v: Value = serde_json::from_str(&read("mock.json")).unwrap();
    serde_json::from_value(v["tokens"].clone()).unwrap()
}

/// Role -> token, inverted from the mock's token table.
pub fn role_tokens() -> BTreeMap<String, String> {
    tokens().into_iter().map(|(t, r)| (r, t)).collect()
}

pub fn target(faults: Vec<FaultInjection>) -> Arc<Mutex<MockTarget>> {
    let cfg = MockConfig {
        roles: roles(),
        policy: policy(),
        fine_grained_policy: None,
        tokens: tokens(),
        faults,
    };
    Arc::new(Mutex::new(MockTarget::new(rules(), cfg).unwrap()))
}

pub fn plan() -> TestPlan {
    let rules = rules();
    let g = TaintedTypeGraph::new(rules[0].type_graph().clone(), ["Repository", "Project", "Issue"].map(String::from).into()).unwrap();
    let api = classify_sources_sinks(&rules, &g).unwrap();
    let ledger: Vec<ReviewEntry> = serde_json::from_str(&read("ledger.json")).unwrap();
    let flow = apply_review(&tainted_flow(&api).unwrap(), &ledger).unwrap();
    generate_minimal_tests(&flow, &rules, &roles(), &policy(), PlannerOptions::default()).unwrap()
}
