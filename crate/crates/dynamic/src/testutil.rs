//! Running-example fixtures for unit tests.

use std::sync::Arc;

use graphtaint_core::planner::{PolicyAnnotation, RoleSpec};
use graphtaint_core::rule::{load_rules, RuleSetDocument};
use graphtaint_core::schema::{parse_sdl, to_type_graph, TypeGraphOptions};
use graphtaint_core::Rule;
use serde_json::Value;

use crate::mock::{FaultInjection, MockConfig, MockTarget};
use crate::protocol::GraphqlRequest;

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

pub fn config(faults: Vec<FaultInjection>) -> MockConfig {
    let v: Value = serde_json::from_str(&read("mock.json")).unwrap();
    MockConfig {
        roles: roles(),
        policy: policy(),
        fine_grained_policy: None,
        tokens: serde_json::from_value(v["tokens"].clone()).unwrap(),
        faults,
    }
}

pub fn mock(faults: Vec<FaultInjection>) -> MockTarget {
    MockTarget::new(rules(), config(faults)).unwrap()
}

pub fn owner() -> String {
    "bearer owner-token".into()
}

pub fn request(op: &str, vars: Value) -> GraphqlRequest {
    GraphqlRequest::new(op, vars.as_object().cloned().unwrap_or_default())
}
