//! Shared fixtures for unit tests, loaded from the bundled project files.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::graph::TypeGraph;
use crate::rule::{load_rules, Rule, RuleSetDocument};
use crate::schema::{parse_sdl, to_type_graph, TypeGraphOptions};

const SCHEMA: &str = include_str!("../../../projects/running-example/schema.graphql");
const RULES: &str = include_str!("../../../projects/running-example/rules.json");

pub fn running_type_graph() -> Arc<TypeGraph> {
    let model = parse_sdl(SCHEMA).unwrap();
    Arc::new(to_type_graph(&model, TypeGraphOptions::default()).unwrap())
}

pub fn running_rules() -> Vec<Rule> {
    let doc: RuleSetDocument = serde_json::from_str(RULES).unwrap();
    load_rules(&doc, running_type_graph()).unwrap()
}

pub fn running_taint() -> BTreeSet<String> {
    ["Repository", "Project", "Issue"].map(String::from).into()
}
