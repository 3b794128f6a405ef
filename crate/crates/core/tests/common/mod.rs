#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use graphtaint_core::rule::{load_rules, RuleSetDocument};
use graphtaint_core::schema::{parse_sdl, to_type_graph, TypeGraphOptions};
use graphtaint_core::taint::TaintedTypeGraph;
use graphtaint_core::{Rule, TypeGraph};

pub fn read(project: &str, file: &str) -> String {
    let path = format!("{}/../../projects/{project}/{file}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn type_graph(project: &str) -> Arc<TypeGraph> {
    let tg = match project {
        "toy-dangling" => serde_json::from_str(&read(project, "type_graph.json")).unwrap(),
        _ => to_type_graph(&parse_sdl(&read(project, "schema.graphql")).unwrap(), TypeGraphOptions::default()).unwrap(),
    };
    Arc::new(tg)
}

pub fn rules(project: &str) -> Vec<Rule> {
    let doc: RuleSetDocument = serde_json::from_str(&read(project, "rules.json")).unwrap();
    load_rules(&doc, type_graph(project)).unwrap()
}

pub fn tainted(project: &str, rules: &[Rule]) -> TaintedTypeGraph {
    #[derive(serde::Deserialize)]
    struct Doc {
        tainted: BTreeSet<String>,
    }
    let doc: Doc = serde_json::from_str(&read(project, "taint.json")).unwrap();
    TaintedTypeGraph::new(rules[0].type_graph().clone(), doc.tainted).unwrap()
}
