//! Static side of the graphtaint toolkit.
//!
//! Graph APIs are modelled as typed graph transformation systems: the schema
//! becomes a [`graph::TypeGraph`], every API call becomes a DPO [`rule::Rule`],
//! and produce-use dependencies between rules that create and use sensitive
//! ("tainted") node types are turned into role-based taint tests.
//!
//! Module layout follows the analysis pipeline:
//!
//! * [`graph`], [`matching`], [`iso`]: typed multigraphs, match enumeration, canonical forms
//! * [`rule`], [`dpo`]: rule specs and double-pushout application
//! * [`dependency`], [`oracle`]: dependency reasons and a brute-force cross-check
//! * [`schema`]: GraphQL SDL front end
//! * [`taint`]: sources, sinks, tainted flows and the review ledger
//! * [`planner`]: role specs, policies and taint-test synthesis

pub mod dependency;
pub mod dpo;
pub mod graph;
pub mod iso;
pub mod matching;
pub mod oracle;
pub mod planner;
pub mod rule;
pub mod schema;
pub mod taint;
#[cfg(test)]
mod testkit;

pub use graph::{EdgeId, GraphError, InstanceGraph, Morphism, NodeId, TypeGraph};
pub use rule::{ChangeTag, Rule, RuleError};
