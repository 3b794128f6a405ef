//! Double-pushout rule application and its inverse.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, InstanceGraph, Morphism, NodeId};
use crate::matching::find_dangling_edge;
use crate::rule::{ChangeTag, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleClass {
    Read,
    Write,
}

/// A rule is a read rule iff nothing is created or deleted.
pub fn classify_rule(rule: &Rule) -> RuleClass {
    let changes = !rule.nodes_tagged(ChangeTag::Create).is_empty()
        || !rule.nodes_tagged(ChangeTag::Delete).is_empty()
        || !rule.edges_tagged(ChangeTag::Create).is_empty()
        || !rule.edges_tagged(ChangeTag::Delete).is_empty();
    if changes {
        RuleClass::Write
    } else {
        RuleClass::Read
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DpoError {
    #[error(
        "rule `{rule}` is not applicable: deleting the match would leave edge `{edge}` dangling"
    )]
    Dangling { rule: String, edge: EdgeId },
    #[error("rule `{rule}` cannot be reversed here: edge `{edge}` is attached to a created node")]
    NotReversible { rule: String, edge: EdgeId },
    #[error("invalid match for rule `{rule}`: {reason}")]
    InvalidMatch { rule: String, reason: String },
}

/// Deterministic fresh-id source. Counters only move forward, so an id handed
/// out once is never reused within the same generator; ids already present
/// in the host are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdGenerator {
    next: u64,
}

impl IdGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh_node(&mut self, taken: &InstanceGraph, extra: &BTreeSet<NodeId>) -> NodeId {
        loop {
            self.next += 1;
            let id = NodeId::new(format!("n{}", self.next));
            if !taken.contains_node(&id) && !extra.contains(&id) {
                return id;
            }
        }
    }

    fn fresh_edge(&mut self, taken: &InstanceGraph, extra: &BTreeSet<EdgeId>) -> EdgeId {
        loop {
            self.next += 1;
            let id = EdgeId::new(format!("e{}", self.next));
            if !taken.contains_edge(&id) && !extra.contains(&id) {
                return id;
            }
        }
    }
}

/// One rule application `G =(r,m)=> H` with its intermediate graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectTransformation {
    pub rule: String,
    pub host: InstanceGraph,
    pub matching: Morphism,
    pub intermediate: InstanceGraph,
    pub result: InstanceGraph,
    pub comatch: Morphism,
}

impl DirectTransformation {
    /// Host ids of elements created by this step.
    pub fn created_nodes(&self) -> BTreeSet<NodeId> {
        self.result
            .node_ids()
            .difference(&self.intermediate.node_ids())
            .cloned()
            .collect()
    }

    pub fn created_edges(&self) -> BTreeSet<EdgeId> {
        self.result
            .edge_ids()
            .difference(&self.intermediate.edge_ids())
            .cloned()
            .collect()
    }
}

struct Rewrite {
    intermediate: InstanceGraph,
    result: InstanceGraph,
    out_match: Morphism,
}

/// Shared core of forward and inverse application: `pattern` is matched by
/// `m`; elements tagged `removed` are erased, elements of `target` tagged
/// `added` are inserted with fresh ids.
#[allow(clippy::too_many_arguments)]
fn rewrite(
    rule: &Rule,
    pattern: &InstanceGraph,
    target: &InstanceGraph,
    removed: ChangeTag,
    added: ChangeTag,
    host: &InstanceGraph,
    m: &Morphism,
    ids: &mut IdGenerator,
) -> Result<Rewrite, DpoError> {
    m.validate(pattern, host, true)
        .map_err(|e| DpoError::InvalidMatch {
            rule: rule.name().to_string(),
            reason: e.to_string(),
        })?;
    let del_nodes = rule.nodes_tagged(removed);
    let del_edges = rule.edges_tagged(removed);
    if let Some(edge) = find_dangling_edge(host, m, &del_nodes, &del_edges) {
        let rule = rule.name().to_string();
        return Err(if removed == ChangeTag::Delete {
            DpoError::Dangling { rule, edge }
        } else {
            DpoError::NotReversible { rule, edge }
        });
    }

    let mut d = host.clone();
    for e in &del_edges {
        d.remove_edge(&m.edges[e]);
    }
    for n in &del_nodes {
        d.remove_node(&m.nodes[n]);
    }

    let mut h = d.clone();
    let mut out = Morphism::new();
    for (n, _) in target.nodes() {
        if rule.node_tag(n) == Some(ChangeTag::Preserve) {
            out.nodes.insert(n.clone(), m.nodes[n].clone());
        }
    }
    for (e, _) in target.edges() {
        if rule.edge_tag(e) == Some(ChangeTag::Preserve) {
            out.edges.insert(e.clone(), m.edges[e].clone());
        }
    }
    // Fresh ids must avoid everything in the original host, so deleted ids
    // are never recycled within one step.
    let mut fresh_nodes = BTreeSet::new();
    for (n, ty) in target.nodes() {
        if rule.node_tag(n) == Some(added) {
            let id = ids.fresh_node(host, &fresh_nodes);
            fresh_nodes.insert(id.clone());
            h.add_node(id.clone(), ty).expect("fresh node id");
            out.nodes.insert(n.clone(), id);
        }
    }
    let mut fresh_edges = BTreeSet::new();
    for (e, edge) in target.edges() {
        if rule.edge_tag(e) == Some(added) {
            let id = ids.fresh_edge(host, &fresh_edges);
            fresh_edges.insert(id.clone());
            h.add_edge(
                id.clone(),
                edge.ty.clone(),
                out.nodes[&edge.source].clone(),
                out.nodes[&edge.target].clone(),
            )
            .expect("fresh edge between mapped nodes");
            out.edges.insert(e.clone(), id);
        }
    }
    Ok(Rewrite {
        intermediate: d,
        result: h,
        out_match: out,
    })
}

/// Applies `rule` at `m` with a generator private to this call.
pub fn apply(
    rule: &Rule,
    host: &InstanceGraph,
    m: &Morphism,
) -> Result<DirectTransformation, DpoError> {
    apply_with(rule, host, m, &mut IdGenerator::new())
}

pub fn apply_with(
    rule: &Rule,
    host: &InstanceGraph,
    m: &Morphism,
    ids: &mut IdGenerator,
) -> Result<DirectTransformation, DpoError> {
    let rw = rewrite(
        rule,
        rule.lhs(),
        rule.rhs(),
        ChangeTag::Delete,
        ChangeTag::Create,
        host,
        m,
        ids,
    )?;
    Ok(DirectTransformation {
        rule: rule.name().to_string(),
        host: host.clone(),
        matching: m.clone(),
        intermediate: rw.intermediate,
        result: rw.result,
        comatch: rw.out_match,
    })
}

/// Undoes `rule` at the comatch `R -> host`, returning the reconstructed
/// graph `G` and the match `L -> G`.
pub fn apply_inverse(
    rule: &Rule,
    host: &InstanceGraph,
    comatch: &Morphism,
) -> Result<(InstanceGraph, Morphism), DpoError> {
    apply_inverse_with(rule, host, comatch, &mut IdGenerator::new())
}

pub fn apply_inverse_with(
    rule: &Rule,
    host: &InstanceGraph,
    comatch: &Morphism,
    ids: &mut IdGenerator,
) -> Result<(InstanceGraph, Morphism), DpoError> {
    let rw = rewrite(
        rule,
        rule.rhs(),
        rule.lhs(),
        ChangeTag::Create,
        ChangeTag::Delete,
        host,
        comatch,
        ids,
    )?;
    Ok((rw.result, rw.out_match))
}

/// Restricts a host-level morphism to a subset of pattern elements.
pub fn restrict_morphism(
    m: &Morphism,
    nodes: &BTreeSet<NodeId>,
    edges: &BTreeSet<EdgeId>,
) -> Morphism {
    Morphism {
        nodes: m
            .nodes
            .iter()
            .filter(|(k, _)| nodes.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<BTreeMap<_, _>>(),
        edges: m
            .edges
            .iter()
            .filter(|(k, _)| edges.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    }
}
