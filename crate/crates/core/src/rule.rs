//! Rules in the unified change-tag encoding and their spec documents.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, GraphError, InstanceGraph, NodeId, TypeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeTag {
    Preserve,
    Delete,
    Create,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Query,
    #[default]
    Mutation,
}

/// How a rule is invoked over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallSpec {
    /// GraphQL operation name; defaults to the rule name.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub operation: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub document_template: String,
    /// Request variable name -> LHS node id it selects.
    #[serde(default)]
    pub bindings: BTreeMap<String, NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleNodeSpec {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub ty: String,
    pub tag: ChangeTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEdgeSpec {
    pub id: EdgeId,
    #[serde(rename = "type")]
    pub ty: String,
    pub src: NodeId,
    pub tgt: NodeId,
    pub tag: ChangeTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub name: String,
    #[serde(default)]
    pub kind: OperationKind,
    /// Environment rules (e.g. user sign-up) usable for setup and
    /// exploration but not part of the analysed API surface.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bootstrap: bool,
    /// Marks machine-derived rules awaiting analyst review.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skeleton: bool,
    #[serde(default)]
    pub nodes: Vec<RuleNodeSpec>,
    #[serde(default)]
    pub edges: Vec<RuleEdgeSpec>,
    #[serde(default)]
    pub call: CallSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RuleSetDocument {
    pub rules: Vec<RuleSpec>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("rule `{rule}`: {source}")]
    Graph {
        rule: String,
        #[source]
        source: GraphError,
    },
    #[error(
        "rule `{rule}`: edge `{edge}` tagged {tag:?} has endpoint `{node}` tagged {node_tag:?}"
    )]
    TagConflict {
        rule: String,
        edge: EdgeId,
        tag: ChangeTag,
        node: NodeId,
        node_tag: ChangeTag,
    },
    #[error(
        "rule `{rule}`: binding `{var}` refers to `{node}`, which is not a left-hand-side node"
    )]
    BadBinding {
        rule: String,
        var: String,
        node: NodeId,
    },
    #[error("duplicate rule name `{0}`")]
    DuplicateRule(String),
    #[error("duplicate operation name `{0}`")]
    DuplicateOperation(String),
}

/// A validated DPO rule `L <- K -> R` with K = L ∩ R by construction.
#[derive(Debug, Clone)]
pub struct Rule {
    spec: RuleSpec,
    type_graph: Arc<TypeGraph>,
    lhs: InstanceGraph,
    interface: InstanceGraph,
    rhs: InstanceGraph,
    node_tags: BTreeMap<NodeId, ChangeTag>,
    edge_tags: BTreeMap<EdgeId, ChangeTag>,
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.type_graph == other.type_graph
    }
}

impl Rule {
    pub fn new(spec: RuleSpec, type_graph: Arc<TypeGraph>) -> Result<Self, RuleError> {
        let graph_err = |source| RuleError::Graph {
            rule: spec.name.clone(),
            source,
        };
        let mut all = InstanceGraph::new();
        let mut node_tags = BTreeMap::new();
        for n in &spec.nodes {
            all.add_node(n.id.clone(), n.ty.clone())
                .map_err(graph_err)?;
            node_tags.insert(n.id.clone(), n.tag);
        }
        let mut edge_tags = BTreeMap::new();
        for e in &spec.edges {
            all.add_edge(e.id.clone(), e.ty.clone(), e.src.clone(), e.tgt.clone())
                .map_err(graph_err)?;
            edge_tags.insert(e.id.clone(), e.tag);
            for end in [&e.src, &e.tgt] {
                let nt = node_tags[end];
                let ok = match e.tag {
                    ChangeTag::Preserve => nt == ChangeTag::Preserve,
                    ChangeTag::Delete => nt != ChangeTag::Create,
                    ChangeTag::Create => nt != ChangeTag::Delete,
                };
                if !ok {
                    return Err(RuleError::TagConflict {
                        rule: spec.name.clone(),
                        edge: e.id.clone(),
                        tag: e.tag,
                        node: end.clone(),
                        node_tag: nt,
                    });
                }
            }
        }
        all.validate(&type_graph).map_err(graph_err)?;

        let pick_nodes = |keep: &[ChangeTag]| -> BTreeSet<NodeId> {
            node_tags
                .iter()
                .filter(|(_, t)| keep.contains(t))
                .map(|(n, _)| n.clone())
                .collect()
        };
        let pick_edges = |keep: &[ChangeTag]| -> BTreeSet<EdgeId> {
            edge_tags
                .iter()
                .filter(|(_, t)| keep.contains(t))
                .map(|(n, _)| n.clone())
                .collect()
        };
        use ChangeTag::*;
        let lhs = all.restrict(
            &pick_nodes(&[Preserve, Delete]),
            &pick_edges(&[Preserve, Delete]),
        );
        let interface = all.restrict(&pick_nodes(&[Preserve]), &pick_edges(&[Preserve]));
        let rhs = all.restrict(
            &pick_nodes(&[Preserve, Create]),
            &pick_edges(&[Preserve, Create]),
        );

        for (var, node) in &spec.call.bindings {
            if !lhs.contains_node(node) {
                return Err(RuleError::BadBinding {
                    rule: spec.name.clone(),
                    var: var.clone(),
                    node: node.clone(),
                });
            }
        }
        Ok(Rule {
            spec,
            type_graph,
            lhs,
            interface,
            rhs,
            node_tags,
            edge_tags,
        })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Operation name used on the wire.
    pub fn operation(&self) -> &str {
        if self.spec.call.operation.is_empty() {
            &self.spec.name
        } else {
            &self.spec.call.operation
        }
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }

    pub fn kind(&self) -> OperationKind {
        self.spec.kind
    }

    pub fn is_bootstrap(&self) -> bool {
        self.spec.bootstrap
    }

    pub fn bindings(&self) -> &BTreeMap<String, NodeId> {
        &self.spec.call.bindings
    }

    pub fn type_graph(&self) -> &Arc<TypeGraph> {
        &self.type_graph
    }

    pub fn lhs(&self) -> &InstanceGraph {
        &self.lhs
    }

    pub fn interface(&self) -> &InstanceGraph {
        &self.interface
    }

    pub fn rhs(&self) -> &InstanceGraph {
        &self.rhs
    }

    pub fn node_tag(&self, n: &NodeId) -> Option<ChangeTag> {
        self.node_tags.get(n).copied()
    }

    pub fn edge_tag(&self, e: &EdgeId) -> Option<ChangeTag> {
        self.edge_tags.get(e).copied()
    }

    pub fn nodes_tagged(&self, tag: ChangeTag) -> BTreeSet<NodeId> {
        self.node_tags
            .iter()
            .filter(|(_, t)| **t == tag)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn edges_tagged(&self, tag: ChangeTag) -> BTreeSet<EdgeId> {
        self.edge_tags
            .iter()
            .filter(|(_, t)| **t == tag)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Node types of create-tagged nodes.
    pub fn created_types(&self) -> BTreeSet<String> {
        self.nodes_tagged(ChangeTag::Create)
            .iter()
            .filter_map(|n| self.rhs.node_type(n).map(str::to_string))
            .collect()
    }

    pub fn lhs_types(&self) -> BTreeSet<String> {
        self.lhs.nodes().map(|(_, t)| t.to_string()).collect()
    }
}

/// Parses and validates a rule-set document against `tg`.
pub fn load_rules(doc: &RuleSetDocument, tg: Arc<TypeGraph>) -> Result<Vec<Rule>, RuleError> {
    let mut names = BTreeSet::new();
    let mut ops = BTreeSet::new();
    let mut out = Vec::new();
    for spec in &doc.rules {
        if !names.insert(spec.name.clone()) {
            return Err(RuleError::DuplicateRule(spec.name.clone()));
        }
        let rule = Rule::new(spec.clone(), tg.clone())?;
        if !ops.insert(rule.operation().to_string()) {
            return Err(RuleError::DuplicateOperation(rule.operation().to_string()));
        }
        out.push(rule);
    }
    Ok(out)
}

/// Small builder used by tests and fixtures.
#[derive(Debug, Clone)]
pub struct RuleBuilder {
    spec: RuleSpec,
}

impl RuleBuilder {
    pub fn new(name: &str) -> Self {
        RuleBuilder {
            spec: RuleSpec {
                name: name.to_string(),
                kind: OperationKind::Mutation,
                bootstrap: false,
                skeleton: false,
                nodes: Vec::new(),
                edges: Vec::new(),
                call: CallSpec::default(),
            },
        }
    }

    pub fn node(mut self, id: &str, ty: &str, tag: ChangeTag) -> Self {
        self.spec.nodes.push(RuleNodeSpec {
            id: id.into(),
            ty: ty.to_string(),
            tag,
        });
        self
    }

    pub fn edge(mut self, id: &str, ty: &str, src: &str, tgt: &str, tag: ChangeTag) -> Self {
        self.spec.edges.push(RuleEdgeSpec {
            id: id.into(),
            ty: ty.to_string(),
            src: src.into(),
            tgt: tgt.into(),
            tag,
        });
        self
    }

    pub fn bind(mut self, var: &str, node: &str) -> Self {
        self.spec.call.bindings.insert(var.to_string(), node.into());
        self
    }

    pub fn query(mut self) -> Self {
        self.spec.kind = OperationKind::Query;
        self
    }

    pub fn bootstrap(mut self) -> Self {
        self.spec.bootstrap = true;
        self
    }

    pub fn spec(self) -> RuleSpec {
        self.spec
    }

    pub fn build(self, tg: &Arc<TypeGraph>) -> Result<Rule, RuleError> {
        Rule::new(self.spec, tg.clone())
    }
}
