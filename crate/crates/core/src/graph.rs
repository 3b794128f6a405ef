//! Typed multigraphs, type graphs and typed graph morphisms.
//!
//! Instance graphs store only type *names*; typing consistency against a
//! [`TypeGraph`] is checked by [`InstanceGraph::validate`]. Every collection is
//! a `BTreeMap`/`BTreeSet` so iteration order (and therefore every derived
//! artifact) is reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(NodeId);
id_newtype!(EdgeId);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node type `{0}`")]
    DuplicateNodeType(String),
    #[error("duplicate edge type `{0}`")]
    DuplicateEdgeType(String),
    #[error("edge type `{edge_type}` references unknown node type `{node_type}`")]
    EdgeTypeEndpoint {
        edge_type: String,
        node_type: String,
    },
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(EdgeId),
    #[error("edge `{edge}` references missing node `{node}`")]
    MissingEndpoint { edge: EdgeId, node: NodeId },
    #[error("{0}")]
    EdgeTyping(Box<EdgeTypingError>),
    #[error("graphs are not typed over the same type graph")]
    TypeGraphMismatch,
    #[error("invalid morphism: {0}")]
    InvalidMorphism(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error(
    "edge `{edge}` of type `{edge_type}` runs {found_source} -> {found_target}, \
     but the type requires {expected_source} -> {expected_target}"
)]
pub struct EdgeTypingError {
    pub edge: EdgeId,
    pub edge_type: String,
    pub found_source: String,
    pub found_target: String,
    pub expected_source: String,
    pub expected_target: String,
}

/// Scalar attribute carried by a node type. Informational only; never matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub list: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub non_null: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<Attribute>,
}

impl NodeType {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeType {
    pub name: String,
    pub source: String,
    pub target: String,
}

impl EdgeType {
    pub fn new(
        name: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            source: source.into(),
            target: target.into(),
        }
    }
}

/// The schema graph every instance graph and rule is typed over.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "TypeGraphDoc", into = "TypeGraphDoc")]
pub struct TypeGraph {
    node_types: BTreeMap<String, NodeType>,
    edge_types: BTreeMap<String, EdgeType>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TypeGraphDoc {
    #[serde(default)]
    node_types: Vec<NodeType>,
    #[serde(default)]
    edge_types: Vec<EdgeType>,
}

impl TryFrom<TypeGraphDoc> for TypeGraph {
    type Error = GraphError;

    fn try_from(doc: TypeGraphDoc) -> Result<Self, Self::Error> {
        TypeGraph::new(doc.node_types, doc.edge_types)
    }
}

impl From<TypeGraph> for TypeGraphDoc {
    fn from(tg: TypeGraph) -> Self {
        TypeGraphDoc {
            node_types: tg.node_types.into_values().collect(),
            edge_types: tg.edge_types.into_values().collect(),
        }
    }
}

impl TypeGraph {
    pub fn new(node_types: Vec<NodeType>, edge_types: Vec<EdgeType>) -> Result<Self, GraphError> {
        let mut tg = TypeGraph::default();
        for nt in node_types {
            if tg.node_types.contains_key(&nt.name) {
                return Err(GraphError::DuplicateNodeType(nt.name));
            }
            tg.node_types.insert(nt.name.clone(), nt);
        }
        for et in edge_types {
            if tg.edge_types.contains_key(&et.name) {
                return Err(GraphError::DuplicateEdgeType(et.name));
            }
            for endpoint in [&et.source, &et.target] {
                if !tg.node_types.contains_key(endpoint) {
                    return Err(GraphError::EdgeTypeEndpoint {
                        edge_type: et.name.clone(),
                        node_type: endpoint.clone(),
                    });
                }
            }
            tg.edge_types.insert(et.name.clone(), et);
        }
        Ok(tg)
    }

    pub fn node_type(&self, name: &str) -> Option<&NodeType> {
        self.node_types.get(name)
    }

    pub fn edge_type(&self, name: &str) -> Option<&EdgeType> {
        self.edge_types.get(name)
    }

    pub fn node_types(&self) -> impl Iterator<Item = &NodeType> {
        self.node_types.values()
    }

    pub fn edge_types(&self) -> impl Iterator<Item = &EdgeType> {
        self.edge_types.values()
    }

    pub fn has_node_type(&self, name: &str) -> bool {
        self.node_types.contains_key(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub ty: String,
    pub source: NodeId,
    pub target: NodeId,
}

/// A finite directed multigraph with explicit node and edge identities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphData", into = "GraphData")]
pub struct InstanceGraph {
    nodes: BTreeMap<NodeId, String>,
    edges: BTreeMap<EdgeId, Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: EdgeId,
    #[serde(rename = "type")]
    pub ty: String,
    pub src: NodeId,
    pub tgt: NodeId,
}

/// Wire form of an instance graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphData {
    #[serde(default)]
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub edges: Vec<EdgeRecord>,
}

impl TryFrom<GraphData> for InstanceGraph {
    type Error = GraphError;

    fn try_from(data: GraphData) -> Result<Self, Self::Error> {
        let mut g = InstanceGraph::new();
        for n in data.nodes {
            g.add_node(n.id, n.ty)?;
        }
        for e in data.edges {
            g.add_edge(e.id, e.ty, e.src, e.tgt)?;
        }
        Ok(g)
    }
}

impl From<InstanceGraph> for GraphData {
    fn from(g: InstanceGraph) -> Self {
        GraphData {
            nodes: g
                .nodes
                .into_iter()
                .map(|(id, ty)| NodeRecord { id, ty })
                .collect(),
            edges: g
                .edges
                .into_iter()
                .map(|(id, e)| EdgeRecord {
                    id,
                    ty: e.ty,
                    src: e.source,
                    tgt: e.target,
                })
                .collect(),
        }
    }
}

/// Graph exchange document: a type graph plus one instance graph over it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    #[serde(default)]
    pub node_types: Vec<NodeType>,
    #[serde(default)]
    pub edge_types: Vec<EdgeType>,
    #[serde(default)]
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub edges: Vec<EdgeRecord>,
}

impl GraphDocument {
    pub fn new(tg: &TypeGraph, g: &InstanceGraph) -> Self {
        let data = GraphData::from(g.clone());
        GraphDocument {
            node_types: tg.node_types().cloned().collect(),
            edge_types: tg.edge_types().cloned().collect(),
            nodes: data.nodes,
            edges: data.edges,
        }
    }

    /// Splits the document into a validated type graph and instance graph.
    pub fn into_parts(self) -> Result<(TypeGraph, InstanceGraph), GraphError> {
        let tg = TypeGraph::new(self.node_types, self.edge_types)?;
        let g = InstanceGraph::try_from(GraphData {
            nodes: self.nodes,
            edges: self.edges,
        })?;
        g.validate(&tg)?;
        Ok((tg, g))
    }
}

impl InstanceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        id: impl Into<NodeId>,
        ty: impl Into<String>,
    ) -> Result<(), GraphError> {
        let id = id.into();
        if self.nodes.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        self.nodes.insert(id, ty.into());
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        id: impl Into<EdgeId>,
        ty: impl Into<String>,
        source: impl Into<NodeId>,
        target: impl Into<NodeId>,
    ) -> Result<(), GraphError> {
        let id = id.into();
        let (source, target) = (source.into(), target.into());
        if self.edges.contains_key(&id) {
            return Err(GraphError::DuplicateEdge(id));
        }
        for endpoint in [&source, &target] {
            if !self.nodes.contains_key(endpoint) {
                return Err(GraphError::MissingEndpoint {
                    edge: id,
                    node: endpoint.clone(),
                });
            }
        }
        self.edges.insert(
            id,
            Edge {
                ty: ty.into(),
                source,
                target,
            },
        );
        Ok(())
    }

    /// Removes a node; its incident edges must already be gone.
    pub(crate) fn remove_node(&mut self, id: &NodeId) {
        debug_assert!(self.incident_edges(id).is_empty());
        self.nodes.remove(id);
    }

    pub(crate) fn remove_edge(&mut self, id: &EdgeId) {
        self.edges.remove(id);
    }

    pub fn node_type(&self, id: &NodeId) -> Option<&str> {
        self.nodes.get(id).map(String::as_str)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn contains_edge(&self, id: &EdgeId) -> bool {
        self.edges.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &str)> {
        self.nodes.iter().map(|(id, ty)| (id, ty.as_str()))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeId, &Edge)> {
        self.edges.iter()
    }

    pub fn node_ids(&self) -> BTreeSet<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn edge_ids(&self) -> BTreeSet<EdgeId> {
        self.edges.keys().cloned().collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn incident_edges(&self, node: &NodeId) -> Vec<EdgeId> {
        self.edges
            .iter()
            .filter(|(_, e)| &e.source == node || &e.target == node)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Checks every node and edge against `tg`, including endpoint typing.
    pub fn validate(&self, tg: &TypeGraph) -> Result<(), GraphError> {
        for ty in self.nodes.values() {
            if !tg.has_node_type(ty) {
                return Err(GraphError::UnknownNodeType(ty.clone()));
            }
        }
        for (id, e) in &self.edges {
            let et = tg
                .edge_type(&e.ty)
                .ok_or_else(|| GraphError::UnknownEdgeType(e.ty.clone()))?;
            let src_ty = &self.nodes[&e.source];
            let tgt_ty = &self.nodes[&e.target];
            if src_ty != &et.source || tgt_ty != &et.target {
                return Err(GraphError::EdgeTyping(Box::new(EdgeTypingError {
                    edge: id.clone(),
                    edge_type: e.ty.clone(),
                    found_source: src_ty.clone(),
                    found_target: tgt_ty.clone(),
                    expected_source: et.source.clone(),
                    expected_target: et.target.clone(),
                })));
            }
        }
        Ok(())
    }

    /// Subgraph induced by the given element sets. Edges whose endpoints are
    /// not kept are dropped.
    pub fn restrict(&self, nodes: &BTreeSet<NodeId>, edges: &BTreeSet<EdgeId>) -> InstanceGraph {
        InstanceGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|(id, _)| nodes.contains(*id))
                .map(|(id, ty)| (id.clone(), ty.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(id, e)| {
                    edges.contains(*id) && nodes.contains(&e.source) && nodes.contains(&e.target)
                })
                .map(|(id, e)| (id.clone(), e.clone()))
                .collect(),
        }
    }

    /// True when every element of `self` occurs in `other` with the same type
    /// and endpoints.
    pub fn is_subgraph_of(&self, other: &InstanceGraph) -> bool {
        self.nodes
            .iter()
            .all(|(id, ty)| other.nodes.get(id) == Some(ty))
            && self
                .edges
                .iter()
                .all(|(id, e)| other.edges.get(id) == Some(e))
    }

    /// Intersection by identity (used for `K = L ∩ R` style constructions).
    pub fn intersection(&self, other: &InstanceGraph) -> InstanceGraph {
        InstanceGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|(id, ty)| other.nodes.get(*id) == Some(*ty))
                .map(|(id, ty)| (id.clone(), ty.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(id, e)| other.edges.get(*id) == Some(*e))
                .map(|(id, e)| (id.clone(), e.clone()))
                .collect(),
        }
    }
}

/// A typed graph morphism, represented by its node and edge maps.
///
/// The source and target graphs are not stored; [`Morphism::validate`] checks
/// the morphism against a concrete pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Morphism {
    #[serde(default)]
    pub nodes: BTreeMap<NodeId, NodeId>,
    #[serde(default)]
    pub edges: BTreeMap<EdgeId, EdgeId>,
}

impl Morphism {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity(g: &InstanceGraph) -> Self {
        Morphism {
            nodes: g.nodes.keys().map(|id| (id.clone(), id.clone())).collect(),
            edges: g.edges.keys().map(|id| (id.clone(), id.clone())).collect(),
        }
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeId> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&EdgeId> {
        self.edges.get(id)
    }

    pub fn is_injective(&self) -> bool {
        let n: BTreeSet<_> = self.nodes.values().collect();
        let e: BTreeSet<_> = self.edges.values().collect();
        n.len() == self.nodes.len() && e.len() == self.edges.len()
    }

    pub fn node_image(&self) -> BTreeSet<NodeId> {
        self.nodes.values().cloned().collect()
    }

    pub fn edge_image(&self) -> BTreeSet<EdgeId> {
        self.edges.values().cloned().collect()
    }

    /// `other ∘ self`: first `self`, then `other`. Elements that `other`
    /// does not map are dropped.
    pub fn then(&self, other: &Morphism) -> Morphism {
        Morphism {
            nodes: self
                .nodes
                .iter()
                .filter_map(|(k, v)| other.nodes.get(v).map(|w| (k.clone(), w.clone())))
                .collect(),
            edges: self
                .edges
                .iter()
                .filter_map(|(k, v)| other.edges.get(v).map(|w| (k.clone(), w.clone())))
                .collect(),
        }
    }

    /// Inverse of an injective (partial) morphism.
    pub fn inverse(&self) -> Morphism {
        Morphism {
            nodes: self
                .nodes
                .iter()
                .map(|(k, v)| (v.clone(), k.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(k, v)| (v.clone(), k.clone()))
                .collect(),
        }
    }

    /// Checks totality on `source`, type preservation, structure preservation
    /// and (optionally) injectivity.
    pub fn validate(
        &self,
        source: &InstanceGraph,
        target: &InstanceGraph,
        injective: bool,
    ) -> Result<(), GraphError> {
        let bad = |msg: String| Err(GraphError::InvalidMorphism(msg));
        if self.nodes.len() != source.node_count() || self.edges.len() != source.edge_count() {
            return bad("morphism is not total on its source graph".into());
        }
        for (n, ty) in source.nodes() {
            let Some(img) = self.nodes.get(n) else {
                return bad(format!("node `{n}` is unmapped"));
            };
            match target.node_type(img) {
                Some(t) if t == ty => {}
                Some(t) => return bad(format!("node `{n}`: type `{ty}` mapped onto `{t}`")),
                None => return bad(format!("node `{n}` mapped onto missing node `{img}`")),
            }
        }
        for (id, e) in source.edges() {
            let Some(img) = self.edges.get(id) else {
                return bad(format!("edge `{id}` is unmapped"));
            };
            let Some(te) = target.edge(img) else {
                return bad(format!("edge `{id}` mapped onto missing edge `{img}`"));
            };
            if te.ty != e.ty {
                return bad(format!(
                    "edge `{id}`: type `{}` mapped onto `{}`",
                    e.ty, te.ty
                ));
            }
            if self.nodes.get(&e.source) != Some(&te.source)
                || self.nodes.get(&e.target) != Some(&te.target)
            {
                return bad(format!("edge `{id}` does not commute with its endpoints"));
            }
        }
        if injective && !self.is_injective() {
            return bad("morphism is not injective".into());
        }
        Ok(())
    }
}
