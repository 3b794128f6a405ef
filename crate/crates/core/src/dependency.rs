//! Coarse-grained produce-use dependency analysis.
//!
//! A dependency reason for `(r1, r2)` is a span `C1 <- S1 -> L2`: it records
//! which elements created by `r1` are used by `r2`. Reasons are certified
//! constructively: the two rules are glued into a host `H1`, then `r1` must be
//! reversible at its comatch and `r2` applicable at its match.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpo::{apply_inverse, DirectTransformation};
use crate::graph::{EdgeId, InstanceGraph, Morphism, NodeId};
use crate::matching::find_dangling_edge;
use crate::rule::{ChangeTag, Rule};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DependencyError {
    #[error("rules `{0}` and `{1}` are typed over different type graphs")]
    TypeGraphMismatch(String, String),
    #[error("transformations do not chain: the second host is not the first result")]
    ChainingMismatch,
}

/// Creation graph `C1` and boundary graph `B1 = C1 ∩ K1` of a rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CreationProfile {
    pub rule: String,
    pub creation: InstanceGraph,
    pub boundary: InstanceGraph,
}

pub fn creation_profile(rule: &Rule) -> CreationProfile {
    let creation = change_graph(rule, rule.rhs(), ChangeTag::Create);
    let boundary = creation.intersection(rule.interface());
    CreationProfile {
        rule: rule.name().to_string(),
        creation,
        boundary,
    }
}

/// Smallest subgraph of `L` containing everything the rule deletes.
pub fn deletion_graph(rule: &Rule) -> InstanceGraph {
    change_graph(rule, rule.lhs(), ChangeTag::Delete)
}

fn change_graph(rule: &Rule, within: &InstanceGraph, tag: ChangeTag) -> InstanceGraph {
    let edges = rule.edges_tagged(tag);
    let mut nodes = rule.nodes_tagged(tag);
    for e in &edges {
        let edge = within.edge(e).expect("tagged edge lies in its side");
        nodes.insert(edge.source.clone());
        nodes.insert(edge.target.clone());
    }
    within.restrict(&nodes, &edges)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanNode {
    #[serde(rename = "type")]
    pub ty: String,
    /// Element of the source rule's creation graph.
    pub source: NodeId,
    /// Element of the sink rule's left-hand side.
    pub sink: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanEdge {
    #[serde(rename = "type")]
    pub ty: String,
    pub source: EdgeId,
    pub sink: EdgeId,
}

/// The span graph `S1` stored as its pairs of identified elements; both legs
/// are the projections.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Span {
    pub nodes: Vec<SpanNode>,
    pub edges: Vec<SpanEdge>,
}

impl Span {
    fn from_pairs(nodes: BTreeSet<SpanNode>, edges: BTreeSet<SpanEdge>) -> Self {
        Span {
            nodes: nodes.into_iter().collect(),
            edges: edges.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    /// The embedding `o1: S1 -> C1` as a node/edge map keyed by span ids.
    pub fn source_leg(&self) -> Morphism {
        self.leg(true)
    }

    /// The embedding `q12: S1 -> L2`.
    pub fn sink_leg(&self) -> Morphism {
        self.leg(false)
    }

    fn leg(&self, source: bool) -> Morphism {
        Morphism {
            nodes: self
                .nodes
                .iter()
                .map(|n| {
                    let img = if source { &n.source } else { &n.sink };
                    (span_node_id(n), img.clone())
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let img = if source { &e.source } else { &e.sink };
                    (EdgeId::new(format!("{}~{}", e.source, e.sink)), img.clone())
                })
                .collect(),
        }
    }

    /// True when `self` identifies a subset of the pairs of `other`.
    pub fn is_subspan_of(&self, other: &Span) -> bool {
        self.nodes.iter().all(|n| other.nodes.contains(n))
            && self.edges.iter().all(|e| other.edges.contains(e))
    }

    pub fn source_nodes(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().map(|n| n.source.clone()).collect()
    }

    pub fn source_edges(&self) -> BTreeSet<EdgeId> {
        self.edges.iter().map(|e| e.source.clone()).collect()
    }

    pub fn sink_nodes(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().map(|n| n.sink.clone()).collect()
    }
}

fn span_node_id(n: &SpanNode) -> NodeId {
    NodeId::new(format!("{}~{}", n.source, n.sink))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyReason {
    pub id: String,
    pub source_rule: String,
    pub sink_rule: String,
    pub span: Span,
    /// Glued minimal host `H1`.
    pub host: InstanceGraph,
    /// Inclusion `R1 -> H1`.
    pub source_comatch: Morphism,
    /// Inclusion `L2 -> H1`.
    pub sink_match: Morphism,
    /// Set by taint analysis: the span uses a created node of a tainted type.
    #[serde(default)]
    pub tainted: bool,
    /// No other reason of the same pair identifies a strict subset of pairs.
    pub minimal: bool,
}

impl DependencyReason {
    /// Whether the span identifies a node created by the source rule whose
    /// type is in `types`.
    pub fn uses_created_type(&self, source_rule: &Rule, types: &BTreeSet<String>) -> bool {
        self.span.nodes.iter().any(|n| {
            source_rule.node_tag(&n.source) == Some(ChangeTag::Create) && types.contains(&n.ty)
        })
    }
}

/// All injective, type- and incidence-compatible partial maps `from -> to`.
/// Edges are only mapped when both endpoints are.
pub fn partial_injections(from: &InstanceGraph, to: &InstanceGraph) -> Vec<Morphism> {
    let nodes: Vec<(NodeId, String)> = from
        .nodes()
        .map(|(n, t)| (n.clone(), t.to_string()))
        .collect();
    let mut out = Vec::new();
    let mut current = Morphism::new();
    let mut used = BTreeSet::new();
    partial_nodes(&nodes, 0, from, to, &mut current, &mut used, &mut out);
    out
}

fn partial_nodes(
    nodes: &[(NodeId, String)],
    idx: usize,
    from: &InstanceGraph,
    to: &InstanceGraph,
    current: &mut Morphism,
    used: &mut BTreeSet<NodeId>,
    out: &mut Vec<Morphism>,
) {
    if idx == nodes.len() {
        let edges: Vec<(EdgeId, crate::graph::Edge)> = from
            .edges()
            .filter(|(_, e)| {
                current.nodes.contains_key(&e.source) && current.nodes.contains_key(&e.target)
            })
            .map(|(id, e)| (id.clone(), e.clone()))
            .collect();
        let mut used_edges = BTreeSet::new();
        partial_edges(&edges, 0, to, current, &mut used_edges, out);
        return;
    }
    partial_nodes(nodes, idx + 1, from, to, current, used, out);
    let (n, ty) = &nodes[idx];
    for (cand, cty) in to.nodes() {
        if cty != ty || used.contains(cand) {
            continue;
        }
        current.nodes.insert(n.clone(), cand.clone());
        used.insert(cand.clone());
        partial_nodes(nodes, idx + 1, from, to, current, used, out);
        current.nodes.remove(n);
        used.remove(cand);
    }
}

fn partial_edges(
    edges: &[(EdgeId, crate::graph::Edge)],
    idx: usize,
    to: &InstanceGraph,
    current: &mut Morphism,
    used: &mut BTreeSet<EdgeId>,
    out: &mut Vec<Morphism>,
) {
    if idx == edges.len() {
        out.push(current.clone());
        return;
    }
    partial_edges(edges, idx + 1, to, current, used, out);
    let (id, e) = &edges[idx];
    let (s, t) = (&current.nodes[&e.source], &current.nodes[&e.target]);
    let cands: Vec<EdgeId> = to
        .edges()
        .filter(|(cid, ce)| {
            ce.ty == e.ty && &ce.source == s && &ce.target == t && !used.contains(*cid)
        })
        .map(|(cid, _)| cid.clone())
        .collect();
    for cid in cands {
        current.edges.insert(id.clone(), cid.clone());
        used.insert(cid.clone());
        partial_edges(edges, idx + 1, to, current, used, out);
        current.edges.remove(id);
        used.remove(&cid);
    }
}

/// Pushout of `left` and `right` along the partial injection `overlap`.
/// Left elements are prefixed `src:`, unshared right elements `snk:`.
pub fn glue(
    left: &InstanceGraph,
    right: &InstanceGraph,
    overlap: &Morphism,
) -> (InstanceGraph, Morphism, Morphism) {
    let mut h = InstanceGraph::new();
    let mut inl = Morphism::new();
    let mut inr = Morphism::new();
    let back = overlap.inverse();
    for (n, ty) in left.nodes() {
        let id = NodeId::new(format!("src:{n}"));
        h.add_node(id.clone(), ty).expect("unique");
        inl.nodes.insert(n.clone(), id);
    }
    for (n, ty) in right.nodes() {
        let id = match back.nodes.get(n) {
            Some(l) => inl.nodes[l].clone(),
            None => {
                let id = NodeId::new(format!("snk:{n}"));
                h.add_node(id.clone(), ty).expect("unique");
                id
            }
        };
        inr.nodes.insert(n.clone(), id);
    }
    for (e, edge) in left.edges() {
        let id = EdgeId::new(format!("src:{e}"));
        h.add_edge(
            id.clone(),
            edge.ty.clone(),
            inl.nodes[&edge.source].clone(),
            inl.nodes[&edge.target].clone(),
        )
        .expect("endpoints glued");
        inl.edges.insert(e.clone(), id);
    }
    for (e, edge) in right.edges() {
        let id = match back.edges.get(e) {
            Some(l) => inl.edges[l].clone(),
            None => {
                let id = EdgeId::new(format!("snk:{e}"));
                h.add_edge(
                    id.clone(),
                    edge.ty.clone(),
                    inr.nodes[&edge.source].clone(),
                    inr.nodes[&edge.target].clone(),
                )
                .expect("endpoints glued");
                id
            }
        };
        inr.edges.insert(e.clone(), id);
    }
    (h, inl, inr)
}

struct Witness {
    host: InstanceGraph,
    left: Morphism,
    right: Morphism,
}

/// Glues `R_a` and `L_b` along `overlap` and checks that the pair is
/// realizable: `ra` reversible at `R_a` and `rb` applicable at `L_b`.
fn realize(ra: &Rule, rb: &Rule, overlap: &Morphism) -> Option<Witness> {
    let (host, left, right) = glue(ra.rhs(), rb.lhs(), overlap);
    apply_inverse(ra, &host, &left).ok()?;
    let dangling = find_dangling_edge(
        &host,
        &right,
        &rb.nodes_tagged(ChangeTag::Delete),
        &rb.edges_tagged(ChangeTag::Delete),
    );
    dangling.is_none().then_some(Witness { host, left, right })
}

fn ensure_same_type_graph(a: &Rule, b: &Rule) -> Result<(), DependencyError> {
    if a.type_graph() == b.type_graph() {
        Ok(())
    } else {
        Err(DependencyError::TypeGraphMismatch(
            a.name().into(),
            b.name().into(),
        ))
    }
}

fn span_of(overlap: &Morphism, c1: &InstanceGraph, left: &InstanceGraph) -> Span {
    let nodes = overlap
        .nodes
        .iter()
        .filter(|(s, _)| c1.contains_node(s))
        .map(|(s, t)| SpanNode {
            ty: left.node_type(s).unwrap().to_string(),
            source: s.clone(),
            sink: t.clone(),
        })
        .collect();
    let edges = overlap
        .edges
        .iter()
        .filter(|(s, _)| c1.contains_edge(s))
        .map(|(s, t)| SpanEdge {
            ty: left.edge(s).unwrap().ty.clone(),
            source: s.clone(),
            sink: t.clone(),
        })
        .collect();
    Span::from_pairs(nodes, edges)
}

fn has_created(rule: &Rule, span: &Span) -> bool {
    span.nodes
        .iter()
        .any(|n| rule.node_tag(&n.source) == Some(ChangeTag::Create))
        || span
            .edges
            .iter()
            .any(|e| rule.edge_tag(&e.source) == Some(ChangeTag::Create))
}

/// Enumerates the realizable produce-use dependency reasons of `(r1, r2)`.
///
/// Overlaps of all of `R1` with `L2` are grouped by their restriction to
/// `C1`; a group yields a reason when its smallest realizable overlap exists.
/// Looking past `C1` matters when `r2` deletes a boundary node: the extra
/// identifications can absorb edges that would otherwise dangle.
pub fn dependency_reasons(r1: &Rule, r2: &Rule) -> Result<Vec<DependencyReason>, DependencyError> {
    ensure_same_type_graph(r1, r2)?;
    let profile = creation_profile(r1);
    if profile.creation.is_empty() {
        return Ok(Vec::new());
    }
    let mut groups: BTreeMap<Span, Vec<Morphism>> = BTreeMap::new();
    for overlap in partial_injections(r1.rhs(), r2.lhs()) {
        let span = span_of(&overlap, &profile.creation, r1.rhs());
        if has_created(r1, &span) {
            groups.entry(span).or_default().push(overlap);
        }
    }
    let mut found: Vec<(Span, Witness)> = Vec::new();
    for (span, mut overlaps) in groups {
        overlaps.sort_by_key(|o| (o.nodes.len() + o.edges.len(), o.clone()));
        if let Some(w) = overlaps.iter().find_map(|o| realize(r1, r2, o)) {
            found.push((span, w));
        }
    }
    let spans: Vec<Span> = found.iter().map(|(s, _)| s.clone()).collect();
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(k, (span, w))| {
            let minimal = !spans.iter().any(|o| o != &span && o.is_subspan_of(&span));
            DependencyReason {
                id: format!("{}->{}#{}", r1.name(), r2.name(), k + 1),
                source_rule: r1.name().to_string(),
                sink_rule: r2.name().to_string(),
                span,
                host: w.host,
                source_comatch: w.left,
                sink_match: w.right,
                tainted: false,
                minimal,
            }
        })
        .collect())
}

/// A realizable overlap in which `rb` deletes something `ra` produced or
/// preserved, which blocks swapping the two steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UseDeleteWitness {
    pub first: String,
    pub second: String,
    pub overlap: Morphism,
    pub host: InstanceGraph,
}

pub fn use_delete_witness(
    ra: &Rule,
    rb: &Rule,
) -> Result<Option<UseDeleteWitness>, DependencyError> {
    ensure_same_type_graph(ra, rb)?;
    let deleted = deletion_graph(rb);
    if deleted.is_empty() {
        return Ok(None);
    }
    let del_nodes = rb.nodes_tagged(ChangeTag::Delete);
    let del_edges = rb.edges_tagged(ChangeTag::Delete);
    let mut overlaps: Vec<Morphism> = partial_injections(ra.rhs(), rb.lhs())
        .into_iter()
        .filter(|o| {
            o.nodes.values().any(|n| del_nodes.contains(n))
                || o.edges.values().any(|e| del_edges.contains(e))
        })
        .collect();
    overlaps.sort_by_key(|o| (o.nodes.len() + o.edges.len(), o.clone()));
    Ok(overlaps.into_iter().find_map(|o| {
        realize(ra, rb, &o).map(|w| UseDeleteWitness {
            first: ra.name().to_string(),
            second: rb.name().to_string(),
            overlap: o,
            host: w.host,
        })
    }))
}

/// True iff every consecutive `(ra, rb)` step pair can be swapped: there is
/// no realizable produce-use reason and no realizable use-delete overlap.
pub fn universally_sequentially_independent(ra: &Rule, rb: &Rule) -> Result<bool, DependencyError> {
    Ok(dependency_reasons(ra, rb)?.is_empty() && use_delete_witness(ra, rb)?.is_none())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Independent,
    ProduceUse,
    UseDelete,
}

/// Classifies two chained steps. Because element ids survive rewriting, a
/// factorisation `x21: L2 -> D1` exists iff the second match avoids every
/// element created by the first step.
pub fn classify_transformation_pair(
    t1: &DirectTransformation,
    t2: &DirectTransformation,
) -> Result<PairClass, DependencyError> {
    if t1.result != t2.host {
        return Err(DependencyError::ChainingMismatch);
    }
    let created_n = t1.created_nodes();
    let created_e = t1.created_edges();
    let uses_created = t2.matching.nodes.values().any(|n| created_n.contains(n))
        || t2.matching.edges.values().any(|e| created_e.contains(e));
    if uses_created {
        return Ok(PairClass::ProduceUse);
    }
    let deleted_n: BTreeSet<NodeId> = t2
        .host
        .node_ids()
        .difference(&t2.intermediate.node_ids())
        .cloned()
        .collect();
    let deleted_e: BTreeSet<EdgeId> = t2
        .host
        .edge_ids()
        .difference(&t2.intermediate.edge_ids())
        .cloned()
        .collect();
    let blocks = t1.comatch.nodes.values().any(|n| deleted_n.contains(n))
        || t1.comatch.edges.values().any(|e| deleted_e.contains(e));
    Ok(if blocks {
        PairClass::UseDelete
    } else {
        PairClass::Independent
    })
}

/// Pullback of `m1' ∘ c1` and `m2`: all pairs of `C1` and `L2` elements with
/// the same image in the shared host. `None` unless a created element is used.
pub fn extract_reason(
    r1: &Rule,
    t1: &DirectTransformation,
    t2: &DirectTransformation,
) -> Option<Span> {
    let c1 = creation_profile(r1).creation;
    let mut nodes = BTreeSet::new();
    for (c, ty) in c1.nodes() {
        let img = &t1.comatch.nodes[c];
        for (l, h) in &t2.matching.nodes {
            if h == img {
                nodes.insert(SpanNode {
                    ty: ty.to_string(),
                    source: c.clone(),
                    sink: l.clone(),
                });
            }
        }
    }
    let mut edges = BTreeSet::new();
    for (c, e) in c1.edges() {
        let img = &t1.comatch.edges[c];
        for (l, h) in &t2.matching.edges {
            if h == img {
                edges.insert(SpanEdge {
                    ty: e.ty.clone(),
                    source: c.clone(),
                    sink: l.clone(),
                });
            }
        }
    }
    let span = Span::from_pairs(nodes, edges);
    has_created(r1, &span).then_some(span)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub source: String,
    pub sink: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraphResult {
    pub rules: Vec<String>,
    pub edges: Vec<DependencyEdge>,
    pub reasons: Vec<DependencyReason>,
}

impl DependencyGraphResult {
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|e| (e.source.clone(), e.sink.clone()))
            .collect()
    }

    pub fn reasons_for(&self, source: &str, sink: &str) -> Vec<&DependencyReason> {
        self.reasons
            .iter()
            .filter(|r| r.source_rule == source && r.sink_rule == sink)
            .collect()
    }
}

/// Dependency graph over the analysed (non-bootstrap) rules. Pairs are
/// evaluated in parallel and merged in pair order.
pub fn dependency_graph(rules: &[Rule]) -> Result<DependencyGraphResult, DependencyError> {
    let api: Vec<&Rule> = rules.iter().filter(|r| !r.is_bootstrap()).collect();
    let pairs: Vec<(&Rule, &Rule)> = api
        .iter()
        .flat_map(|a| api.iter().map(move |b| (*a, *b)))
        .collect();
    let results: Vec<Result<Vec<DependencyReason>, DependencyError>> = pairs
        .par_iter()
        .map(|(a, b)| dependency_reasons(a, b))
        .collect();
    let mut edges = Vec::new();
    let mut reasons = Vec::new();
    for ((a, b), res) in pairs.iter().zip(results) {
        let rs = res?;
        if !rs.is_empty() {
            edges.push(DependencyEdge {
                source: a.name().to_string(),
                sink: b.name().to_string(),
                reasons: rs.iter().map(|r| r.id.clone()).collect(),
            });
            reasons.extend(rs);
        }
    }
    Ok(DependencyGraphResult {
        rules: api.iter().map(|r| r.name().to_string()).collect(),
        edges,
        reasons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpo::apply;
    use crate::graph::{EdgeType, NodeType, TypeGraph};
    use crate::matching::find_matches;
    use crate::rule::RuleBuilder;
    use std::sync::Arc;
    use ChangeTag::*;

    fn tg() -> Arc<TypeGraph> {
        Arc::new(
            TypeGraph::new(
                vec![
                    NodeType::new("User"),
                    NodeType::new("Repository"),
                    NodeType::new("Project"),
                ],
                vec![
                    EdgeType::new("User.repos", "User", "Repository"),
                    EdgeType::new("Repository.owner", "Repository", "User"),
                    EdgeType::new("User.projects", "User", "Project"),
                ],
            )
            .unwrap(),
        )
    }

    fn create_repo() -> Rule {
        RuleBuilder::new("createRepo")
            .node("u", "User", Preserve)
            .node("r", "Repository", Create)
            .edge("repos", "User.repos", "u", "r", Create)
            .edge("owner", "Repository.owner", "r", "u", Create)
            .build(&tg())
            .unwrap()
    }

    fn update_repo() -> Rule {
        RuleBuilder::new("updateRepo")
            .node("u", "User", Preserve)
            .node("r", "Repository", Preserve)
            .edge("repos", "User.repos", "u", "r", Preserve)
            .edge("owner", "Repository.owner", "r", "u", Preserve)
            .build(&tg())
            .unwrap()
    }

    fn create_project() -> Rule {
        RuleBuilder::new("createProject")
            .node("u", "User", Preserve)
            .node("p", "Project", Create)
            .edge("projects", "User.projects", "u", "p", Create)
            .build(&tg())
            .unwrap()
    }

    #[test]
    fn creation_profile_of_create_repo() {
        let p = creation_profile(&create_repo());
        assert_eq!(p.creation.node_count(), 2);
        assert_eq!(p.creation.edge_count(), 2);
        assert_eq!(p.boundary.node_ids(), ["u".into()].into());
        assert_eq!(
            p.boundary,
            p.creation.intersection(create_repo().interface())
        );
        let read = creation_profile(&update_repo());
        assert!(read.creation.is_empty() && read.boundary.is_empty());
    }

    #[test]
    fn full_rhs_overlap_is_the_only_reason() {
        let rs = dependency_reasons(&create_repo(), &update_repo()).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].span.nodes.len(), 2);
        assert_eq!(rs[0].span.edges.len(), 2);
        assert_eq!(rs[0].id, "createRepo->updateRepo#1");
        assert!(rs[0].minimal);
    }

    #[test]
    fn read_rules_have_no_reasons() {
        assert!(dependency_reasons(&update_repo(), &update_repo())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn independence_verdicts() {
        assert!(universally_sequentially_independent(&create_project(), &update_repo()).unwrap());
        assert!(!universally_sequentially_independent(&create_repo(), &update_repo()).unwrap());
    }

    #[test]
    fn concrete_pair_classification_and_extraction() {
        let (r1, r2) = (create_repo(), update_repo());
        let mut g = InstanceGraph::new();
        g.add_node("me", "User").unwrap();
        let m1 = find_matches(r1.lhs(), &g, &Morphism::new()).remove(0);
        let t1 = apply(&r1, &g, &m1).unwrap();
        let m2 = find_matches(r2.lhs(), &t1.result, &Morphism::new()).remove(0);
        let t2 = apply(&r2, &t1.result, &m2).unwrap();
        assert_eq!(
            classify_transformation_pair(&t1, &t2).unwrap(),
            PairClass::ProduceUse
        );
        let span = extract_reason(&r1, &t1, &t2).unwrap();
        assert_eq!(span, dependency_reasons(&r1, &r2).unwrap()[0].span);

        let p = create_project();
        // updateRepo needs a repository that createProject did not create
        let mut h = g.clone();
        h.add_node("r0", "Repository").unwrap();
        h.add_edge("x", "User.repos", "me", "r0").unwrap();
        h.add_edge("y", "Repository.owner", "r0", "me").unwrap();
        let mp = find_matches(p.lhs(), &h, &Morphism::new()).remove(0);
        let tp = apply(&p, &h, &mp).unwrap();
        let mu = find_matches(r2.lhs(), &tp.result, &Morphism::new()).remove(0);
        let tu = apply(&r2, &tp.result, &mu).unwrap();
        assert_eq!(
            classify_transformation_pair(&tp, &tu).unwrap(),
            PairClass::Independent
        );
        assert!(extract_reason(&p, &tp, &tu).is_none());
        assert_eq!(
            classify_transformation_pair(&tu, &tp),
            Err(DependencyError::ChainingMismatch)
        );
    }

    #[test]
    fn partial_injections_count() {
        // one User node into two User nodes: unmapped + two choices
        let mut a = InstanceGraph::new();
        a.add_node("u", "User").unwrap();
        let mut b = InstanceGraph::new();
        b.add_node("x", "User").unwrap();
        b.add_node("y", "User").unwrap();
        assert_eq!(partial_injections(&a, &b).len(), 3);
    }

    #[test]
    fn dependency_graph_is_deterministic() {
        let rules = vec![create_repo(), update_repo(), create_project()];
        let a = dependency_graph(&rules).unwrap();
        let b = dependency_graph(&rules).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.edge_set(),
            [("createRepo".to_string(), "updateRepo".to_string())].into()
        );
        assert!(dependency_graph(&[]).unwrap().edges.is_empty());
    }
}
