//! Tainted type graphs, source/sink classification, tainted information
//! flow and the analyst review ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependency::{dependency_reasons, universally_sequentially_independent, DependencyError, DependencyReason};
use crate::graph::TypeGraph;
use crate::rule::{ChangeTag, Rule};

#[derive(Debug, Error)]
pub enum TaintError {
    #[error("tainted type `{0}` is not a node type")]
    UnknownType(String),
    #[error("rule `{0}` is typed over a different type graph")]
    TypeGraphMismatch(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("review ledger references unknown reason `{0}`")]
    UnknownReason(String),
    #[error("review ledger lists reason `{0}` more than once")]
    DuplicateReview(String),
    #[error(transparent)]
    Dependency(#[from] DependencyError),
}

/// A type graph with a set of sensitive node types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintedTypeGraph {
    type_graph: Arc<TypeGraph>,
    tainted: BTreeSet<String>,
}

impl TaintedTypeGraph {
    pub fn new(type_graph: Arc<TypeGraph>, tainted: BTreeSet<String>) -> Result<Self, TaintError> {
        if let Some(t) = tainted.iter().find(|t| type_graph.node_type(t).is_none()) {
            return Err(TaintError::UnknownType(t.clone()));
        }
        Ok(TaintedTypeGraph { type_graph, tainted })
    }

    pub fn type_graph(&self) -> &Arc<TypeGraph> {
        &self.type_graph
    }

    pub fn tainted(&self) -> &BTreeSet<String> {
        &self.tainted
    }

    pub fn is_tainted(&self, ty: &str) -> bool {
        self.tainted.contains(ty)
    }
}

/// Rules of the API surface together with their source and sink roles per
/// tainted type. Bootstrap rules are kept for setup synthesis but never
/// classified.
#[derive(Debug, Clone)]
pub struct TaintedGraphAPI {
    graph: TaintedTypeGraph,
    rules: Vec<Rule>,
    sources: BTreeMap<String, BTreeSet<String>>,
    sinks: BTreeMap<String, BTreeSet<String>>,
}

/// Serializable view of the classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub tainted: BTreeSet<String>,
    /// Tainted type -> rules creating a node of that type.
    pub sources: BTreeMap<String, BTreeSet<String>>,
    /// Tainted type -> rules whose left-hand side contains that type.
    pub sinks: BTreeMap<String, BTreeSet<String>>,
}

impl TaintedGraphAPI {
    pub fn graph(&self) -> &TaintedTypeGraph {
        &self.graph
    }

    /// All rules, bootstrap rules included.
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn api_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| !r.is_bootstrap())
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name() == name)
    }

    pub fn sources_of(&self, ty: &str) -> BTreeSet<String> {
        self.sources.get(ty).cloned().unwrap_or_default()
    }

    pub fn sinks_of(&self, ty: &str) -> BTreeSet<String> {
        self.sinks.get(ty).cloned().unwrap_or_default()
    }

    pub fn source_rules(&self) -> BTreeSet<String> {
        self.sources.values().flatten().cloned().collect()
    }

    pub fn sink_rules(&self) -> BTreeSet<String> {
        self.sinks.values().flatten().cloned().collect()
    }

    /// Ordered (source, sink) pairs sharing a tainted type, in rule order.
    pub fn flow_pairs(&self) -> Vec<(String, String)> {
        let mut set = BTreeSet::new();
        for (ty, srcs) in &self.sources {
            for s in srcs {
                for k in self.sinks.get(ty).into_iter().flatten() {
                    set.insert((s.clone(), k.clone()));
                }
            }
        }
        let pos: BTreeMap<&str, usize> = self.rules.iter().enumerate().map(|(i, r)| (r.name(), i)).collect();
        let mut out: Vec<_> = set.into_iter().collect();
        out.sort_by_key(|(a, b)| (pos[a.as_str()], pos[b.as_str()]));
        out
    }

    pub fn classification(&self) -> Classification {
        Classification {
            tainted: self.graph.tainted.clone(),
            sources: self.sources.clone(),
            sinks: self.sinks.clone(),
        }
    }
}

pub fn classify_sources_sinks(rules: &[Rule], graph: &TaintedTypeGraph) -> Result<TaintedGraphAPI, TaintError> {
    let mut sources: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut sinks: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in rules {
        if **r.type_graph() != *graph.type_graph {
            return Err(TaintError::TypeGraphMismatch(r.name().to_string()));
        }
        if r.is_bootstrap() {
            continue;
        }
        for ty in r.created_types().intersection(&graph.tainted) {
            sources.entry(ty.clone()).or_default().insert(r.name().to_string());
        }
        for ty in r.lhs_types().intersection(&graph.tainted) {
            sinks.entry(ty.clone()).or_default().insert(r.name().to_string());
        }
    }
    Ok(TaintedGraphAPI {
        graph: graph.clone(),
        rules: rules.to_vec(),
        sources,
        sinks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Unreviewed,
    Secured,
    Unsecured,
}

/// One analyst verdict in the review ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub reason_id: String,
    pub status: ReviewStatus,
    #[serde(default)]
    pub rationale: String,
    /// Analyst assertion that the policy is stable under shift for this
    /// flow; required by the independence-based soundness argument.
    #[serde(default)]
    pub policy_stable_under_shift: bool,
}

pub type ReviewLedger = Vec<ReviewEntry>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintedFlow {
    pub reasons: Vec<DependencyReason>,
    /// Reason id -> review; absent means unreviewed.
    #[serde(default)]
    pub reviews: BTreeMap<String, ReviewEntry>,
}

impl TaintedFlow {
    pub fn reason(&self, id: &str) -> Option<&DependencyReason> {
        self.reasons.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.reasons.iter().map(|r| r.id.clone()).collect()
    }

    pub fn status(&self, id: &str) -> ReviewStatus {
        self.reviews.get(id).map_or(ReviewStatus::Unreviewed, |e| e.status)
    }

    fn with_status(&self, s: ReviewStatus) -> BTreeSet<String> {
        self.reasons
            .iter()
            .filter(|r| self.status(&r.id) == s)
            .map(|r| r.id.clone())
            .collect()
    }

    /// Reasons confirmed as covered by the documented policy.
    pub fn secured(&self) -> BTreeSet<String> {
        self.with_status(ReviewStatus::Secured)
    }

    /// Reasons reviewed as not covered by the documented policy.
    pub fn unsecured(&self) -> BTreeSet<String> {
        self.with_status(ReviewStatus::Unsecured)
    }

    pub fn unreviewed(&self) -> BTreeSet<String> {
        self.with_status(ReviewStatus::Unreviewed)
    }

    pub fn is_fully_reviewed(&self) -> bool {
        self.unreviewed().is_empty()
    }

    /// Distinct (source, sink) pairs with at least one reason.
    pub fn pairs(&self) -> BTreeSet<(String, String)> {
        self.reasons
            .iter()
            .map(|r| (r.source_rule.clone(), r.sink_rule.clone()))
            .collect()
    }

    /// A ledger skeleton listing every reason as unreviewed.
    pub fn ledger_template(&self) -> ReviewLedger {
        self.reasons
            .iter()
            .map(|r| {
                self.reviews.get(&r.id).cloned().unwrap_or(ReviewEntry {
                    reason_id: r.id.clone(),
                    status: ReviewStatus::Unreviewed,
                    rationale: String::new(),
                    policy_stable_under_shift: false,
                })
            })
            .collect()
    }
}

/// Union of the dependency reasons over every (source, sink) pair that
/// shares a tainted type. Each reason's `tainted` flag records whether its
/// span identifies a created node of a tainted type.
pub fn tainted_flow(api: &TaintedGraphAPI) -> Result<TaintedFlow, TaintError> {
    let mut reasons = Vec::new();
    for (s, k) in api.flow_pairs() {
        let src = api.rule(&s).ok_or_else(|| TaintError::UnknownRule(s.clone()))?;
        let snk = api.rule(&k).ok_or_else(|| TaintError::UnknownRule(k.clone()))?;
        for mut reason in dependency_reasons(src, snk)? {
            reason.tainted = reason.uses_created_type(src, api.graph.tainted());
            reasons.push(reason);
        }
    }
    Ok(TaintedFlow {
        reasons,
        reviews: BTreeMap::new(),
    })
}

/// Replaces the flow's reviews with the ledger's. Entries marked
/// `unreviewed` are accepted and leave the reason unreviewed.
pub fn apply_review(flow: &TaintedFlow, ledger: &[ReviewEntry]) -> Result<TaintedFlow, TaintError> {
    let ids = flow.ids();
    let mut reviews = BTreeMap::new();
    for e in ledger {
        if !ids.contains(&e.reason_id) {
            return Err(TaintError::UnknownReason(e.reason_id.clone()));
        }
        if reviews.contains_key(&e.reason_id) {
            return Err(TaintError::DuplicateReview(e.reason_id.clone()));
        }
        if e.status != ReviewStatus::Unreviewed {
            reviews.insert(e.reason_id.clone(), e.clone());
        }
    }
    Ok(TaintedFlow {
        reasons: flow.reasons.clone(),
        reviews,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremVerdict {
    Both,
    Condition1,
    Condition2,
    Neither,
}

pub const SHIFT_CAVEAT: &str =
    "the policy must additionally be stable under shift; this is an analyst assertion and is not computed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub source: String,
    pub sink: String,
    /// `(source, r)` is independent for every rule `r` other than the sink.
    pub condition1: bool,
    /// `(r, sink)` is independent for every rule `r` other than the source.
    pub condition2: bool,
    pub verdict: TheoremVerdict,
    /// Ordered pairs that break condition 1 or condition 2.
    pub violations1: Vec<(String, String)>,
    pub violations2: Vec<(String, String)>,
    pub reason_count: usize,
    /// No direct reason and neither condition: the pair may still depend on
    /// each other through intermediate steps that static analysis misses.
    pub potential_indirect_blind_spot: bool,
    pub caveat: String,
}

/// Checks the sequential-independence preconditions under which the direct
/// analysis is sound for a pair, quantifying over the non-bootstrap rules.
pub fn check_theorem_conditions(api: &TaintedGraphAPI, source: &str, sink: &str) -> Result<TheoremCheck, TaintError> {
    let src = api.rule(source).ok_or_else(|| TaintError::UnknownRule(source.into()))?;
    let snk = api.rule(sink).ok_or_else(|| TaintError::UnknownRule(sink.into()))?;
    let mut violations1 = Vec::new();
    let mut violations2 = Vec::new();
    for r in api.api_rules() {
        if r.name() != sink && !universally_sequentially_independent(src, r)? {
            violations1.push((source.to_string(), r.name().to_string()));
        }
        if r.name() != source && !universally_sequentially_independent(r, snk)? {
            violations2.push((r.name().to_string(), sink.to_string()));
        }
    }
    let (c1, c2) = (violations1.is_empty(), violations2.is_empty());
    let verdict = match (c1, c2) {
        (true, true) => TheoremVerdict::Both,
        (true, false) => TheoremVerdict::Condition1,
        (false, true) => TheoremVerdict::Condition2,
        (false, false) => TheoremVerdict::Neither,
    };
    let reason_count = dependency_reasons(src, snk)?.len();
    Ok(TheoremCheck {
        source: source.into(),
        sink: sink.into(),
        condition1: c1,
        condition2: c2,
        verdict,
        violations1,
        violations2,
        reason_count,
        potential_indirect_blind_spot: reason_count == 0 && verdict == TheoremVerdict::Neither,
        caveat: SHIFT_CAVEAT.into(),
    })
}

/// True when some node of `rule` has the tag and a type in `types`; the
/// direct tag scan that classification must agree with.
pub fn has_tagged_type(rule: &Rule, tag: ChangeTag, types: &BTreeSet<String>) -> bool {
    rule.spec().nodes.iter().any(|n| n.tag == tag && types.contains(&n.ty))
}
