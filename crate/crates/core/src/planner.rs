//! Taint-test model and synthesis: role orders, policy tables, setup
//! prefixes, minimal flow tests, role-coverage augmentation and the two
//! coverage checkers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependency::{extract_reason, DependencyReason};
use crate::dpo::{apply, apply_inverse, apply_with, DirectTransformation, IdGenerator};
use crate::graph::{InstanceGraph, Morphism, NodeId};
use crate::iso::canonical_form;
use crate::matching::{check_dangling, find_first_match, find_matches};
use crate::rule::{ChangeTag, Rule};
use crate::taint::{ReviewStatus, TaintedFlow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("role order has a cycle between `{0}` and `{1}`")]
    Cycle(String, String),
    #[error("duplicate role `{0}`")]
    DuplicateRole(String),
    #[error("policy for `{rule}` allows `{lower}` but not the higher role `{higher}`")]
    NotUpwardClosed { rule: String, lower: String, higher: String },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("no rule sequence of length <= {depth} makes `{target}` applicable; unmatched: {missing:?}")]
    SetupFailed {
        target: String,
        depth: usize,
        missing: Vec<String>,
    },
    #[error("reason `{0}` cannot be realised from the empty graph: {1}")]
    Unrealisable(String, String),
    #[error("no role may execute `{0}`")]
    NoAllowedRole(String),
    #[error("{0} reasons are unreviewed; review them or include unreviewed reasons explicitly")]
    Unreviewed(usize),
}

// ------------------------------------------------------------------ roles

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RoleSpecDoc {
    roles: Vec<String>,
    #[serde(default)]
    order: Vec<(String, String)>,
    #[serde(default)]
    principals: BTreeMap<String, String>,
}

/// A finite role set with a partial order, stored as its
/// reflexive-transitive closure. `order` pairs read `[lower, higher]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RoleSpecDoc", into = "RoleSpecDoc")]
pub struct RoleSpec {
    roles: Vec<String>,
    order: Vec<(String, String)>,
    closure: BTreeSet<(String, String)>,
    principals: BTreeMap<String, String>,
}

impl TryFrom<RoleSpecDoc> for RoleSpec {
    type Error = PlanError;
    fn try_from(d: RoleSpecDoc) -> Result<Self, PlanError> {
        RoleSpec::new(d.roles, d.order, d.principals)
    }
}

impl From<RoleSpec> for RoleSpecDoc {
    fn from(r: RoleSpec) -> Self {
        RoleSpecDoc {
            roles: r.roles,
            order: r.order,
            principals: r.principals,
        }
    }
}

impl RoleSpec {
    pub fn new(
        roles: Vec<String>,
        order: Vec<(String, String)>,
        principals: BTreeMap<String, String>,
    ) -> Result<Self, PlanError> {
        let mut seen = BTreeSet::new();
        for r in &roles {
            if !seen.insert(r.clone()) {
                return Err(PlanError::DuplicateRole(r.clone()));
            }
        }
        for (a, b) in order.iter().map(|(a, b)| (a, b)).chain(principals.keys().map(|k| (k, k))) {
            for x in [a, b] {
                if !seen.contains(x) {
                    return Err(PlanError::UnknownRole(x.clone()));
                }
            }
        }
        let mut closure: BTreeSet<(String, String)> = roles.iter().map(|r| (r.clone(), r.clone())).collect();
        closure.extend(order.iter().cloned());
        loop {
            let mut added = Vec::new();
            for (a, b) in &closure {
                for (c, d) in closure.range((b.clone(), String::new())..) {
                    if c != b {
                        break;
                    }
                    if !closure.contains(&(a.clone(), d.clone())) {
                        added.push((a.clone(), d.clone()));
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            closure.extend(added);
        }
        for (a, b) in &closure {
            if a != b && closure.contains(&(b.clone(), a.clone())) {
                return Err(PlanError::Cycle(a.clone(), b.clone()));
            }
        }
        Ok(RoleSpec {
            roles,
            order,
            closure,
            principals,
        })
    }

    /// Roles in declaration order.
    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn contains(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }

    /// Role -> environment variable holding its token.
    pub fn principals(&self) -> &BTreeMap<String, String> {
        &self.principals
    }

    pub fn leq(&self, a: &str, b: &str) -> bool {
        self.closure.contains(&(a.to_string(), b.to_string()))
    }

    /// Strict order: `a > b`.
    pub fn gt(&self, a: &str, b: &str) -> bool {
        a != b && self.leq(b, a)
    }

    /// Roles with no strictly smaller role.
    pub fn least_privileged(&self) -> Vec<String> {
        self.minimal_of(&self.roles.iter().cloned().collect())
    }

    pub fn maximal_of(&self, set: &BTreeSet<String>) -> Vec<String> {
        self.roles
            .iter()
            .filter(|r| set.contains(*r) && !set.iter().any(|o| self.gt(o, r)))
            .cloned()
            .collect()
    }

    pub fn minimal_of(&self, set: &BTreeSet<String>) -> Vec<String> {
        self.roles
            .iter()
            .filter(|r| set.contains(*r) && !set.iter().any(|o| self.gt(r, o)))
            .cloned()
            .collect()
    }

    pub fn closure(&self) -> &BTreeSet<(String, String)> {
        &self.closure
    }
}

// ----------------------------------------------------------------- policy

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RulePolicy {
    pub allowed: BTreeSet<String>,
    /// The executing principal must have created the nodes it addresses.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub creator_only: bool,
    /// Opt out of the upward-closure check for deliberately odd policies.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub non_monotone: bool,
}

/// Rule x role access table. Rules without an entry are denied to every
/// role.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyAnnotation {
    pub rules: BTreeMap<String, RulePolicy>,
}

impl PolicyAnnotation {
    pub fn validate(&self, roles: &RoleSpec) -> Result<(), PlanError> {
        for (rule, p) in &self.rules {
            for a in &p.allowed {
                if !roles.contains(a) {
                    return Err(PlanError::UnknownRole(a.clone()));
                }
                if p.non_monotone {
                    continue;
                }
                for b in roles.roles() {
                    if roles.gt(b, a) && !p.allowed.contains(b) {
                        return Err(PlanError::NotUpwardClosed {
                            rule: rule.clone(),
                            lower: a.clone(),
                            higher: b.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn allowed_roles(&self, rule: &str) -> BTreeSet<String> {
        self.rules.get(rule).map(|p| p.allowed.clone()).unwrap_or_default()
    }

    pub fn allows_role(&self, rule: &str, role: &str) -> bool {
        self.rules.get(rule).is_some_and(|p| p.allowed.contains(role))
    }

    pub fn creator_only(&self, rule: &str) -> bool {
        self.rules.get(rule).is_some_and(|p| p.creator_only)
    }

    /// Full access decision. `creators` lists, for each node addressed by a
    /// call variable, the principal that created it (if recorded).
    pub fn allows(&self, rule: &str, role: &str, principal: &str, creators: &[Option<&str>]) -> bool {
        self.allows_role(rule, role)
            && (!self.creator_only(rule) || creators.iter().flatten().all(|c| *c == principal))
    }
}

// ------------------------------------------------------------- test model

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPhase {
    Setup,
    Source,
    Sink,
}

/// Symbolic reference to a node returned by an earlier step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingHint {
    /// Index of the producing step within the test.
    pub step: usize,
    /// Right-hand-side node of that step's rule.
    pub node: NodeId,
    /// Response path `<operation>.<node>` the runner reads the id from.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestStep {
    pub rule: String,
    pub operation: String,
    pub role: String,
    pub phase: StepPhase,
    #[serde(default)]
    pub bindings: BTreeMap<String, BindingHint>,
    /// Overrides the runner's default authorization scheme for this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_scheme: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Flow,
    RoleCoverage,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintTest {
    pub id: String,
    pub kind: TestKind,
    pub steps: Vec<TestStep>,
    /// True for positive tests, false for negative ones.
    pub expected_access: bool,
    #[serde(default)]
    pub reasons: Vec<String>,
    #[serde(default)]
    pub role_pairs: Vec<(String, String)>,
}

impl TaintTest {
    pub fn is_positive(&self) -> bool {
        self.expected_access
    }

    /// Role pairs `(role_i, role_j)`, `i < j`, over source and sink steps.
    pub fn compute_role_pairs(&self) -> Vec<(String, String)> {
        let core: Vec<&TestStep> = self.steps.iter().filter(|s| s.phase != StepPhase::Setup).collect();
        let mut out = BTreeSet::new();
        for i in 0..core.len() {
            for j in i + 1..core.len() {
                out.insert((core[i].role.clone(), core[j].role.clone()));
            }
        }
        out.into_iter().collect()
    }

    pub fn source_sink_roles(&self) -> Option<(&str, &str)> {
        let s = self.steps.iter().find(|s| s.phase == StepPhase::Source)?;
        let k = self.steps.iter().find(|s| s.phase == StepPhase::Sink)?;
        Some((&s.role, &k.role))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPlan {
    pub roles: RoleSpec,
    pub tests: Vec<TaintTest>,
    /// Reasons for which every role may run the sink.
    #[serde(default)]
    pub negative_infeasible: BTreeSet<String>,
    /// Role-coverage obligations no reason can realise.
    #[serde(default)]
    pub impossible_role_obligations: Vec<String>,
}

impl TestPlan {
    pub fn flow_tests(&self) -> impl Iterator<Item = &TaintTest> {
        self.tests.iter().filter(|t| t.kind == TestKind::Flow)
    }

    pub fn role_tests(&self) -> impl Iterator<Item = &TaintTest> {
        self.tests.iter().filter(|t| t.kind == TestKind::RoleCoverage)
    }
}

// ---------------------------------------------------------------- execution

/// The first match of `rule` in `host` extending `seed` at which the rule
/// applies (dangling condition included). Shared by local simulation and
/// the mock target so both pick the same match.
pub fn first_applicable_match(rule: &Rule, host: &InstanceGraph, seed: &Morphism) -> Option<Morphism> {
    let deleted_nodes = rule.nodes_tagged(ChangeTag::Delete);
    let deleted_edges = rule.edges_tagged(ChangeTag::Delete);
    find_first_match(rule.lhs(), host, seed, |m| {
        check_dangling(host, m, &deleted_nodes, &deleted_edges)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulationError {
    #[error("step {step}: unknown rule `{rule}`")]
    UnknownRule { step: usize, rule: String },
    #[error("step {step}: unresolved binding `{path}`")]
    Binding { step: usize, path: String },
    #[error("step {step}: `{rule}` has no applicable match")]
    NoMatch { step: usize, rule: String },
}

/// Outcome of executing a test on the formal model.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub transformations: Vec<DirectTransformation>,
    /// Step-wise access decisions under the policy.
    pub allowed: Vec<bool>,
}

/// Runs a test from the empty graph, ignoring the policy for the state
/// transition but recording each step's access decision.
pub fn simulate(test: &TaintTest, rules: &[Rule], policy: &PolicyAnnotation) -> Result<Simulation, SimulationError> {
    let mut host = InstanceGraph::new();
    let mut ids = IdGenerator::new();
    let mut creators: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut out = Vec::new();
    let mut allowed = Vec::new();
    for (k, step) in test.steps.iter().enumerate() {
        let rule = rules.iter().find(|r| r.name() == step.rule).ok_or_else(|| SimulationError::UnknownRule {
            step: k,
            rule: step.rule.clone(),
        })?;
        let mut seed = Morphism::new();
        for (var, hint) in &step.bindings {
            let id = (hint.step < k)
                .then(|| out.get(hint.step))
                .flatten()
                .and_then(|t: &DirectTransformation| t.comatch.node(&hint.node).cloned());
            match (id, rule.bindings().get(var)) {
                (Some(id), Some(l)) => {
                    seed.nodes.insert(l.clone(), id);
                }
                _ => {
                    return Err(SimulationError::Binding {
                        step: k,
                        path: hint.path.clone(),
                    })
                }
            }
        }
        let m = first_applicable_match(rule, &host, &seed).ok_or_else(|| SimulationError::NoMatch {
            step: k,
            rule: step.rule.clone(),
        })?;
        let addressed: Vec<Option<&str>> = rule
            .bindings()
            .values()
            .filter_map(|l| m.node(l))
            .map(|h| creators.get(h).map(String::as_str))
            .collect();
        allowed.push(policy.allows(&step.rule, &step.role, &step.role, &addressed));
        let t = apply_with(rule, &host, &m, &mut ids).map_err(|_| SimulationError::NoMatch {
            step: k,
            rule: step.rule.clone(),
        })?;
        for n in t.created_nodes() {
            creators.insert(n, step.role.clone());
        }
        host = t.result.clone();
        out.push(t);
    }
    Ok(Simulation {
        transformations: out,
        allowed,
    })
}

// ------------------------------------------------------------------ setup

/// A concrete rule sequence from some start graph.
#[derive(Debug, Clone)]
pub struct SetupPath {
    pub steps: Vec<DirectTransformation>,
    pub host: InstanceGraph,
}

fn setup_rules(rules: &[Rule]) -> Vec<&Rule> {
    rules
        .iter()
        .filter(|r| r.nodes_tagged(ChangeTag::Delete).is_empty() && r.edges_tagged(ChangeTag::Delete).is_empty())
        .collect()
}

/// Breadth-first search over applications of non-deleting rules from
/// `initial` until `pattern` embeds. Hosts are deduplicated up to
/// isomorphism; the first (shortest) path found is returned.
pub fn synthesize_setup_for(
    target: &str,
    pattern: &InstanceGraph,
    initial: &InstanceGraph,
    rules: &[Rule],
    depth_bound: usize,
) -> Result<SetupPath, PlanError> {
    let candidates = setup_rules(rules);
    let start = SetupPath {
        steps: Vec::new(),
        host: initial.clone(),
    };
    let mut seen = BTreeSet::from([canonical_form(initial)]);
    let mut queue = VecDeque::from([start]);
    let mut present: BTreeSet<String> = initial.nodes().map(|(_, t)| t.to_string()).collect();
    while let Some(path) = queue.pop_front() {
        if crate::matching::embeds(pattern, &path.host) {
            return Ok(path);
        }
        if path.steps.len() >= depth_bound {
            continue;
        }
        for r in &candidates {
            for m in find_matches(r.lhs(), &path.host, &Morphism::new()) {
                let Ok(t) = apply(r, &path.host, &m) else { continue };
                if !seen.insert(canonical_form(&t.result)) {
                    continue;
                }
                present.extend(t.result.nodes().map(|(_, ty)| ty.to_string()));
                let mut steps = path.steps.clone();
                let host = t.result.clone();
                steps.push(t);
                queue.push_back(SetupPath { steps, host });
            }
        }
    }
    let mut missing: Vec<String> = pattern
        .nodes()
        .filter(|(_, t)| !present.contains(*t))
        .map(|(n, t)| format!("{n}: {t}"))
        .collect();
    if missing.is_empty() {
        missing = pattern.nodes().map(|(n, t)| format!("{n}: {t}")).collect();
    }
    Err(PlanError::SetupFailed {
        target: target.to_string(),
        depth: depth_bound,
        missing,
    })
}

/// Shortest prefix after which `rule` becomes applicable.
pub fn synthesize_setup(
    rule: &Rule,
    initial: &InstanceGraph,
    rules: &[Rule],
    depth_bound: usize,
) -> Result<Vec<String>, PlanError> {
    let path = synthesize_setup_for(rule.name(), rule.lhs(), initial, rules, depth_bound)?;
    Ok(path.steps.iter().map(|t| t.rule.clone()).collect())
}

// ------------------------------------------------------------- generation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerOptions {
    pub include_unreviewed: bool,
    pub setup_depth: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            include_unreviewed: false,
            setup_depth: 4,
        }
    }
}

/// Everything needed to turn reasons into concrete tests.
pub struct Planner<'a> {
    pub rules: &'a [Rule],
    pub roles: &'a RoleSpec,
    pub policy: &'a PolicyAnnotation,
    pub options: PlannerOptions,
}

/// A reason instantiated from the empty graph: setup path, then the source
/// and sink transformations.
struct Instance {
    steps: Vec<DirectTransformation>,
    setup_len: usize,
}

impl<'a> Planner<'a> {
    fn rule(&self, name: &str) -> Result<&'a Rule, PlanError> {
        self.rules
            .iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| PlanError::UnknownRule(name.to_string()))
    }

    fn instantiate(&self, reason: &DependencyReason) -> Result<Instance, PlanError> {
        let bad = |msg: String| PlanError::Unrealisable(reason.id.clone(), msg);
        let r1 = self.rule(&reason.source_rule)?;
        let r2 = self.rule(&reason.sink_rule)?;
        let (g1, m1) = apply_inverse(r1, &reason.host, &reason.source_comatch).map_err(|e| bad(e.to_string()))?;
        let path = synthesize_setup_for(r1.name(), &g1, &InstanceGraph::new(), self.rules, self.options.setup_depth)?;
        let mut ids = IdGenerator::new();
        let mut host = InstanceGraph::new();
        let mut steps = Vec::new();
        // search ids -> replay ids; the search used a fresh generator per step
        let mut rename = Morphism::new();
        for t in &path.steps {
            let rule = self.rule(&t.rule)?;
            let m = t.matching.then(&rename);
            if m.validate(rule.lhs(), &host, true).is_err() {
                return Err(bad(format!("setup step `{}` does not replay", t.rule)));
            }
            let r = apply_with(rule, &host, &m, &mut ids).map_err(|e| bad(e.to_string()))?;
            for (x, v) in &t.comatch.nodes {
                rename.nodes.insert(v.clone(), r.comatch.nodes[x].clone());
            }
            for (x, v) in &t.comatch.edges {
                rename.edges.insert(v.clone(), r.comatch.edges[x].clone());
            }
            host = r.result.clone();
            steps.push(r);
        }
        let setup_len = steps.len();
        let deleted: BTreeSet<NodeId> = r1.nodes_tagged(ChangeTag::Delete);
        let deleted_edges = r1.edges_tagged(ChangeTag::Delete);
        let embeddings = find_matches(&g1, &host, &Morphism::new());
        for e in embeddings {
            let src_match = m1.then(&e);
            if !check_dangling(&host, &src_match, &deleted, &deleted_edges) {
                continue;
            }
            let mut ids_try = ids.clone();
            let Ok(ts) = apply_with(r1, &host, &src_match, &mut ids_try) else { continue };
            // H1 -> H: created elements follow the comatch, the rest follow e
            let inv = reason.source_comatch.inverse();
            let mut h = Morphism::new();
            for (n, _) in reason.host.nodes() {
                let img = match inv.node(n) {
                    Some(x) if r1.node_tag(x) == Some(ChangeTag::Create) => ts.comatch.node(x).cloned(),
                    _ => e.node(n).cloned(),
                };
                if let Some(i) = img {
                    h.nodes.insert(n.clone(), i);
                }
            }
            for (x, _) in reason.host.edges() {
                let img = match inv.edge(x) {
                    Some(y) if r1.edge_tag(y) == Some(ChangeTag::Create) => ts.comatch.edge(y).cloned(),
                    _ => e.edge(x).cloned(),
                };
                if let Some(i) = img {
                    h.edges.insert(x.clone(), i);
                }
            }
            let snk_match = reason.sink_match.then(&h);
            if snk_match.validate(r2.lhs(), &ts.result, true).is_err() {
                continue;
            }
            let Ok(tk) = apply_with(r2, &ts.result, &snk_match, &mut ids_try) else { continue };
            if extract_reason(r1, &ts, &tk).as_ref() != Some(&reason.span) {
                continue;
            }
            steps.push(ts);
            steps.push(tk);
            return Ok(Instance { steps, setup_len });
        }
        Err(bad("no embedding of the minimal pre-host realises the overlap".into()))
    }

    fn role_for_setup(&self, rule: &str, preferred: &str) -> Result<String, PlanError> {
        if self.policy.allows_role(rule, preferred) {
            return Ok(preferred.to_string());
        }
        self.roles
            .maximal_of(&self.policy.allowed_roles(rule))
            .into_iter()
            .next()
            .ok_or_else(|| PlanError::NoAllowedRole(rule.to_string()))
    }

    /// Builds a test for `reason` with the given source and sink roles.
    /// The expected outcome follows the policy.
    pub fn build_test(
        &self,
        id: &str,
        kind: TestKind,
        reason: &DependencyReason,
        source_role: &str,
        sink_role: &str,
    ) -> Result<TaintTest, PlanError> {
        for r in [source_role, sink_role] {
            if !self.roles.contains(r) {
                return Err(PlanError::UnknownRole(r.to_string()));
            }
        }
        let inst = self.instantiate(reason)?;
        let mut steps = Vec::new();
        for (k, t) in inst.steps.iter().enumerate() {
            let rule = self.rule(&t.rule)?;
            let (phase, role) = if k < inst.setup_len {
                (StepPhase::Setup, self.role_for_setup(&t.rule, source_role)?)
            } else if k == inst.setup_len {
                (StepPhase::Source, source_role.to_string())
            } else {
                (StepPhase::Sink, sink_role.to_string())
            };
            let mut bindings = BTreeMap::new();
            for (var, l) in rule.bindings() {
                let Some(h) = t.matching.node(l) else { continue };
                let producer = inst.steps[..k]
                    .iter()
                    .position(|p| p.created_nodes().contains(h))
                    .or_else(|| inst.steps[..k].iter().position(|p| p.comatch.node_image().contains(h)));
                if let Some(j) = producer {
                    let node = inst.steps[j]
                        .comatch
                        .nodes
                        .iter()
                        .find(|(_, v)| *v == h)
                        .map(|(n, _)| n.clone())
                        .expect("producer maps the node");
                    let op = self.rule(&inst.steps[j].rule)?.operation().to_string();
                    bindings.insert(
                        var.clone(),
                        BindingHint {
                            step: j,
                            path: format!("{op}.{node}"),
                            node,
                        },
                    );
                }
            }
            steps.push(TestStep {
                rule: t.rule.clone(),
                operation: rule.operation().to_string(),
                role,
                phase,
                bindings,
                auth_scheme: None,
            });
        }
        let mut test = TaintTest {
            id: id.to_string(),
            kind,
            steps,
            expected_access: true,
            reasons: vec![reason.id.clone()],
            role_pairs: Vec::new(),
        };
        let sim = simulate(&test, self.rules, self.policy)
            .map_err(|e| PlanError::Unrealisable(reason.id.clone(), e.to_string()))?;
        test.expected_access = sim.allowed.iter().all(|a| *a);
        test.role_pairs = test.compute_role_pairs();
        Ok(test)
    }

    fn max_allowed(&self, rule: &str) -> Option<String> {
        self.roles.maximal_of(&self.policy.allowed_roles(rule)).into_iter().next()
    }

    fn min_allowed(&self, rule: &str) -> Option<String> {
        self.roles.minimal_of(&self.policy.allowed_roles(rule)).into_iter().next()
    }

    fn max_denied(&self, rule: &str) -> Option<String> {
        let allowed = self.policy.allowed_roles(rule);
        let denied: BTreeSet<String> = self.roles.roles().iter().filter(|r| !allowed.contains(*r)).cloned().collect();
        self.roles.maximal_of(&denied).into_iter().next()
    }

    /// One positive and one negative test per reason, then role-coverage
    /// companions.
    pub fn generate(&self, flow: &TaintedFlow) -> Result<TestPlan, PlanError> {
        let considered: Vec<&DependencyReason> = flow
            .reasons
            .iter()
            .filter(|r| self.options.include_unreviewed || flow.status(&r.id) != ReviewStatus::Unreviewed)
            .collect();
        let unreviewed = flow.reasons.len() - considered.len();
        if unreviewed > 0 {
            return Err(PlanError::Unreviewed(unreviewed));
        }
        let mut tests = Vec::new();
        let mut negative_infeasible = BTreeSet::new();
        for reason in &considered {
            let src = self
                .max_allowed(&reason.source_rule)
                .ok_or_else(|| PlanError::NoAllowedRole(reason.source_rule.clone()))?;
            let creator_only = self.policy.creator_only(&reason.sink_rule);
            let pos_sink = if creator_only {
                src.clone()
            } else {
                self.min_allowed(&reason.sink_rule)
                    .ok_or_else(|| PlanError::NoAllowedRole(reason.sink_rule.clone()))?
            };
            tests.push(self.build_test(&format!("{}/positive", reason.id), TestKind::Flow, reason, &src, &pos_sink)?);
            let neg_sink = self.max_denied(&reason.sink_rule).or_else(|| {
                creator_only
                    .then(|| {
                        let others: BTreeSet<String> = self
                            .policy
                            .allowed_roles(&reason.sink_rule)
                            .into_iter()
                            .filter(|r| *r != src)
                            .collect();
                        self.roles.maximal_of(&others).into_iter().next()
                    })
                    .flatten()
            });
            match neg_sink {
                Some(k) => {
                    let t = self.build_test(&format!("{}/negative", reason.id), TestKind::Flow, reason, &src, &k)?;
                    if t.expected_access {
                        negative_infeasible.insert(reason.id.clone());
                    } else {
                        tests.push(t);
                    }
                }
                None => {
                    negative_infeasible.insert(reason.id.clone());
                }
            }
        }
        let mut plan = TestPlan {
            roles: self.roles.clone(),
            tests,
            negative_infeasible,
            impossible_role_obligations: Vec::new(),
        };
        self.augment_role_coverage(&mut plan, &considered)?;
        Ok(plan)
    }

    /// Role pair realising `ob` with this reason's rules, if any.
    fn realise(&self, ob: &Obligation, reason: &DependencyReason) -> Option<(String, String)> {
        let (src, snk) = (&reason.source_rule, &reason.sink_rule);
        if !self.policy.allows_role(src, &ob.role) {
            return None;
        }
        let candidates: BTreeSet<String> = self
            .roles
            .roles()
            .iter()
            .filter(|r| {
                let allowed = self.policy.allows_role(snk, r) && (!self.policy.creator_only(snk) || **r == ob.role);
                if ob.positive {
                    self.roles.leq(&ob.role, r) && allowed
                } else {
                    self.roles.gt(&ob.role, r) && !allowed
                }
            })
            .cloned()
            .collect();
        let pick = if ob.positive {
            self.roles.minimal_of(&candidates)
        } else {
            self.roles.maximal_of(&candidates)
        };
        pick.into_iter().next().map(|k| (ob.role.clone(), k))
    }

    fn augment_role_coverage(&self, plan: &mut TestPlan, reasons: &[&DependencyReason]) -> Result<(), PlanError> {
        let mut counter = 0usize;
        let mut next_id = || {
            counter += 1;
            format!("role-coverage-{counter}")
        };
        // one companion per reason, aimed at the first open obligation
        for reason in reasons {
            let open = uncovered_obligations(plan, self.roles);
            let chosen = open.iter().find_map(|ob| self.realise(ob, reason));
            let (a, b) = match chosen {
                Some(p) => p,
                None => {
                    let both: BTreeSet<String> = self
                        .policy
                        .allowed_roles(&reason.source_rule)
                        .intersection(&self.policy.allowed_roles(&reason.sink_rule))
                        .cloned()
                        .collect();
                    match self.roles.maximal_of(&both).into_iter().next() {
                        Some(r) => (r.clone(), r),
                        None => continue,
                    }
                }
            };
            let t = self.build_test(&next_id(), TestKind::RoleCoverage, reason, &a, &b)?;
            plan.tests.push(t);
        }
        // anything still open gets its own test when some reason realises it
        for ob in uncovered_obligations(plan, self.roles) {
            if let Some((reason, (a, b))) = reasons.iter().find_map(|r| self.realise(&ob, r).map(|p| (*r, p))) {
                let t = self.build_test(&next_id(), TestKind::RoleCoverage, reason, &a, &b)?;
                plan.tests.push(t);
            } else {
                plan.impossible_role_obligations.push(ob.to_string());
            }
        }
        Ok(())
    }
}

/// Convenience wrapper around [`Planner::generate`].
pub fn generate_minimal_tests(
    flow: &TaintedFlow,
    rules: &[Rule],
    roles: &RoleSpec,
    policy: &PolicyAnnotation,
    options: PlannerOptions,
) -> Result<TestPlan, PlanError> {
    Planner {
        rules,
        roles,
        policy,
        options,
    }
    .generate(flow)
}

// --------------------------------------------------------------- coverage

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub role: String,
    pub positive: bool,
}

impl std::fmt::Display for Obligation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = if self.positive { "positive" } else { "negative" };
        write!(f, "{kind} test starting with {}", self.role)
    }
}

fn uncovered_obligations(plan: &TestPlan, roles: &RoleSpec) -> Vec<Obligation> {
    let report = check_role_coverage(plan, roles);
    let mut out = Vec::new();
    for r in &report.roles {
        if r.positive == RoleCoverState::Uncovered {
            out.push(Obligation {
                role: r.role.clone(),
                positive: true,
            });
        }
        if r.negative == RoleCoverState::Uncovered {
            out.push(Obligation {
                role: r.role.clone(),
                positive: false,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverState {
    Covered,
    Uncovered,
    /// Every role may run the sink, so no negative test exists.
    NegativeInfeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonCoverage {
    pub reason_id: String,
    pub status: ReviewStatus,
    pub positive: CoverState,
    pub negative: CoverState,
    pub positive_tests: Vec<String>,
    pub negative_tests: Vec<String>,
}

impl ReasonCoverage {
    pub fn is_covered(&self) -> bool {
        self.positive == CoverState::Covered && self.negative != CoverState::Uncovered
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCoverageReport {
    pub reasons: Vec<ReasonCoverage>,
    /// Every reason of the flow is covered.
    pub flow_covered: bool,
    pub secured_covered: bool,
    pub unsecured_covered: bool,
    /// Tests that could not be executed on the model, with the cause.
    pub simulation_errors: Vec<(String, String)>,
}

impl FlowCoverageReport {
    pub fn satisfied(&self) -> bool {
        self.flow_covered
    }

    pub fn negative_uncovered(&self) -> Vec<String> {
        self.reasons
            .iter()
            .filter(|r| r.negative == CoverState::Uncovered)
            .map(|r| r.reason_id.clone())
            .collect()
    }

    pub fn positive_uncovered(&self) -> Vec<String> {
        self.reasons
            .iter()
            .filter(|r| r.positive == CoverState::Uncovered)
            .map(|r| r.reason_id.clone())
            .collect()
    }
}

/// A test covers a reason when executing it on the model yields a source
/// step directly followed by a sink step whose overlap is the reason's span.
pub fn check_flow_coverage(
    plan: &TestPlan,
    flow: &TaintedFlow,
    rules: &[Rule],
    policy: &PolicyAnnotation,
) -> FlowCoverageReport {
    let mut covers: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
    let mut errors = Vec::new();
    for test in &plan.tests {
        let sim = match simulate(test, rules, policy) {
            Ok(s) => s,
            Err(e) => {
                errors.push((test.id.clone(), e.to_string()));
                continue;
            }
        };
        let ts = &sim.transformations;
        for w in 0..ts.len().saturating_sub(1) {
            if test.steps[w].phase == StepPhase::Setup {
                continue;
            }
            let Some(r1) = rules.iter().find(|r| r.name() == ts[w].rule) else { continue };
            let Some(span) = extract_reason(r1, &ts[w], &ts[w + 1]) else { continue };
            for reason in &flow.reasons {
                if reason.source_rule == ts[w].rule && reason.sink_rule == ts[w + 1].rule && reason.span == span {
                    let e = covers.entry(reason.id.clone()).or_default();
                    if test.expected_access {
                        e.0.push(test.id.clone());
                    } else {
                        e.1.push(test.id.clone());
                    }
                }
            }
        }
    }
    let mut reasons = Vec::new();
    for r in &flow.reasons {
        let (pos, neg) = covers.remove(&r.id).unwrap_or_default();
        let negative = if !neg.is_empty() {
            CoverState::Covered
        } else if plan.negative_infeasible.contains(&r.id) {
            CoverState::NegativeInfeasible
        } else {
            CoverState::Uncovered
        };
        reasons.push(ReasonCoverage {
            reason_id: r.id.clone(),
            status: flow.status(&r.id),
            positive: if pos.is_empty() {
                CoverState::Uncovered
            } else {
                CoverState::Covered
            },
            negative,
            positive_tests: pos,
            negative_tests: neg,
        });
    }
    let all = |f: &dyn Fn(&ReasonCoverage) -> bool| reasons.iter().filter(|r| f(r)).all(ReasonCoverage::is_covered);
    FlowCoverageReport {
        flow_covered: all(&|_| true),
        secured_covered: all(&|r| r.status == ReviewStatus::Secured),
        unsecured_covered: all(&|r| r.status == ReviewStatus::Unsecured),
        reasons,
        simulation_errors: errors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleCoverState {
    Covered,
    Uncovered,
    /// Negative obligation waived for a least-privileged role.
    Waived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCoverage {
    pub role: String,
    pub positive: RoleCoverState,
    pub negative: RoleCoverState,
    pub positive_witness: Option<String>,
    pub negative_witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCoverageReport {
    pub roles: Vec<RoleCoverage>,
}

impl RoleCoverageReport {
    pub fn satisfied(&self) -> bool {
        self.roles
            .iter()
            .all(|r| r.positive == RoleCoverState::Covered && r.negative != RoleCoverState::Uncovered)
    }

    pub fn role(&self, name: &str) -> Option<&RoleCoverage> {
        self.roles.iter().find(|r| r.role == name)
    }
}

/// Per role `ro`: a positive test with steps `i < j` run by `ro` and some
/// `ro' >= ro`, and a negative test with `ro` and some `ro' < ro` (waived
/// for least-privileged roles). Only source and sink steps count.
pub fn check_role_coverage(plan: &TestPlan, roles: &RoleSpec) -> RoleCoverageReport {
    let least: BTreeSet<String> = roles.least_privileged().into_iter().collect();
    let mut out = Vec::new();
    for ro in roles.roles() {
        let pos = plan.tests.iter().find(|t| {
            t.expected_access && t.compute_role_pairs().iter().any(|(a, b)| a == ro && roles.leq(ro, b))
        });
        let neg = plan.tests.iter().find(|t| {
            !t.expected_access && t.compute_role_pairs().iter().any(|(a, b)| a == ro && roles.gt(ro, b))
        });
        out.push(RoleCoverage {
            role: ro.clone(),
            positive: if pos.is_some() {
                RoleCoverState::Covered
            } else {
                RoleCoverState::Uncovered
            },
            negative: match (neg, least.contains(ro)) {
                (Some(_), _) => RoleCoverState::Covered,
                (None, true) => RoleCoverState::Waived,
                (None, false) => RoleCoverState::Uncovered,
            },
            positive_witness: pos.map(|t| t.id.clone()),
            negative_witness: neg.map(|t| t.id.clone()),
        });
    }
    RoleCoverageReport { roles: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taint::{apply_review, classify_sources_sinks, tainted_flow, ReviewEntry, TaintedTypeGraph};
    use crate::testkit::{running_rules, running_taint, running_type_graph};
    use proptest::prelude::*;

    fn s(x: &str) -> String {
        x.to_string()
    }

    pub(crate) fn github_roles() -> RoleSpec {
        RoleSpec::new(
            vec![s("Owner"), s("Collaborator"), s("NoPe-Collaborator")],
            vec![(s("Collaborator"), s("Owner")), (s("NoPe-Collaborator"), s("Collaborator"))],
            BTreeMap::new(),
        )
        .unwrap()
    }

    pub(crate) fn github_policy() -> PolicyAnnotation {
        let all = ["Owner", "Collaborator", "NoPe-Collaborator"];
        let mut rules = BTreeMap::new();
        let mut put = |r: &str, roles: &[&str]| {
            rules.insert(
                r.to_string(),
                RulePolicy {
                    allowed: roles.iter().map(|x| x.to_string()).collect(),
                    ..RulePolicy::default()
                },
            );
        };
        put("createUser", &all);
        put("createRepo", &["Owner"]);
        put("createProject", &all);
        for r in ["updateRepo", "createIssue", "updateIssue", "deleteIssue", "getProject", "deleteProject"] {
            put(r, &["Owner", "Collaborator"]);
        }
        PolicyAnnotation { rules }
    }

    fn reviewed_flow() -> TaintedFlow {
        let g = TaintedTypeGraph::new(running_type_graph(), running_taint()).unwrap();
        let api = classify_sources_sinks(&running_rules(), &g).unwrap();
        let flow = tainted_flow(&api).unwrap();
        let ledger: Vec<ReviewEntry> = flow
            .reasons
            .iter()
            .map(|r| ReviewEntry {
                reason_id: r.id.clone(),
                status: if r.sink_rule == "deleteProject" {
                    ReviewStatus::Unsecured
                } else {
                    ReviewStatus::Secured
                },
                rationale: String::new(),
                policy_stable_under_shift: true,
            })
            .collect();
        apply_review(&flow, &ledger).unwrap()
    }

    fn plan() -> TestPlan {
        generate_minimal_tests(
            &reviewed_flow(),
            &running_rules(),
            &github_roles(),
            &github_policy(),
            PlannerOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn role_order_closure() {
        let r = github_roles();
        assert!(r.leq("NoPe-Collaborator", "Owner"));
        assert!(r.gt("Owner", "NoPe-Collaborator"));
        assert!(!r.gt("Owner", "Owner"));
        assert_eq!(r.least_privileged(), vec![s("NoPe-Collaborator")]);
        let cyc = RoleSpec::new(vec![s("a"), s("b")], vec![(s("a"), s("b")), (s("b"), s("a"))], BTreeMap::new());
        assert!(matches!(cyc, Err(PlanError::Cycle(..))));
        let unknown = RoleSpec::new(vec![s("a")], vec![(s("a"), s("z"))], BTreeMap::new());
        assert!(matches!(unknown, Err(PlanError::UnknownRole(_))));
    }

    #[test]
    fn role_spec_round_trips_through_json() {
        let text = r#"{"roles":["lo","hi"],"order":[["lo","hi"]],"principals":{"hi":"HI_TOKEN"}}"#;
        let r: RoleSpec = serde_json::from_str(text).unwrap();
        assert!(r.leq("lo", "hi"));
        let back: RoleSpec = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn policy_upward_closure_is_checked() {
        let roles = github_roles();
        github_policy().validate(&roles).unwrap();
        let mut p = github_policy();
        p.rules.get_mut("createRepo").unwrap().allowed = [s("Collaborator")].into();
        assert!(matches!(p.validate(&roles), Err(PlanError::NotUpwardClosed { .. })));
        p.rules.get_mut("createRepo").unwrap().non_monotone = true;
        p.validate(&roles).unwrap();
    }

    #[test]
    fn setup_prefixes() {
        let rules = running_rules();
        let get = |n: &str| rules.iter().find(|r| r.name() == n).unwrap();
        let empty = InstanceGraph::new();
        assert_eq!(synthesize_setup(get("createRepo"), &empty, &rules, 2).unwrap(), vec!["createUser"]);
        assert_eq!(synthesize_setup(get("createUser"), &empty, &rules, 0).unwrap(), Vec::<String>::new());
        let issue = synthesize_setup(get("createIssue"), &empty, &rules, 3).unwrap();
        assert_eq!(issue.last().unwrap(), "createRepo");
        let err = synthesize_setup(get("updateIssue"), &empty, &rules, 1).unwrap_err();
        assert!(matches!(err, PlanError::SetupFailed { .. }));
    }

    #[test]
    fn running_example_plan_counts() {
        let p = plan();
        assert_eq!(p.flow_tests().count(), 12);
        assert_eq!(p.role_tests().count(), 6);
        assert!(p.negative_infeasible.is_empty());
        assert!(p.impossible_role_obligations.is_empty());
    }

    #[test]
    fn negative_issue_test_uses_nope_collaborator() {
        let p = plan();
        let t = p.tests.iter().find(|t| t.id == "createIssue->updateIssue#1/negative").unwrap();
        assert_eq!(t.source_sink_roles(), Some(("Owner", "NoPe-Collaborator")));
        assert!(!t.expected_access);
        let phases: Vec<StepPhase> = t.steps.iter().map(|s| s.phase).collect();
        assert_eq!(
            phases,
            vec![StepPhase::Setup, StepPhase::Setup, StepPhase::Source, StepPhase::Sink]
        );
        assert_eq!(t.steps[3].bindings["id"].path, "createIssue.i");
    }

    #[test]
    fn generated_plan_passes_both_checkers() {
        let p = plan();
        let flow = reviewed_flow();
        let fc = check_flow_coverage(&p, &flow, &running_rules(), &github_policy());
        assert!(fc.simulation_errors.is_empty(), "{:?}", fc.simulation_errors);
        assert!(fc.flow_covered && fc.secured_covered && fc.unsecured_covered, "{fc:#?}");
        let rc = check_role_coverage(&p, &github_roles());
        assert!(rc.satisfied(), "{rc:#?}");
        assert_eq!(rc.role("NoPe-Collaborator").unwrap().negative, RoleCoverState::Waived);
    }

    #[test]
    fn negative_tests_deny_only_the_sink() {
        let p = plan();
        for t in &p.tests {
            let sim = simulate(t, &running_rules(), &github_policy()).unwrap();
            if t.expected_access {
                assert!(sim.allowed.iter().all(|a| *a), "{}", t.id);
            } else {
                let denied: Vec<usize> = (0..sim.allowed.len()).filter(|i| !sim.allowed[*i]).collect();
                assert_eq!(denied, vec![t.steps.len() - 1], "{}", t.id);
                assert_eq!(t.steps.last().unwrap().phase, StepPhase::Sink);
            }
        }
    }

    #[test]
    fn plan_mutations_are_detected() {
        let full = plan();
        let flow = reviewed_flow();
        let mut p = full.clone();
        let pos = p.tests.iter().position(|t| t.id == "createIssue->updateIssue#1/negative").unwrap();
        p.tests.remove(pos);
        let fc = check_flow_coverage(&p, &flow, &running_rules(), &github_policy());
        assert_eq!(fc.negative_uncovered(), vec![s("createIssue->updateIssue#1")]);

        let mut p = full.clone();
        p.tests.retain(|t| !(t.expected_access && t.source_sink_roles() == Some(("Owner", "Owner"))));
        let rc = check_role_coverage(&p, &github_roles());
        assert_eq!(rc.role("Owner").unwrap().positive, RoleCoverState::Uncovered);

        let empty = TestPlan {
            tests: Vec::new(),
            ..full
        };
        let fc = check_flow_coverage(&empty, &flow, &running_rules(), &github_policy());
        assert_eq!(fc.positive_uncovered().len(), 6);
        assert_eq!(fc.negative_uncovered().len(), 6);
    }

    #[test]
    fn unreviewed_flow_requires_opt_in() {
        let g = TaintedTypeGraph::new(running_type_graph(), running_taint()).unwrap();
        let api = classify_sources_sinks(&running_rules(), &g).unwrap();
        let flow = tainted_flow(&api).unwrap();
        let err = generate_minimal_tests(
            &flow,
            &running_rules(),
            &github_roles(),
            &github_policy(),
            PlannerOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, PlanError::Unreviewed(6));
        let forced = PlannerOptions {
            include_unreviewed: true,
            ..PlannerOptions::default()
        };
        assert_eq!(
            generate_minimal_tests(&flow, &running_rules(), &github_roles(), &github_policy(), forced)
                .unwrap()
                .tests
                .len(),
            18
        );
    }

    #[test]
    fn single_role_needs_one_positive_test() {
        let roles = RoleSpec::new(vec![s("r")], vec![], BTreeMap::new()).unwrap();
        let t = TaintTest {
            id: s("t"),
            kind: TestKind::Custom,
            steps: ["Source", "Sink"]
                .iter()
                .map(|p| TestStep {
                    rule: s("x"),
                    operation: s("x"),
                    role: s("r"),
                    phase: if *p == "Source" {
                        StepPhase::Source
                    } else {
                        StepPhase::Sink
                    },
                    bindings: BTreeMap::new(),
                    auth_scheme: None,
                })
                .collect(),
            expected_access: true,
            reasons: vec![],
            role_pairs: vec![],
        };
        let plan = TestPlan {
            roles: roles.clone(),
            tests: vec![t],
            negative_infeasible: BTreeSet::new(),
            impossible_role_obligations: vec![],
        };
        assert!(check_role_coverage(&plan, &roles).satisfied());
    }

    proptest! {
        #[test]
        fn closure_is_a_partial_order(edges in proptest::collection::vec((0usize..5, 0usize..5), 0..8)) {
            let names: Vec<String> = (0..5).map(|i| format!("r{i}")).collect();
            // orient every edge upward in index order so the input is acyclic
            let order: Vec<(String, String)> = edges
                .iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (names[*a.min(b)].clone(), names[*a.max(b)].clone()))
                .collect();
            let r = RoleSpec::new(names.clone(), order.clone(), BTreeMap::new()).unwrap();
            for a in &names {
                prop_assert!(r.leq(a, a));
                for b in &names {
                    if a != b {
                        prop_assert!(!(r.leq(a, b) && r.leq(b, a)));
                    }
                    for c in &names {
                        if r.leq(a, b) && r.leq(b, c) {
                            prop_assert!(r.leq(a, c));
                        }
                    }
                }
            }
            for (lo, hi) in &order {
                prop_assert!(r.leq(lo, hi));
            }
            prop_assert!(!r.least_privileged().is_empty());
        }
    }
}
