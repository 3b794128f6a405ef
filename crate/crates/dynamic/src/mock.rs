//! In-memory Graph API that executes the rule set under a role-based policy
//! with optional fault injection.

use std::collections::BTreeMap;

use graphtaint_core::dpo::{apply_with, IdGenerator};
use graphtaint_core::planner::{first_applicable_match, PolicyAnnotation, RoleSpec};
use graphtaint_core::{InstanceGraph, Morphism, NodeId, Rule};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::protocol::{parse_authorization, AuthScheme, GraphqlRequest, GraphqlResponse, RESET_OPERATION};

pub const FORBIDDEN: &str = "FORBIDDEN";
pub const UNAUTHENTICATED: &str = "UNAUTHENTICATED";
pub const NOT_FOUND: &str = "NOT_FOUND";
pub const BAD_REQUEST: &str = "BAD_REQUEST";
/// Denial message, worded like GitHub's.
pub const DENIAL_MESSAGE: &str = "Resource not accessible by integration";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MockError {
    #[error("fault references unknown rule `{0}`")]
    UnknownRule(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("operation `{0}` is served by more than one rule")]
    DuplicateOperation(String),
    #[error("invalid policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultInjection {
    /// The access check of `rule` is skipped entirely.
    DropCheck { rule: String },
    /// `role` is denied `rule` even where the policy allows it.
    OverRestrict { rule: String, role: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockConfig {
    pub roles: RoleSpec,
    pub policy: PolicyAnnotation,
    /// Policy for requests using the fine-grained scheme; defaults to
    /// `policy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_grained_policy: Option<PolicyAnnotation>,
    /// Token -> role.
    pub tokens: BTreeMap<String, String>,
    #[serde(default)]
    pub faults: Vec<FaultInjection>,
}

/// Observable server state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetState {
    pub graph: InstanceGraph,
    /// Node id -> token of the principal that created it.
    pub creators: BTreeMap<NodeId, String>,
    pub ids: IdGenerator,
}

#[derive(Debug, Clone)]
pub struct MockTarget {
    rules: Vec<Rule>,
    config: MockConfig,
    state: TargetState,
}

impl MockTarget {
    pub fn new(rules: Vec<Rule>, config: MockConfig) -> Result<Self, MockError> {
        let mut ops = BTreeMap::new();
        for r in &rules {
            if ops.insert(r.operation().to_string(), r.name()).is_some() {
                return Err(MockError::DuplicateOperation(r.operation().to_string()));
            }
        }
        for role in config.tokens.values() {
            if !config.roles.contains(role) {
                return Err(MockError::UnknownRole(role.clone()));
            }
        }
        for p in std::iter::once(&config.policy).chain(config.fine_grained_policy.iter()) {
            p.validate(&config.roles).map_err(|e| MockError::Policy(e.to_string()))?;
        }
        for f in &config.faults {
            let rule = match f {
                FaultInjection::DropCheck { rule } => rule,
                FaultInjection::OverRestrict { rule, role } => {
                    if !config.roles.contains(role) {
                        return Err(MockError::UnknownRole(role.clone()));
                    }
                    rule
                }
            };
            if !rules.iter().any(|r| r.name() == rule) {
                return Err(MockError::UnknownRule(rule.clone()));
            }
        }
        Ok(MockTarget {
            rules,
            config,
            state: TargetState::default(),
        })
    }

    pub fn state(&self) -> &TargetState {
        &self.state
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.state = TargetState::default();
    }

    pub fn inject(&mut self, fault: FaultInjection) {
        self.config.faults.push(fault);
    }

    fn rule_for(&self, operation: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.operation() == operation)
    }

    fn decide(&self, rule: &str, role: &str, token: &str, scheme: AuthScheme, addressed: &[Option<&str>]) -> bool {
        let table = match scheme {
            AuthScheme::FineGrained => self.config.fine_grained_policy.as_ref().unwrap_or(&self.config.policy),
            AuthScheme::Bearer => &self.config.policy,
        };
        let mut allowed = table.allows(rule, role, token, addressed);
        for f in &self.config.faults {
            match f {
                FaultInjection::DropCheck { rule: r } if r == rule => allowed = true,
                FaultInjection::OverRestrict { rule: r, role: ro } if r == rule && ro == role => return false,
                _ => {}
            }
        }
        allowed
    }

    /// Serves one request. `authorization` is the raw header value.
    pub fn handle(&mut self, request: &GraphqlRequest, authorization: Option<&str>) -> GraphqlResponse {
        let op = request.operation_name.clone().unwrap_or_default();
        if op == RESET_OPERATION {
            self.reset();
            return GraphqlResponse::ok(serde_json::json!({ RESET_OPERATION: true }));
        }
        let Some((scheme, token)) = authorization.and_then(parse_authorization) else {
            return GraphqlResponse::error(UNAUTHENTICATED, "missing or malformed credentials");
        };
        let Some(role) = self.config.tokens.get(token).cloned() else {
            return GraphqlResponse::error(UNAUTHENTICATED, "bad credentials");
        };
        let Some(rule) = self.rule_for(&op).cloned() else {
            return GraphqlResponse::error(BAD_REQUEST, format!("unknown operation `{op}`"));
        };

        let mut seed = Morphism::new();
        for (var, l) in rule.bindings() {
            let Some(v) = request.variables.get(var) else { continue };
            let Some(id) = v.as_str() else {
                return GraphqlResponse::error(BAD_REQUEST, format!("variable `{var}` must be an ID string"));
            };
            let id = NodeId::from(id);
            let expected = rule.lhs().node_type(l);
            if self.state.graph.node_type(&id) != expected {
                return GraphqlResponse::error(NOT_FOUND, format!("no {} with id `{id}`", expected.unwrap_or("node")));
            }
            seed.nodes.insert(l.clone(), id);
        }
        let Some(m) = first_applicable_match(&rule, &self.state.graph, &seed) else {
            return GraphqlResponse::error(NOT_FOUND, format!("`{op}` cannot be applied to the requested resources"));
        };
        let addressed: Vec<Option<&str>> = rule
            .bindings()
            .values()
            .filter_map(|l| m.node(l))
            .map(|h| self.state.creators.get(h).map(String::as_str))
            .collect();
        if !self.decide(rule.name(), &role, token, scheme, &addressed) {
            return GraphqlResponse::error(FORBIDDEN, DENIAL_MESSAGE);
        }
        let t = match apply_with(&rule, &self.state.graph, &m, &mut self.state.ids) {
            Ok(t) => t,
            Err(e) => return GraphqlResponse::error(NOT_FOUND, e.to_string()),
        };
        for n in t.created_nodes() {
            self.state.creators.insert(n, token.to_string());
        }
        self.state.graph = t.result.clone();
        let mut out = Map::new();
        for (x, h) in &t.comatch.nodes {
            out.insert(x.to_string(), Value::String(h.to_string()));
        }
        GraphqlResponse::ok(Value::Object(Map::from_iter([(op, Value::Object(out))])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{mock, owner, request};
    use serde_json::json;

    #[test]
    fn owner_creates_repo_on_fresh_state() {
        let mut m = mock(vec![]);
        assert!(m.handle(&request("createUser", json!({})), Some(&owner())).errors.is_empty());
        let r = m.handle(&request("createRepo", json!({})), Some(&owner()));
        assert!(r.errors.is_empty(), "{r:?}");
        let id = r.field("createRepo", "r").unwrap();
        assert_eq!(m.state().graph.node_type(&NodeId::from(id)), Some("Repository"));
        assert_eq!(m.state().graph.edge_count(), 2);
    }

    #[test]
    fn error_codes() {
        let mut m = mock(vec![]);
        let r = m.handle(&request("createUser", json!({})), None);
        assert_eq!(r.first_code(), Some(UNAUTHENTICATED));
        let r = m.handle(&request("createUser", json!({})), Some("bearer nope"));
        assert_eq!(r.first_code(), Some(UNAUTHENTICATED));
        let r = m.handle(&request("fly", json!({})), Some(&owner()));
        assert_eq!(r.first_code(), Some(BAD_REQUEST));
        let r = m.handle(&request("updateRepo", json!({"id": "n99"})), Some(&owner()));
        assert_eq!(r.first_code(), Some(NOT_FOUND));
    }

    #[test]
    fn denial_leaves_state_untouched() {
        let mut m = mock(vec![]);
        m.handle(&request("createUser", json!({})), Some(&owner()));
        let repo = m.handle(&request("createRepo", json!({})), Some(&owner()));
        let rid = repo.field("createRepo", "r").unwrap().to_string();
        let issue = m.handle(&request("createIssue", json!({"repoId": rid})), Some(&owner()));
        let iid = issue.field("createIssue", "i").unwrap().to_string();
        let before = serde_json::to_string(m.state()).unwrap();
        let r = m.handle(&request("updateIssue", json!({"id": iid})), Some("bearer nope-token"));
        assert_eq!(r.first_code(), Some(FORBIDDEN));
        assert_eq!(r.errors[0].message, DENIAL_MESSAGE);
        assert_eq!(serde_json::to_string(m.state()).unwrap(), before);
    }

    #[test]
    fn drop_check_lets_the_request_through() {
        let mut m = mock(vec![FaultInjection::DropCheck {
            rule: "updateIssue".into(),
        }]);
        m.handle(&request("createUser", json!({})), Some(&owner()));
        let rid = m.handle(&request("createRepo", json!({})), Some(&owner())).field("createRepo", "r").unwrap().to_string();
        let iid = m
            .handle(&request("createIssue", json!({"repoId": rid})), Some(&owner()))
            .field("createIssue", "i")
            .unwrap()
            .to_string();
        let r = m.handle(&request("updateIssue", json!({"id": iid})), Some("bearer nope-token"));
        assert!(r.errors.is_empty());
    }

    #[test]
    fn over_restrict_denies_an_allowed_role() {
        let mut m = mock(vec![FaultInjection::OverRestrict {
            rule: "createUser".into(),
            role: "Owner".into(),
        }]);
        let r = m.handle(&request("createUser", json!({})), Some(&owner()));
        assert_eq!(r.first_code(), Some(FORBIDDEN));
    }

    #[test]
    fn faults_are_validated() {
        let cfg = crate::testutil::config(vec![FaultInjection::DropCheck { rule: "nope".into() }]);
        let err = MockTarget::new(crate::testutil::rules(), cfg).unwrap_err();
        assert_eq!(err, MockError::UnknownRule("nope".into()));
    }

    #[test]
    fn reset_clears_state() {
        let mut m = mock(vec![]);
        m.handle(&request("createUser", json!({})), Some(&owner()));
        assert!(!m.state().graph.is_empty());
        m.handle(&request(RESET_OPERATION, json!({})), None);
        assert!(m.state().graph.is_empty());
    }
}
