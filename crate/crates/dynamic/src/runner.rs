//! Executes taint-test plans against a GraphQL endpoint and classifies the
//! outcomes.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use graphtaint_core::planner::{StepPhase, TaintTest, TestPlan};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mock::MockTarget;
use crate::protocol::{AuthScheme, GraphqlRequest, GraphqlResponse, RESET_OPERATION};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("no token configured for role `{0}`")]
    MissingToken(String),
    #[error("the access-denial matcher has neither codes nor a message pattern")]
    EmptyMatcher,
    #[error("invalid message pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("unknown auth scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Sends one request with a complete `Authorization` header value.
pub trait Transport {
    fn send(&mut self, request: &GraphqlRequest, authorization: &str) -> Result<GraphqlResponse, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            endpoint: endpoint.to_string(),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, request: &GraphqlRequest, authorization: &str) -> Result<GraphqlResponse, TransportError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", authorization)
            .send_json(request)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        resp.body_mut()
            .read_json::<GraphqlResponse>()
            .map_err(|e| TransportError(format!("HTTP {status}: {e}")))
    }
}

/// Calls a mock target directly, without HTTP.
pub struct InProcessTransport {
    pub target: Arc<Mutex<MockTarget>>,
}

impl Transport for InProcessTransport {
    fn send(&mut self, request: &GraphqlRequest, authorization: &str) -> Result<GraphqlResponse, TransportError> {
        let mut t = self.target.lock().map_err(|_| TransportError("target lock poisoned".into()))?;
        Ok(t.handle(request, Some(authorization)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Error extension codes that signal an access denial.
    #[serde(default)]
    pub codes: Vec<String>,
    /// Regex matched against error messages.
    #[serde(default)]
    pub message_pattern: Option<String>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            codes: vec!["FORBIDDEN".into()],
            message_pattern: Some("Resource not accessible".into()),
        }
    }
}

/// Decides whether a response carries a broken-access-control exception.
#[derive(Debug, Clone)]
pub struct BacMatcher {
    codes: Vec<String>,
    pattern: Option<Regex>,
}

impl BacMatcher {
    pub fn new(config: &MatcherConfig) -> Result<Self, RunnerError> {
        if config.codes.is_empty() && config.message_pattern.is_none() {
            return Err(RunnerError::EmptyMatcher);
        }
        Ok(BacMatcher {
            codes: config.codes.clone(),
            pattern: config.message_pattern.as_deref().map(Regex::new).transpose()?,
        })
    }

    pub fn matches(&self, response: &GraphqlResponse) -> bool {
        response.errors.iter().any(|e| {
            e.extensions.code.as_ref().is_some_and(|c| self.codes.contains(c))
                || self.pattern.as_ref().is_some_and(|p| p.is_match(&e.message))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanupMode {
    None,
    /// Clears the target before each test and after the last one.
    #[default]
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerConfig {
    pub endpoint: String,
    /// Role -> token.
    pub tokens: BTreeMap<String, String>,
    #[serde(default)]
    pub matcher: MatcherConfig,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub cleanup: CleanupMode,
    #[serde(default = "default_scheme")]
    pub default_scheme: AuthScheme,
}

fn default_timeout() -> u64 {
    10_000
}

fn default_scheme() -> AuthScheme {
    AuthScheme::Bearer
}

impl RunnerConfig {
    pub fn new(endpoint: &str, tokens: BTreeMap<String, String>) -> Self {
        RunnerConfig {
            endpoint: endpoint.to_string(),
            tokens,
            matcher: MatcherConfig::default(),
            timeout_ms: default_timeout(),
            cleanup: CleanupMode::default(),
            default_scheme: default_scheme(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    PositiveSuccess,
    PositiveFail,
    NegativeSuccess,
    NegativeFail,
}

impl Classification {
    pub fn is_success(self) -> bool {
        matches!(self, Classification::PositiveSuccess | Classification::NegativeSuccess)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::PositiveSuccess => "positive-success",
            Classification::PositiveFail => "positive-fail",
            Classification::NegativeSuccess => "negative-success",
            Classification::NegativeFail => "negative-fail",
        }
    }
}

/// Outcome of a test from its expected access and whether a denial was seen.
pub fn classify_outcome(expected_access: bool, observed_bac_exception: bool) -> Classification {
    match (expected_access, observed_bac_exception) {
        (true, false) => Classification::PositiveSuccess,
        (true, true) => Classification::PositiveFail,
        (false, true) => Classification::NegativeSuccess,
        (false, false) => Classification::NegativeFail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Success,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTranscript {
    pub index: usize,
    pub rule: String,
    pub role: String,
    pub phase: StepPhase,
    pub auth_scheme: AuthScheme,
    pub request: GraphqlRequest,
    pub response: Option<GraphqlResponse>,
    pub bac_exception: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub expected_access: bool,
    pub verdict: Verdict,
    pub classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive_reason: Option<String>,
    pub transcript: Vec<StepTranscript>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedVulnerability {
    pub test_id: String,
    pub classification: Classification,
    pub reasons: Vec<String>,
    /// Transcript index of the step that violated the expectation.
    pub witness_step: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub success: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub positive_success: usize,
    pub positive_fail: usize,
    pub negative_success: usize,
    pub negative_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    pub summary: Summary,
    pub detected_vulnerabilities: Vec<DetectedVulnerability>,
}

impl TestReport {
    pub fn result(&self, id: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.test_id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let what = match (r.classification, &r.inconclusive_reason) {
                (Some(c), _) => c.as_str().to_string(),
                (None, Some(why)) => format!("inconclusive ({why})"),
                (None, None) => "inconclusive".to_string(),
            };
            out.push_str(&format!("{:<48} {what}\n", r.test_id));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "\n{} tests: {} success, {} fail, {} inconclusive\n",
            s.total, s.success, s.fail, s.inconclusive
        ));
        if self.detected_vulnerabilities.is_empty() {
            out.push_str("no access-control violations detected\n");
        } else {
            out.push_str("detected access-control violations:\n");
            for v in &self.detected_vulnerabilities {
                out.push_str(&format!("  {}: {}\n", v.test_id, v.description));
            }
        }
        out
    }
}

/// Executes plans sequentially, one request in flight at a time.
pub struct Runner<'a> {
    config: &'a RunnerConfig,
    matcher: BacMatcher,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a RunnerConfig) -> Result<Self, RunnerError> {
        Ok(Runner {
            config,
            matcher: BacMatcher::new(&config.matcher)?,
        })
    }

    fn check_plan(&self, plan: &TestPlan) -> Result<(), RunnerError> {
        for t in &plan.tests {
            for s in &t.steps {
                if !self.config.tokens.contains_key(&s.role) {
                    return Err(RunnerError::MissingToken(s.role.clone()));
                }
                if let Some(sc) = &s.auth_scheme {
                    AuthScheme::parse(sc).ok_or_else(|| RunnerError::UnknownScheme(sc.clone()))?;
                }
            }
        }
        Ok(())
    }

    fn reset(&self, transport: &mut dyn Transport) -> Result<(), TransportError> {
        let token = self.config.tokens.values().next().cloned().unwrap_or_default();
        let resp = transport.send(
            &GraphqlRequest::new(RESET_OPERATION, Map::new()),
            &self.config.default_scheme.header(&token),
        )?;
        match resp.errors.first() {
            None => Ok(()),
            Some(e) => Err(TransportError(format!("reset rejected: {}", e.message))),
        }
    }

    pub fn run_plan(&self, plan: &TestPlan, transport: &mut dyn Transport) -> Result<TestReport, RunnerError> {
        self.check_plan(plan)?;
        let mut results = Vec::new();
        for test in &plan.tests {
            let reset = if self.config.cleanup == CleanupMode::Reset {
                self.reset(transport).err()
            } else {
                None
            };
            results.push(match reset {
                Some(e) => inconclusive(test, Vec::new(), e.to_string()),
                None => self.run_test(test, transport),
            });
        }
        if self.config.cleanup == CleanupMode::Reset && !plan.tests.is_empty() {
            let _ = self.reset(transport);
        }
        Ok(assemble(plan, results))
    }

    pub fn run_test(&self, test: &TaintTest, transport: &mut dyn Transport) -> TestResult {
        let mut transcript: Vec<StepTranscript> = Vec::new();
        let mut observed_bac = false;
        for (k, step) in test.steps.iter().enumerate() {
            let mut variables = Map::new();
            for (var, hint) in &step.bindings {
                let resolved = (hint.step < k)
                    .then(|| transcript.get(hint.step))
                    .flatten()
                    .and_then(|t| t.response.as_ref())
                    .and_then(|r| {
                        let (op, field) = hint.path.split_once('.')?;
                        r.field(op, field)
                    });
                match resolved {
                    Some(id) => {
                        variables.insert(var.clone(), Value::String(id.to_string()));
                    }
                    None => {
                        return inconclusive(test, transcript, format!("unresolved binding `{}`", hint.path));
                    }
                }
            }
            let scheme = step
                .auth_scheme
                .as_deref()
                .and_then(AuthScheme::parse)
                .unwrap_or(self.config.default_scheme);
            let token = &self.config.tokens[&step.role];
            let request = GraphqlRequest::new(&step.operation, variables);
            let response = match transport.send(&request, &scheme.header(token)) {
                Ok(r) => r,
                Err(e) => {
                    transcript.push(StepTranscript {
                        index: k,
                        rule: step.rule.clone(),
                        role: step.role.clone(),
                        phase: step.phase,
                        auth_scheme: scheme,
                        request,
                        response: None,
                        bac_exception: false,
                    });
                    return inconclusive(test, transcript, e.to_string());
                }
            };
            let bac = self.matcher.matches(&response);
            let other_error = !bac && !response.errors.is_empty();
            let message = response.errors.first().map(|e| {
                format!(
                    "step {k} (`{}`) failed: {} {}",
                    step.rule,
                    e.extensions.code.as_deref().unwrap_or("ERROR"),
                    e.message
                )
            });
            transcript.push(StepTranscript {
                index: k,
                rule: step.rule.clone(),
                role: step.role.clone(),
                phase: step.phase,
                auth_scheme: scheme,
                request,
                response: Some(response),
                bac_exception: bac,
            });
            if bac {
                observed_bac = true;
                break;
            }
            if other_error {
                return inconclusive(test, transcript, message.unwrap_or_default());
            }
        }
        let c = classify_outcome(test.expected_access, observed_bac);
        TestResult {
            test_id: test.id.clone(),
            expected_access: test.expected_access,
            verdict: if c.is_success() { Verdict::Success } else { Verdict::Fail },
            classification: Some(c),
            inconclusive_reason: None,
            transcript,
        }
    }
}

fn inconclusive(test: &TaintTest, transcript: Vec<StepTranscript>, why: String) -> TestResult {
    TestResult {
        test_id: test.id.clone(),
        expected_access: test.expected_access,
        verdict: Verdict::Inconclusive,
        classification: None,
        inconclusive_reason: Some(why),
        transcript,
    }
}

fn assemble(plan: &TestPlan, results: Vec<TestResult>) -> TestReport {
    let mut summary = Summary {
        total: results.len(),
        ..Summary::default()
    };
    let mut detected = Vec::new();
    for r in &results {
        match r.verdict {
            Verdict::Success => summary.success += 1,
            Verdict::Fail => summary.fail += 1,
            Verdict::Inconclusive => summary.inconclusive += 1,
        }
        let Some(c) = r.classification else { continue };
        match c {
            Classification::PositiveSuccess => summary.positive_success += 1,
            Classification::PositiveFail => summary.positive_fail += 1,
            Classification::NegativeSuccess => summary.negative_success += 1,
            Classification::NegativeFail => summary.negative_fail += 1,
        }
        if c.is_success() {
            continue;
        }
        let witness = r.transcript.last().expect("a classified test ran at least one step");
        let test = plan.tests.iter().find(|t| t.id == r.test_id);
        let description = match c {
            Classification::NegativeFail => format!(
                "`{}` executed by {} succeeded although the policy denies it",
                witness.rule, witness.role
            ),
            _ => format!(
                "`{}` executed by {} was denied although the policy allows it",
                witness.rule, witness.role
            ),
        };
        detected.push(DetectedVulnerability {
            test_id: r.test_id.clone(),
            classification: c,
            reasons: test.map(|t| t.reasons.clone()).unwrap_or_default(),
            witness_step: witness.index,
            description,
        });
    }
    TestReport {
        results,
        summary,
        detected_vulnerabilities: detected,
    }
}

/// Convenience wrapper: builds a runner and executes the plan.
pub fn run_plan(plan: &TestPlan, config: &RunnerConfig, transport: &mut dyn Transport) -> Result<TestReport, RunnerError> {
    Runner::new(config)?.run_plan(plan, transport)
}
