//! Project directory layout and cross-validated loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use graphtaint_core::planner::{PlannerOptions, PolicyAnnotation, RoleSpec, TestPlan};
use graphtaint_core::rule::{load_rules, RuleSetDocument};
use graphtaint_core::schema::{parse_sdl, to_type_graph, TypeGraphOptions};
use graphtaint_core::taint::{classify_sources_sinks, ReviewEntry, TaintedGraphAPI, TaintedTypeGraph};
use graphtaint_core::{Rule, TypeGraph};
use graphtaint_dynamic::{FaultInjection, MockConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// `project.json`. Paths are relative to the project directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub schema: Option<PathBuf>,
    pub type_graph: Option<PathBuf>,
    #[serde(default)]
    pub include_inputs: bool,
    pub rules: PathBuf,
    pub taint: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub mock: Option<PathBuf>,
    pub setup_depth: Option<usize>,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct TaintDoc {
    tainted: BTreeSet<String>,
}

/// Mock settings kept next to the project; roles and policy come from the
/// project itself.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectMockDoc {
    tokens: BTreeMap<String, String>,
    #[serde(default)]
    faults: Vec<FaultInjection>,
    fine_grained_policy: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pretty JSON with a trailing newline, so repeated runs are byte-identical.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_type_graph_from_schema(path: &Path, include_inputs: bool) -> Result<TypeGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model = parse_sdl(&text).with_context(|| format!("in {}", path.display()))?;
    to_type_graph(&model, TypeGraphOptions { include_inputs })
        .with_context(|| format!("building type graph from {}", path.display()))
}

pub struct Project {
    pub dir: PathBuf,
    pub config: ProjectConfig,
    pub type_graph: Arc<TypeGraph>,
    pub rules: Vec<Rule>,
}

impl Project {
    pub fn load(dir: &Path) -> Result<Self> {
        let config: ProjectConfig = read_json(&dir.join("project.json"))?;
        let type_graph = match (&config.schema, &config.type_graph) {
            (Some(s), None) => load_type_graph_from_schema(&dir.join(s), config.include_inputs)?,
            (None, Some(t)) => read_json(&dir.join(t))?,
            _ => bail!("project.json must name exactly one of `schema` and `type_graph`"),
        };
        let type_graph = Arc::new(type_graph);
        let rules_path = dir.join(&config.rules);
        let doc: RuleSetDocument = read_json(&rules_path)?;
        let rules = load_rules(&doc, type_graph.clone()).with_context(|| format!("in {}", rules_path.display()))?;
        Ok(Project {
            dir: dir.to_path_buf(),
            config,
            type_graph,
            rules,
        })
    }

    fn path(&self, entry: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        match entry {
            Some(p) => Ok(self.dir.join(p)),
            None => bail!("project.json has no `{key}` entry"),
        }
    }

    pub fn ledger_path(&self) -> Result<PathBuf> {
        self.path(&self.config.ledger, "ledger")
    }

    pub fn plan_path(&self) -> Result<PathBuf> {
        self.path(&self.config.plan, "plan")
    }

    pub fn report_path(&self) -> Result<PathBuf> {
        self.path(&self.config.report, "report")
    }

    pub fn tainted(&self) -> Result<TaintedTypeGraph> {
        let path = self.path(&self.config.taint, "taint")?;
        let doc: TaintDoc = read_json(&path)?;
        TaintedTypeGraph::new(self.type_graph.clone(), doc.tainted).with_context(|| format!("in {}", path.display()))
    }

    pub fn api(&self) -> Result<TaintedGraphAPI> {
        Ok(classify_sources_sinks(&self.rules, &self.tainted()?)?)
    }

    pub fn roles(&self) -> Result<RoleSpec> {
        read_json(&self.path(&self.config.roles, "roles")?)
    }

    pub fn policy(&self, roles: &RoleSpec) -> Result<PolicyAnnotation> {
        let path = self.path(&self.config.policy, "policy")?;
        let policy: PolicyAnnotation = read_json(&path)?;
        self.check_policy(&policy, roles, &path)?;
        Ok(policy)
    }

    fn check_policy(&self, policy: &PolicyAnnotation, roles: &RoleSpec, path: &Path) -> Result<()> {
        policy.validate(roles).with_context(|| format!("in {}", path.display()))?;
        for name in policy.rules.keys() {
            if !self.rules.iter().any(|r| r.name() == name) {
                bail!("{}: policy names unknown rule `{name}`", path.display());
            }
        }
        Ok(())
    }

    pub fn ledger(&self) -> Result<Vec<ReviewEntry>> {
        read_json(&self.ledger_path()?)
    }

    /// Reads the plan and checks that it only uses known roles and rules.
    pub fn plan(&self, path: Option<&Path>, roles: &RoleSpec) -> Result<TestPlan> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => self.plan_path()?,
        };
        let plan: TestPlan = read_json(&path)?;
        for t in &plan.tests {
            for s in &t.steps {
                if !roles.contains(&s.role) {
                    bail!("{}: test `{}` uses unknown role `{}`", path.display(), t.id, s.role);
                }
                if !self.rules.iter().any(|r| r.name() == s.rule) {
                    bail!("{}: test `{}` uses unknown rule `{}`", path.display(), t.id, s.rule);
                }
            }
        }
        Ok(plan)
    }

    pub fn planner_options(&self, include_unreviewed: bool, depth: Option<usize>) -> PlannerOptions {
        let base = PlannerOptions::default();
        PlannerOptions {
            include_unreviewed,
            setup_depth: depth.or(self.config.setup_depth).unwrap_or(base.setup_depth),
        }
    }

    pub fn mock_config(&self) -> Result<MockConfig> {
        let path = self.path(&self.config.mock, "mock")?;
        let doc: ProjectMockDoc = read_json(&path)?;
        let roles = self.roles()?;
        let policy = self.policy(&roles)?;
        let fine_grained_policy = match &doc.fine_grained_policy {
            Some(p) => {
                let p = self.dir.join(p);
                let fg: PolicyAnnotation = read_json(&p)?;
                self.check_policy(&fg, &roles, &p)?;
                Some(fg)
            }
            None => None,
        };
        Ok(MockConfig {
            roles,
            policy,
            fine_grained_policy,
            tokens: doc.tokens,
            faults: doc.faults,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../projects").join(name)
    }

    #[test]
    fn bundled_projects_load() {
        for name in ["running-example", "toy-dangling", "permissions-issue"] {
            let p = Project::load(&bundled(name)).unwrap();
            assert!(!p.rules.is_empty(), "{name}");
            p.tainted().unwrap();
        }
    }

    #[test]
    fn mock_config_merges_fine_grained_policy() {
        let p = Project::load(&bundled("permissions-issue")).unwrap();
        let cfg = p.mock_config().unwrap();
        let fg = cfg.fine_grained_policy.expect("fine-grained table");
        assert!(!cfg.policy.allows_role("compare", "NoRepoScope"));
        assert!(fg.allows_role("compare", "NoRepoScope"));
        assert_eq!(cfg.tokens.len(), 2);
    }

    #[test]
    fn planner_options_prefer_flag_then_project() {
        let p = Project::load(&bundled("permissions-issue")).unwrap();
        assert_eq!(p.planner_options(false, None).setup_depth, 6);
        assert_eq!(p.planner_options(false, Some(2)).setup_depth, 2);
        let q = Project::load(&bundled("running-example")).unwrap();
        assert_eq!(q.planner_options(true, None), PlannerOptions { include_unreviewed: true, setup_depth: 4 });
    }

    #[test]
    fn config_needs_exactly_one_graph_source() {
        let both = r#"{"schema": "a", "type_graph": "b", "rules": "r"}"#;
        let cfg: ProjectConfig = serde_json::from_str(both).unwrap();
        assert!(cfg.schema.is_some() && cfg.type_graph.is_some());
        let unknown = r#"{"rules": "r", "polcy": "p"}"#;
        assert!(serde_json::from_str::<ProjectConfig>(unknown).is_err());
    }
}
