//! Subcommand implementations. Each reads its inputs, writes its output
//! document and prints a short summary.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use graphtaint_core::dependency::{DependencyEdge, DependencyReason};
use graphtaint_core::graph::GraphDocument;
use graphtaint_core::oracle::{compare_with_brute_force, find_indirect_flow};
use graphtaint_core::planner::{check_flow_coverage, check_role_coverage, generate_minimal_tests, CoverState};
use graphtaint_core::rule::RuleSetDocument;
use graphtaint_core::schema::{derive_rule_skeletons, parse_sdl};
use graphtaint_core::taint::{apply_review, check_theorem_conditions, tainted_flow, Classification as TaintClassification, TaintedFlow, TheoremVerdict};
use graphtaint_core::{ChangeTag, InstanceGraph};
use graphtaint_dynamic::protocol::AuthScheme;
use graphtaint_dynamic::runner::{CleanupMode, HttpTransport, InProcessTransport};
use graphtaint_dynamic::server::serve_blocking;
use graphtaint_dynamic::{run_plan, FaultInjection, MockConfig, MockTarget, RunnerConfig, Transport};
use serde::Serialize;

use crate::project::{load_type_graph_from_schema, read_json, write_json, Project};

/// Exit status for a completed run that found a problem.
fn findings(found: bool) -> ExitCode {
    if found {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

pub fn ingest(schema: &Path, out: &Path, include_inputs: bool, skeletons: Option<&Path>) -> Result<ExitCode> {
    let tg = load_type_graph_from_schema(schema, include_inputs)?;
    write_json(out, &GraphDocument::new(&tg, &InstanceGraph::new()))?;
    println!(
        "type graph: {} node types, {} edge types -> {}",
        tg.node_types().count(),
        tg.edge_types().count(),
        out.display()
    );
    if let Some(path) = skeletons {
        let text = std::fs::read_to_string(schema)?;
        let result = derive_rule_skeletons(&parse_sdl(&text)?)?;
        write_json(path, &RuleSetDocument { rules: result.rules.clone() })?;
        println!("rule skeletons: {} -> {}", result.rules.len(), path.display());
        for f in &result.unhandled {
            println!("  unhandled root field {f}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn derive_rules(dir: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    for r in &p.rules {
        let count = |tag| r.nodes_tagged(tag).len() + r.edges_tagged(tag).len();
        let mut flags = Vec::new();
        if r.is_bootstrap() {
            flags.push("bootstrap");
        }
        if r.spec().skeleton {
            flags.push("skeleton");
        }
        println!(
            "{:<24} preserve {:>2}  delete {:>2}  create {:>2}  bindings [{}] {}",
            r.name(),
            count(ChangeTag::Preserve),
            count(ChangeTag::Delete),
            count(ChangeTag::Create),
            r.bindings().keys().cloned().collect::<Vec<_>>().join(", "),
            flags.join(" ")
        );
    }
    if let Some(out) = out {
        let doc = RuleSetDocument {
            rules: p.rules.iter().map(|r| r.spec().clone()).collect(),
        };
        write_json(out, &doc)?;
    }
    println!("{} rules valid", p.rules.len());
    Ok(ExitCode::SUCCESS)
}

/// The analysis document: classification plus every tainted reason.
#[derive(Serialize)]
struct AnalysisReport<'a> {
    classification: TaintClassification,
    edges: Vec<DependencyEdge>,
    reasons: &'a [DependencyReason],
}

fn edges_of(flow: &TaintedFlow) -> Vec<DependencyEdge> {
    let mut by_pair: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for r in &flow.reasons {
        by_pair
            .entry((r.source_rule.clone(), r.sink_rule.clone()))
            .or_default()
            .push(r.id.clone());
    }
    by_pair
        .into_iter()
        .map(|((source, sink), reasons)| DependencyEdge { source, sink, reasons })
        .collect()
}

pub fn analyze(dir: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let api = p.api()?;
    let flow = tainted_flow(&api)?;
    let classification = api.classification();
    println!("sources: {}", join(&api.source_rules()));
    println!("sinks:   {}", join(&api.sink_rules()));
    let edges = edges_of(&flow);
    println!("tainted dependency edges ({}):", edges.len());
    for e in &edges {
        println!("  {} -> {}  [{}]", e.source, e.sink, e.reasons.join(", "));
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| p.dir.join("analysis.json"));
    write_json(
        &out,
        &AnalysisReport {
            classification,
            edges,
            reasons: &flow.reasons,
        },
    )?;
    println!("{} reasons -> {}", flow.reasons.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn reviewed_flow(p: &Project) -> Result<TaintedFlow> {
    let flow = tainted_flow(&p.api()?)?;
    let ledger = p.ledger()?;
    apply_review(&flow, &ledger).with_context(|| format!("applying {}", p.ledger_path().unwrap_or_default().display()))
}

pub fn review_init(dir: &Path, force: bool) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let path = p.ledger_path()?;
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    let flow = tainted_flow(&p.api()?)?;
    write_json(&path, &flow.ledger_template())?;
    println!("{} unreviewed reasons -> {}", flow.reasons.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn review_apply(dir: &Path) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let flow = reviewed_flow(&p)?;
    println!("secured   ({}): {}", flow.secured().len(), join(&flow.secured()));
    println!("unsecured ({}): {}", flow.unsecured().len(), join(&flow.unsecured()));
    let open = flow.unreviewed();
    if !open.is_empty() {
        println!("unreviewed ({}): {}", open.len(), join(&open));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn check_theorem(dir: &Path, pair: Option<(String, String)>) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let api = p.api()?;
    let pairs = match pair {
        Some(pair) => vec![pair],
        None => api.flow_pairs(),
    };
    let mut checks = Vec::new();
    for (src, snk) in pairs {
        let c = check_theorem_conditions(&api, &src, &snk)?;
        let verdict = match c.verdict {
            TheoremVerdict::Both => "both conditions hold",
            TheoremVerdict::Condition1 => "condition 1 holds",
            TheoremVerdict::Condition2 => "condition 2 holds",
            TheoremVerdict::Neither => "neither condition holds",
        };
        println!("{src} -> {snk}: {verdict} ({} reasons)", c.reason_count);
        for (a, b) in c.violations1.iter().chain(&c.violations2).take(6) {
            println!("    dependent: {a} -> {b}");
        }
        if c.potential_indirect_blind_spot {
            println!("    warning: no direct reason; an indirect flow may be missed");
        }
        checks.push(c);
    }
    if let Some(c) = checks.first() {
        println!("note: {}", c.caveat);
    }
    write_json(&p.dir.join("theorem.json"), &checks)?;
    Ok(ExitCode::SUCCESS)
}

pub fn plan_tests(dir: &Path, include_unreviewed: bool, depth: Option<usize>, out: Option<&Path>) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let roles = p.roles()?;
    let policy = p.policy(&roles)?;
    let flow = reviewed_flow(&p)?;
    let options = p.planner_options(include_unreviewed, depth);
    let plan = generate_minimal_tests(&flow, &p.rules, &roles, &policy, options)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => p.plan_path()?,
    };
    write_json(&out, &plan)?;
    println!(
        "{} flow tests + {} role-coverage tests = {} -> {}",
        plan.flow_tests().count(),
        plan.role_tests().count(),
        plan.tests.len(),
        out.display()
    );
    for id in &plan.negative_infeasible {
        println!("  negative-infeasible: {id}");
    }
    for o in &plan.impossible_role_obligations {
        println!("  impossible role obligation: {o}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn check_coverage(dir: &Path, plan: Option<&Path>) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let roles = p.roles()?;
    let policy = p.policy(&roles)?;
    let plan = p.plan(plan, &roles)?;
    let flow = reviewed_flow(&p)?;
    let fc = check_flow_coverage(&plan, &flow, &p.rules, &policy);
    let rc = check_role_coverage(&plan, &roles);
    let state = |s: CoverState| match s {
        CoverState::Covered => "covered",
        CoverState::Uncovered => "UNCOVERED",
        CoverState::NegativeInfeasible => "negative-infeasible",
    };
    for r in &fc.reasons {
        println!("{:<36} positive {:<10} negative {}", r.reason_id, state(r.positive), state(r.negative));
    }
    for (t, e) in &fc.simulation_errors {
        println!("  {t}: cannot execute on the model: {e}");
    }
    for r in &rc.roles {
        println!("role {:<24} positive {:?}  negative {:?}", r.role, r.positive, r.negative);
    }
    let ok = fc.satisfied() && rc.satisfied();
    println!(
        "flow coverage: {}; role coverage: {}",
        if fc.satisfied() { "satisfied" } else { "NOT satisfied" },
        if rc.satisfied() { "satisfied" } else { "NOT satisfied" }
    );
    Ok(findings(!ok))
}

pub struct RunArgs<'a> {
    pub project: &'a Path,
    pub plan: Option<&'a Path>,
    pub endpoint: Option<String>,
    pub in_process: bool,
    pub scheme: &'a str,
    pub timeout_ms: u64,
    pub cleanup: bool,
    pub out: Option<&'a Path>,
}

pub fn run_tests(args: RunArgs<'_>) -> Result<ExitCode> {
    let p = Project::load(args.project)?;
    let roles = p.roles()?;
    let plan = p.plan(args.plan, &roles)?;
    let scheme = AuthScheme::parse(args.scheme).ok_or_else(|| anyhow!("unknown auth scheme `{}`", args.scheme))?;

    let (endpoint, tokens, mut transport): (String, BTreeMap<String, String>, Box<dyn Transport>) = if args.in_process {
        let cfg = p.mock_config()?;
        // the mock's token table is token -> role; the runner needs role -> token
        let mut tokens = BTreeMap::new();
        for (token, role) in &cfg.tokens {
            tokens.entry(role.clone()).or_insert_with(|| token.clone());
        }
        let target = MockTarget::new(p.rules.clone(), cfg)?;
        let t = InProcessTransport {
            target: Arc::new(Mutex::new(target)),
        };
        ("in-process".into(), tokens, Box::new(t))
    } else {
        let endpoint = args
            .endpoint
            .or_else(|| p.config.endpoint.clone())
            .ok_or_else(|| anyhow!("no endpoint given and project.json has none"))?;
        let mut tokens = BTreeMap::new();
        for (role, var) in roles.principals() {
            let token = std::env::var(var).with_context(|| format!("token for role `{role}` expected in ${var}"))?;
            tokens.insert(role.clone(), token);
        }
        let t = HttpTransport::new(&endpoint, std::time::Duration::from_millis(args.timeout_ms));
        (endpoint, tokens, Box::new(t))
    };

    let mut config = RunnerConfig::new(&endpoint, tokens);
    config.timeout_ms = args.timeout_ms;
    config.default_scheme = scheme;
    config.cleanup = if args.cleanup { CleanupMode::Reset } else { CleanupMode::None };
    let report = run_plan(&plan, &config, transport.as_mut())?;
    print!("{}", report.to_text());
    let out = match args.out {
        Some(o) => o.to_path_buf(),
        None => p.report_path()?,
    };
    write_json(&out, &report)?;
    Ok(findings(report.summary.fail > 0))
}

fn parse_pair(s: &str, what: &str) -> Result<(String, String)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("{what} must have the form A:B, got `{s}`"))?;
    Ok((a.to_string(), b.to_string()))
}

pub fn mock_serve(
    dir: &Path,
    config: Option<&Path>,
    host: &str,
    port: u16,
    drop_check: &[String],
    over_restrict: &[String],
) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let mut cfg: MockConfig = match config {
        Some(path) => read_json(path)?,
        None => p.mock_config()?,
    };
    cfg.faults
        .extend(drop_check.iter().map(|r| FaultInjection::DropCheck { rule: r.clone() }));
    for s in over_restrict {
        let (rule, role) = parse_pair(s, "--over-restrict")?;
        cfg.faults.push(FaultInjection::OverRestrict { rule, role });
    }
    let faults = cfg.faults.len();
    let target = MockTarget::new(p.rules.clone(), cfg)?;
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    println!("mock target on http://{addr}/graphql ({} rules, {faults} faults)", p.rules.len());
    serve_blocking(Arc::new(Mutex::new(target)), addr)?;
    Ok(ExitCode::SUCCESS)
}

pub fn oracle(dir: &Path, max_depth: usize, indirect: &[String]) -> Result<ExitCode> {
    let p = Project::load(dir)?;
    let report = compare_with_brute_force(&p.rules, max_depth)?;
    println!(
        "depth {}: {} hosts, {} two-step sequences, {} produce-use",
        report.max_depth, report.hosts, report.sequences, report.produce_use_sequences
    );
    for pair in &report.pairs {
        if pair.static_independent != pair.brute_force_independent {
            println!(
                "  {} -> {}: static {} vs brute force {}",
                pair.first, pair.second, pair.static_independent, pair.brute_force_independent
            );
        }
    }
    for d in &report.disagreements {
        println!("  disagreement: {d}");
    }
    println!("{} disagreements", report.disagreements.len());
    let mut found = Vec::new();
    for s in indirect {
        let (src, snk) = parse_pair(s, "--indirect")?;
        match find_indirect_flow(&p.rules, &src, &snk, max_depth) {
            Some(f) => {
                println!("indirect flow {src} -> {snk}: {}", f.rules.join(" ; "));
                found.push(f);
            }
            None => println!("no indirect flow {src} -> {snk} within depth {max_depth}"),
        }
    }
    let out: PathBuf = p.dir.join("oracle.json");
    write_json(&out, &serde_json::json!({ "report": report, "indirect": found }))?;
    Ok(findings(!report.agrees()))
}
