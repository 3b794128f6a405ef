//! `graphtaint`: command-line pipeline from GraphQL schema to executed
//! role-based taint tests.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphtaint_cli::commands;

#[derive(Parser)]
#[command(name = "graphtaint", version, about = "Taint analysis and access-control testing for Graph APIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ProjectArg {
    /// Project directory containing `project.json`.
    #[arg(short, long, default_value = ".")]
    pub project: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Translate a GraphQL schema into a type graph document.
    Ingest {
        /// GraphQL SDL file.
        schema: PathBuf,
        /// Output path for the type graph document.
        #[arg(short, long)]
        out: PathBuf,
        /// Turn input types into node types as well.
        #[arg(long)]
        include_inputs: bool,
        /// Also write rule skeletons derived from root fields to this path.
        #[arg(long, value_name = "RULES_OUT")]
        derive_skeletons: Option<PathBuf>,
    },
    /// Validate a project's rule set and print each rule's shape.
    DeriveRules {
        #[command(flatten)]
        project: ProjectArg,
        /// Write the normalised rule document to this path.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Classify sources and sinks and compute the tainted flow.
    Analyze {
        #[command(flatten)]
        project: ProjectArg,
        /// Report path; defaults to `analysis.json` in the project.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Manage the review ledger of dependency reasons.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Check the independence conditions under which direct analysis is sound.
    CheckTheorem {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, requires = "sink")]
        source: Option<String>,
        #[arg(long, requires = "source")]
        sink: Option<String>,
    },
    /// Generate the taint-test plan.
    PlanTests {
        #[command(flatten)]
        project: ProjectArg,
        /// Plan unreviewed reasons as if secured.
        #[arg(long)]
        include_unreviewed: bool,
        /// Maximum length of synthesised setup prefixes.
        #[arg(long)]
        setup_depth: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check flow coverage and role coverage of a plan.
    CheckCoverage {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Execute a plan against a GraphQL endpoint.
    RunTests {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Overrides the project's endpoint.
        #[arg(long, conflicts_with = "in_process")]
        endpoint: Option<String>,
        /// Run against an in-memory mock target built from the project.
        #[arg(long)]
        in_process: bool,
        /// Default authorization scheme: `bearer` or `fine-grained`.
        #[arg(long, default_value = "bearer")]
        scheme: String,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        /// Leave target state in place between tests.
        #[arg(long)]
        no_cleanup: bool,
        /// JSON report path; defaults to the project's report entry.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve the mock Graph API target over HTTP.
    MockServe {
        /// Project whose rules, roles, policy and mock settings are served.
        #[arg(short, long, default_value = ".")]
        project: PathBuf,
        /// Complete mock configuration; replaces the project's settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8642)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Skip the access check of this rule (repeatable).
        #[arg(long, value_name = "RULE")]
        drop_check: Vec<String>,
        /// Deny RULE to ROLE regardless of policy, given as RULE:ROLE (repeatable).
        #[arg(long, value_name = "RULE:ROLE")]
        over_restrict: Vec<String>,
    },
    /// Cross-check static results against exhaustive enumeration.
    Oracle {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        /// Search for an indirect flow between two rules, given as SOURCE:SINK (repeatable).
        #[arg(long, value_name = "SOURCE:SINK")]
        indirect: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ReviewAction {
    /// Write a ledger template with every reason unreviewed.
    Init {
        #[command(flatten)]
        project: ProjectArg,
        /// Overwrite an existing ledger.
        #[arg(long)]
        force: bool,
    },
    /// Apply the ledger and summarise secured and unsecured reasons.
    Apply {
        #[command(flatten)]
        project: ProjectArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            schema,
            out,
            include_inputs,
            derive_skeletons,
        } => commands::ingest(&schema, &out, include_inputs, derive_skeletons.as_deref()),
        Command::DeriveRules { project, out } => commands::derive_rules(&project.project, out.as_deref()),
        Command::Analyze { project, out } => commands::analyze(&project.project, out.as_deref()),
        Command::Review { action } => match action {
            ReviewAction::Init { project, force } => commands::review_init(&project.project, force),
            ReviewAction::Apply { project } => commands::review_apply(&project.project),
        },
        Command::CheckTheorem { project, source, sink } => {
            let pair = source.zip(sink);
            commands::check_theorem(&project.project, pair)
        }
        Command::PlanTests {
            project,
            include_unreviewed,
            setup_depth,
            out,
        } => commands::plan_tests(&project.project, include_unreviewed, setup_depth, out.as_deref()),
        Command::CheckCoverage { project, plan } => commands::check_coverage(&project.project, plan.as_deref()),
        Command::RunTests {
            project,
            plan,
            endpoint,
            in_process,
            scheme,
            timeout_ms,
            no_cleanup,
            out,
        } => commands::run_tests(commands::RunArgs {
            project: &project.project,
            plan: plan.as_deref(),
            endpoint,
            in_process,
            scheme: &scheme,
            timeout_ms,
            cleanup: !no_cleanup,
            out: out.as_deref(),
        }),
        Command::MockServe {
            project,
            config,
            port,
            host,
            drop_check,
            over_restrict,
        } => commands::mock_serve(&project, config.as_deref(), &host, port, &drop_check, &over_restrict),
        Command::Oracle {
            project,
            max_depth,
            indirect,
        } => commands::oracle(&project.project, max_depth, &indirect),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
