use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphtaint"))
}

/// Copies a bundled project into a scratch directory so commands can write.
fn scratch(project: &str, tag: &str) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../projects").join(project);
    let dst = std::env::temp_dir().join(format!("graphtaint-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dst);
    fs::create_dir_all(&dst).unwrap();
    for entry in fs::read_dir(&src).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dst.join(entry.file_name())).unwrap();
    }
    dst
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().args(args).arg("--project").arg(dir).output().unwrap();
    assert!(
        out.status.code().is_some(),
        "{args:?} terminated abnormally: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pipeline_stages_are_idempotent() {
    let dir = scratch("running-example", "idem");
    for (stage, file) in [("analyze", "analysis.json"), ("plan-tests", "plan.json")] {
        assert!(run(&dir, &[stage]).status.success());
        let first = fs::read(dir.join(file)).unwrap();
        assert!(run(&dir, &[stage]).status.success());
        assert_eq!(first, fs::read(dir.join(file)).unwrap(), "{stage} output changed");
    }
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn plan_then_coverage_then_run() {
    let dir = scratch("running-example", "pipe");
    let plan = run(&dir, &["plan-tests"]);
    assert!(stdout(&plan).contains("12 flow tests + 6 role-coverage tests = 18"));
    let cov = run(&dir, &["check-coverage"]);
    assert!(cov.status.success());
    assert!(stdout(&cov).contains("flow coverage: satisfied; role coverage: satisfied"));
    let ok = run(&dir, &["run-tests", "--in-process"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("18 tests: 18 success"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn failing_verdicts_give_exit_status_one() {
    let dir = scratch("permissions-issue", "perm");
    assert!(run(&dir, &["plan-tests"]).status.success());
    let bearer = run(&dir, &["run-tests", "--in-process"]);
    assert_eq!(bearer.status.code(), Some(0));
    let fine = run(&dir, &["run-tests", "--in-process", "--scheme", "fine-grained"]);
    assert_eq!(fine.status.code(), Some(1));
    assert!(stdout(&fine).contains("createCommitOnBranch->compare#1/negative"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn review_init_refuses_to_overwrite() {
    let dir = scratch("running-example", "review");
    let out = run(&dir, &["review", "init"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already exists"));
    assert!(run(&dir, &["review", "init", "--force"]).status.success());
    let ledger: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger.as_array().unwrap().len(), 6);
    assert!(ledger.as_array().unwrap().iter().all(|e| e["status"] == "unreviewed"));
    // an unreviewed ledger blocks planning unless explicitly overridden
    assert_eq!(run(&dir, &["plan-tests"]).status.code(), Some(2));
    assert!(run(&dir, &["plan-tests", "--include-unreviewed"]).status.success());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn oracle_reports_agreement_and_indirect_flows() {
    let dir = scratch("toy-dangling", "oracle");
    let out = run(&dir, &["oracle", "--max-depth", "3", "--indirect", "createIncidentT:deleteT"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("0 disagreements"));
    assert!(text.contains("createIncidentT ; deleteIncidentA ; deleteT"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn ingest_writes_a_type_graph_and_skeletons() {
    let dir = scratch("running-example", "ingest");
    let tg = dir.join("tg.json");
    let sk = dir.join("skeletons.json");
    let out = bin()
        .arg("ingest")
        .arg(dir.join("schema.graphql"))
        .arg("--out")
        .arg(&tg)
        .arg("--derive-skeletons")
        .arg(&sk)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&tg).unwrap()).unwrap();
    let names: Vec<&str> = doc["node_types"].as_array().unwrap().iter().map(|n| n["name"].as_str().unwrap()).collect();
    for t in ["Issue", "Project", "Repository", "User"] {
        assert!(names.contains(&t), "{names:?}");
    }
    let rules: serde_json::Value = serde_json::from_slice(&fs::read(&sk).unwrap()).unwrap();
    assert!(!rules["rules"].as_array().unwrap().is_empty());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn invalid_inputs_name_the_file() {
    let dir = scratch("running-example", "bad");
    fs::write(dir.join("roles.json"), "{ \"roles\": [\"Owner\"],\n  \"order\": [[\"Owner\", \"Nobody\"]] }").unwrap();
    let out = run(&dir, &["plan-tests"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("roles.json"), "{err}");
    fs::write(dir.join("rules.json"), "{\"rules\": [\n  {\"name\": 3}\n]}").unwrap();
    let out = run(&dir, &["derive-rules"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rules.json") && err.contains("line 2"), "{err}");
    fs::remove_dir_all(dir).unwrap();
}
