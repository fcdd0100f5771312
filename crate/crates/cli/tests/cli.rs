use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use tracelift_core::canonical;
use tracelift_core::fixtures::{evolution_repo, churn_scenario, ScenarioIds};

fn tracelift(repo: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracelift"))
        .arg("--repo")
        .arg(repo)
        .args(args)
        .env_remove("TRACELIFT_REPO")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn scenario(dir: &Path) -> (std::path::PathBuf, ScenarioIds) {
    let root = dir.join("repo");
    let (repo, ids) = churn_scenario(&root, &dir.join("captures")).unwrap();
    drop(repo);
    (root, ids)
}

#[test]
fn bundled_taxonomy_validates_strictly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tracelift(tmp.path(), &["taxonomy", "validate", "--bundled", "--strict", "--json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["ok"], Value::Bool(true));
}

#[test]
fn invalid_taxonomy_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut t: Value = serde_json::from_slice(&tracelift(tmp.path(), &["taxonomy", "show", "--json"]).stdout).unwrap();
    t["dimensions"][0]["categories"].as_array_mut().unwrap().truncate(1);
    let file = tmp.path().join("t.json");
    fs::write(&file, t.to_string()).unwrap();
    let f = file.to_str().unwrap();
    assert_eq!(code(&tracelift(tmp.path(), &["taxonomy", "validate", "--file", f])), 1);
    assert_eq!(code(&tracelift(tmp.path(), &["taxonomy", "validate", "--file", f, "--descriptive"])), 0);

    let diff = tracelift(tmp.path(), &["taxonomy", "diff", "--from", "bundled", "--to", f, "--json"]);
    assert_eq!(code(&diff), 0);
    assert!(!json(&diff)["categories"]["removed"].as_array().unwrap().is_empty());
}

#[test]
fn end_conditions_met_on_last_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("repo");
    drop(evolution_repo(&root).unwrap());
    let out = tracelift(&root, &["check-end-conditions", "--prev", "7", "--curr", "8", "--json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["met"], Value::Bool(true));

    let out = tracelift(&root, &["check-end-conditions", "--prev", "6", "--curr", "7", "--json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["met"], Value::Bool(false));

    let cov = json(&tracelift(&root, &["coverage", "--json"]));
    assert!(cov.as_object().unwrap().values().all(|n| n.as_u64().unwrap() > 0));
}

#[test]
fn locate_json_is_canonical_and_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let (root, ids) = scenario(tmp.path());
    let a = tracelift(&root, &["locate", "--origin", "machine", "--json"]);
    let b = tracelift(&root, &["locate", "--origin", "machine", "--json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    let found: Vec<&str> = v.as_array().unwrap().iter().map(|s| s["artifact_id"].as_str().unwrap()).collect();
    assert_eq!(found, [ids.wrangling.as_str(), ids.drift_alert.as_str()]);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.trim_end(), canonical::to_string(&v).unwrap());
}

#[test]
fn repo_env_overrides_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (root, _) = scenario(tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_tracelift"))
        .args(["--repo", "/nonexistent", "locate", "--json"])
        .env("TRACELIFT_REPO", &root)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out).as_array().unwrap().len(), 5);
}

#[test]
fn export_writes_view_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let (root, _) = scenario(tmp.path());
    assert_eq!(code(&tracelift(&root, &["export"])), 0);
    let first = fs::read(root.join("exports/view-bundle.json")).unwrap();
    assert_eq!(code(&tracelift(&root, &["export"])), 0);
    assert_eq!(fs::read(root.join("exports/view-bundle.json")).unwrap(), first);
    let bundle: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(bundle["schema_version"], "tracelift-view/1");
}

#[test]
fn write_commands_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("repo");
    assert_eq!(code(&tracelift(&root, &["init", "--descriptive"])), 0);

    let dump = tmp.path().join("dump.json");
    fs::write(&dump, r#"{"data":{"rows":3},"plan":["impute"]}"#).unwrap();
    let manifest = tmp.path().join("capture.json");
    fs::write(
        &manifest,
        r#"{"source":"dump.json","demarcations":[
            {"selector":{"kind":"json-path","path":"data"},"type":"initial-dataset","title":"data","generator":"human"},
            {"selector":{"kind":"json-path","path":"plan"},"type":"wrangling-recommendations","title":"plan","generator":"machine"}]}"#,
    )
    .unwrap();
    let out = tracelift(&root, &["ingest", manifest.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let created = json(&out);
    let data = created[0]["artifact_id"].as_str().unwrap().to_owned();
    let plan = created[1]["artifact_id"].as_str().unwrap().to_owned();

    assert_eq!(code(&tracelift(&root, &["link", &data, &plan, "--declared-by", "machine"])), 0);
    assert_eq!(code(&tracelift(&root, &["link", &plan, &data])), 1);
    assert_eq!(code(&tracelift(&root, &["snapshot", "--label", "first"])), 0);
    let assign = ["--assign", "d1/cat1.2/c1.2.1", "--assign", "d2/cat2.1/c2.1.1", "--assign", "d3/cat3.2/c3.2.1", "--assign", "d4/cat4.1/c4.1.6"];
    let mut args = vec!["classify", data.as_str()];
    args.extend(assign);
    assert_eq!(code(&tracelift(&root, &args)), 0);
    assert_eq!(code(&tracelift(&root, &["snapshot"])), 0);

    let delta = json(&tracelift(&root, &["history", &data, "--compare", "1", "2", "--json"]));
    assert!(!delta["classification_added"].as_array().unwrap().is_empty());
    let card = json(&tracelift(&root, &["summarize", &plan, "--json"]));
    assert_eq!(card["upstream"][0], Value::String(data.clone()));
}

/// (args, expected exit code) against the scenario repository.
#[test]
fn exit_code_table() {
    let tmp = tempfile::tempdir().unwrap();
    let (root, ids) = scenario(tmp.path());
    let missing = tmp.path().join("missing.json");
    let missing = missing.to_str().unwrap();
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["taxonomy", "validate"], 0),
        (vec!["taxonomy", "show", "--json"], 0),
        (vec!["taxonomy", "diff", "--from", "bundled", "--to", "bundled"], 0),
        (vec!["taxonomy", "validate", "--file", missing], 3),
        (vec!["taxonomy", "diff", "--from", "rev:x", "--to", "bundled"], 2),
        (vec!["locate"], 0),
        (vec!["locate", "--phase", "analysis", "--json"], 0),
        (vec!["locate", "--characteristic", "c9.9.9"], 1),
        (vec!["locate", "--revisions", "3..1"], 1),
        (vec!["locate", "--revisions", "a..b"], 2),
        (vec!["locate", "--origin", "robot"], 2),
        (vec!["locate", "--bogus"], 2),
        (vec!["summarize", &ids.model_spec], 0),
        (vec!["summarize", "nope"], 1),
        (vec!["history", &ids.feature_set], 0),
        (vec!["history", &ids.feature_set, "--compare", "1", "2"], 0),
        (vec!["history", &ids.model_spec, "--compare", "1", "2"], 1),
        (vec!["history", &ids.feature_set, "--compare", "1"], 2),
        (vec!["link", &ids.drift_alert, &ids.dataset], 1),
        (vec!["link", &ids.dataset, &ids.dataset], 1),
        (vec!["classify", &ids.dataset, "--assign", "d1"], 2),
        (vec!["classify", &ids.dataset, "--assign", "d9/cat9.1/c9.1.1"], 1),
        (vec!["ingest", missing], 3),
        (vec!["revise-taxonomy", missing], 3),
        (vec!["check-end-conditions", "--prev", "1", "--curr", "2"], 1),
        (vec!["coverage"], 1),
        (vec!["init"], 1),
        (vec!["export"], 0),
        (vec!["snapshot"], 0),
        (vec!["frobnicate"], 2),
        (vec![], 2),
    ];
    for (args, expected) in cases {
        let out = tracelift(&root, &args);
        assert_eq!(code(&out), expected, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    fs::write(root.join(".lock"), "1").unwrap();
    assert_eq!(code(&tracelift(&root, &["snapshot"])), 3);
    assert_eq!(code(&tracelift(&root, &["locate"])), 0);
}

#[test]
fn not_a_repository_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tracelift(tmp.path(), &["locate", "--json"]);
    assert_eq!(code(&out), 1);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "not-a-repository");
}
