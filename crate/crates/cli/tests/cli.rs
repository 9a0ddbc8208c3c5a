use axe_cli::{find_manifests, run};
use std::path::{Path, PathBuf};

fn manifest(name: &str) -> PathBuf {
    axe_fixtures::fixtures_dir().join(name).join("manifest.toml")
}

fn axe(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["axe"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn text_format_shows_trace() {
    let m = manifest("fixture-a");
    let (code, out, _) = axe(&["analyze", "--manifest", path(&m), "--format", "text"]);
    assert_eq!(code, 1);
    assert!(out.contains("ACCESS_CONTROL_OMISSION"));
    assert!(out.contains("trace: Receive -> _transfer -> {received, balance}"));
}

#[test]
fn unknown_format_is_usage_error() {
    let m = manifest("fixture-a");
    let (code, _, err) = axe(&["analyze", "--manifest", path(&m), "--format", "xml"]);
    assert_eq!(code, 2);
    assert!(err.contains("xml"));
}

#[test]
fn report_written_to_out_with_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let m = manifest("fixture-a");
    let (code, stdout, _) = axe(&["analyze", "--manifest", path(&m), "--out", path(&out), "--dump-graphs"]);
    assert_eq!(code, 1);
    assert!(stdout.is_empty());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["bridge"], "fixture-a");
    let xcfg = std::fs::read_to_string(dir.path().join("a.json.xcfg.txt")).unwrap();
    assert!(xcfg.contains("[Emitting]") && xcfg.contains("[Informing]"));
    let xdfg = std::fs::read_to_string(dir.path().join("a.json.xdfg.txt")).unwrap();
    assert!(xdfg.contains("event-arg"));
}

#[test]
fn cli_flags_override_manifest_config() {
    let m = manifest("fixture-a");
    let (_, out, _) = axe(&["analyze", "--manifest", path(&m), "--max-path-depth", "99", "--loop-unroll", "2"]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["config"]["max_path_depth"], 99);
    assert_eq!(report["config"]["loop_unroll"], 2);
    assert_eq!(report["config"]["assoc_threshold"], 0.5);
}

#[test]
fn rules_dump_is_json() {
    let (code, out, _) = axe(&["rules", "--dump"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.is_object());
    let (code, _, _) = axe(&["rules"]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_manifest_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.toml");
    std::fs::write(&m, "[bridge]\nname = 3\n").unwrap();
    let (code, out, err) = axe(&["analyze", "--manifest", path(&m)]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(!err.is_empty());
}

#[test]
fn batch_of_empty_dir_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = axe(&["batch", path(dir.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("no manifests"));
}

#[test]
fn batch_records_bad_manifest_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fixture-a", "fixture-a-patched"] {
        axe_fixtures::by_name(name).unwrap().write(dir.path()).unwrap();
    }
    std::fs::create_dir(dir.path().join("broken")).unwrap();
    std::fs::write(dir.path().join("broken/manifest.toml"), "not toml [").unwrap();
    let reports = tempfile::tempdir().unwrap();
    let (code, out, _) = axe(&["batch", path(dir.path()), "--out", path(reports.path())]);
    assert_eq!(code, 2);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[1].starts_with("fixture-a "), "{out}");
    assert!(out.contains("error"));
    assert!(out.contains("3 bridges, 1 flagged, 1 errors"));
    assert!(reports.path().join("fixture-a.json").exists());
    assert!(reports.path().join("fixture-a-patched.json").exists());
}

#[test]
fn batch_exit_reflects_findings() {
    let dir = tempfile::tempdir().unwrap();
    axe_fixtures::by_name("fixture-a-patched").unwrap().write(dir.path()).unwrap();
    let reports = tempfile::tempdir().unwrap();
    let (code, _, _) = axe(&["batch", path(dir.path()), "--out", path(reports.path())]);
    assert_eq!(code, 0);
    axe_fixtures::by_name("fixture-b").unwrap().write(dir.path()).unwrap();
    let (code, _, _) = axe(&["batch", path(dir.path()), "--out", path(reports.path()), "--format", "text"]);
    assert_eq!(code, 1);
    assert!(reports.path().join("fixture-b.txt").exists());
}

#[test]
fn manifests_found_one_level_down() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("x/y")).unwrap();
    std::fs::write(dir.path().join("top.toml"), "").unwrap();
    std::fs::write(dir.path().join("x/manifest.toml"), "").unwrap();
    std::fs::write(dir.path().join("x/y/deep.toml"), "").unwrap();
    let found = find_manifests(dir.path());
    assert_eq!(found.len(), 2);
}
