mod common;

use std::fs;
use std::path::Path;

use common::*;

fn demo_store() -> std::path::PathBuf {
    fixtures().join("demo-store")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn info_prints_manifest() {
    let out = regrepair(["info", "RegressionBug-1", "--store", s(&demo_store())]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("bug_id: RegressionBug-1"));
    assert!(text.contains("fixing_date: 2021-03-14"));
    assert!(text.contains("  - org.demo.CharUtilsTest::testSoftHyphenIsInvisible"));
    assert!(text.contains("snapshots: pre-inducing, inducing, pre-fixing, fixing"));

    let out = regrepair(["info", "RegressionBug-404", "--store", s(&demo_store())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn checkout_refuses_non_empty_destination() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("ws");
    let store = demo_store();
    let args = ["checkout", "RegressionBug-1", "pre-fixing", s(&dest), "--store", s(&store)];
    let first = regrepair(args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(dest.join("src/main/java/org/demo/CharUtils.java").is_file());
    let second = regrepair(args);
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&second.stderr).contains("not empty"));
}

#[test]
fn compile_and_test_a_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let witness = "org.demo.CharUtilsTest::testSoftHyphenIsInvisible";
    for (role, code) in [("fixing", 0), ("pre-fixing", 1)] {
        let ws = dir.path().join(role);
        let out = regrepair(["checkout", "RegressionBug-1", role, s(&ws), "--store", s(&demo_store())]);
        assert_eq!(out.status.code(), Some(0));

        let out = regrepair(["compile", s(&ws)]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout(&out).trim(), "OK");

        let out = regrepair(["test", s(&ws), "--tests", witness, "--timeout", "10"]);
        assert_eq!(out.status.code(), Some(code), "{role}");
        let expected = if code == 0 { format!("PASS {witness}") } else { format!("FAIL {witness}:") };
        assert!(stdout(&out).starts_with(&expected), "{}", stdout(&out));
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(regrepair(["checkout", "RegressionBug-1", "middle", "x"]).status.code(), Some(2));
    assert_eq!(regrepair(["no-such-command"]).status.code(), Some(2));
}

#[test]
fn validate_writes_funnel_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("funnel.json");
    let out = regrepair(["validate", "--store", s(&demo_store()), "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("counts: 1/0/0/0/0/1"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v.to_string().contains("RegressionBug-1"));
}

#[test]
fn config_interpolates_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "bug_store_path = \"${DEMO_STORE}\"\nstrategy = \"zero_shot\"\nmode = \"baseline\"\n\n[model]\nmodel_name = \"gpt-4o-2024-08-06\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = |store: Option<&Path>| {
        let mut c = command();
        c.args(["repair", "--config", s(&cfg), "--mock"])
            .arg(fixtures().join("mock-script.json"))
            .args(["--out", s(&out_dir)]);
        if let Some(st) = store {
            c.env("DEMO_STORE", st);
        } else {
            c.env_remove("DEMO_STORE");
        }
        c.output().unwrap()
    };
    let out = run(Some(&demo_store()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("zero-shot/baseline: 1 bugs, plausible 1"));

    let out = run(None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DEMO_STORE"));
}

#[test]
fn stats_of_one_line_fix() {
    let dir = tempfile::tempdir().unwrap();
    write_bug(dir.path(), &manifest("RegressionBug-1", "2020-02-02"), regression());
    let out_dir = dir.path().join("stats");
    let out = regrepair(["stats", "--store", s(dir.path()), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("patch_size,1,1,1,1,1,1,1"), "{summary}");
    assert!(summary.contains("chunks,1,1,1,1,1,1,1"));
    assert!(summary.contains("modified_lines,1,1,1,1,1,1,1"));
    let per_bug = fs::read_to_string(out_dir.join("per_bug.csv")).unwrap();
    assert_eq!(per_bug.lines().count(), 2);
}

#[test]
fn operator_distribution_counts_bugs() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let mut ann = Vec::new();
    for i in 1..=5 {
        let id = format!("RegressionBug-{i}");
        write_bug(&store, &manifest(&id, "2020-02-02"), regression());
        let ops = if i <= 3 {
            serde_json::json!([{"group": "cnd", "action": "A"}, {"group": "mc", "action": "M"}])
        } else {
            serde_json::json!([{"group": "rev", "action": "NA"}])
        };
        ann.push(serde_json::json!({"bug_id": id, "category": "local", "operators": ops}));
    }
    let ann_path = dir.path().join("ops.json");
    fs::write(&ann_path, serde_json::to_string(&ann).unwrap()).unwrap();
    let out_dir = dir.path().join("stats");
    let out = regrepair([
        "stats",
        "--store",
        s(&store),
        "--annotations",
        s(&ann_path),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("cndA: 3"), "{text}");
    assert!(text.contains("rev: 2"));
    assert!(out_dir.join("operators.json").is_file());
    assert!(out_dir.join("operators.csv").is_file());
}

#[test]
fn report_from_counts() {
    let out = regrepair([
        "report",
        "--counts",
        "A=33/9",
        "--counts",
        "B=43/16",
        "--counts",
        "C=0/0",
        "--dataset-size",
        "99",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines[0], "method,plausible,correct,plausible_rate,correct_rate,precision,total_cost");
    assert!(lines[1].starts_with("B,43,16,43.43%,16.16%,37.21%"));
    assert!(lines[2].starts_with("A,33,9,33.33%,9.09%,27.27%"));
    assert!(lines[3].starts_with("C,0,0,0%,0%,N/A"));

    let bad = regrepair(["report", "--counts", "A=3/9", "--dataset-size", "99"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn exhausted_budget_reports_no_plausible_patch() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    fs::write(
        &script,
        r#"{"RegressionBug-1": ["```java\nstatic boolean isInvisibleChar(int c) {\n    return isZeroWidth(c);\n}\n```"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = regrepair([
        "repair",
        "--store",
        s(&demo_store()),
        "--mock",
        s(&script),
        "--strategy",
        "zero-shot",
        "--mode",
        "baseline",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("plausible 0 (0%), correct 0 (0%), precision N/A"), "{}", stdout(&out));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("trace-RegressionBug-1.json")).unwrap()).unwrap();
    assert_eq!(trace["calls"].as_array().unwrap().len(), 10);

    // the run directory feeds the report command
    fs::write(out_dir.join("annotations.json"), "[]").unwrap();
    let out = regrepair(["report", &format!("zs={}", s(&out_dir)), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("zs,0,0,0%,0%,N/A"));
}

#[test]
fn live_repair_needs_api_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = command()
        .env_remove("OPENAI_API_KEY")
        .args(["repair", "--store", s(&demo_store()), "--out", s(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("OPENAI_API_KEY"));
}

#[test]
fn missing_mock_script_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    fs::write(&script, "{}").unwrap();
    let out = regrepair([
        "repair",
        "--store",
        s(&demo_store()),
        "--mock",
        s(&script),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
