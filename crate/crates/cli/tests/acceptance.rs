//! One check per acceptance criterion. Each prints a PASS/FAIL line with its
//! runtime; the test fails if any check fails or overruns its time limit.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use regrepair_core::adapter::{self, AdapterError, FileTree, TestSelection};
use regrepair_core::changes::{
    compute_diff, describe, intersect_with_coverage, patch_stats, LineSide,
};
use regrepair_core::coverage::CoverageMap;
use regrepair_core::funnel::{run_funnel, FunnelOptions, SnapshotRunner};
use regrepair_core::gateway::{estimate_cost, CostModel};
use regrepair_core::metrics::RepairSummary;
use regrepair_core::model::{
    is_regression, CompileStatus, FunctionLocator, LineSpan, OutcomeMatrix, RegressionInstance,
    SnapshotRole, TestId, TestOutcome,
};
use regrepair_core::prompt::{
    build_feedback, initial_user_prompt, BugContext, FailingTest, FeedbackCase, PromptMode,
    SYSTEM_PROMPT,
};
use regrepair_core::repair::{apply_patch, validate_patch, Extraction, PatchCandidate};
use rust_decimal::Decimal;

use common::*;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn proptest_err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn functional() -> TestOutcome {
    TestOutcome::FunctionalFail {
        error_type: "AssertionError".into(),
        message: "x".into(),
    }
}

fn c1_regression_predicate() -> Check {
    let t = TestId::new("T::t");
    let mut accepted = Vec::new();
    for bits in 0u8..16 {
        let mut m = OutcomeMatrix::new(vec![t.clone()]);
        for (i, role) in SnapshotRole::ALL.into_iter().enumerate() {
            m.set_compile(role, CompileStatus::Ok);
            let passed = bits & (1 << (3 - i)) != 0;
            m.record(role, t.clone(), if passed { TestOutcome::Pass } else { functional() });
        }
        if is_regression(&m).map_err(|e| e.to_string())? {
            accepted.push(bits);
        }
    }
    ensure!(accepted == [0b1001], "accepted patterns {accepted:?}");
    Ok(())
}

/// Candidate kinds of the scripted funnel corpus.
#[derive(Clone, Copy)]
enum Kind {
    Old,
    NoCompile(SnapshotRole),
    Invalid(u8),
    ExtraFailure,
    FixFails,
    Good,
}

struct CorpusRunner(BTreeMap<String, Kind>);

impl SnapshotRunner for CorpusRunner {
    fn compile(&self, bug: &RegressionInstance, role: SnapshotRole) -> Result<CompileStatus, AdapterError> {
        Ok(match self.0[&bug.bug_id] {
            Kind::NoCompile(r) if r == role => CompileStatus::CompileFail {
                message: "error: cannot find symbol".into(),
            },
            _ => CompileStatus::Ok,
        })
    }

    fn run_tests(
        &self,
        bug: &RegressionInstance,
        role: SnapshotRole,
        tests: &TestSelection,
        _timeout: Duration,
    ) -> Result<BTreeMap<TestId, TestOutcome>, AdapterError> {
        let kind = self.0[&bug.bug_id];
        let idx = SnapshotRole::ALL.iter().position(|r| *r == role).unwrap();
        let pattern = match kind {
            Kind::Invalid(p) => p,
            _ => 0b1001,
        };
        let witness = if pattern & (1 << (3 - idx)) != 0 {
            TestOutcome::Pass
        } else {
            functional()
        };
        let mut out = BTreeMap::from([(TestId::new("W::witness"), witness)]);
        if *tests == TestSelection::All {
            let other = match (kind, role) {
                (Kind::ExtraFailure, SnapshotRole::PreFixing) | (Kind::FixFails, SnapshotRole::Fixing) => {
                    functional()
                }
                _ => TestOutcome::Pass,
            };
            out.insert(TestId::new("W::other"), other);
        }
        Ok(out)
    }
}

fn instance(id: &str, date: NaiveDate) -> RegressionInstance {
    RegressionInstance {
        bug_id: id.into(),
        project_id: "p".into(),
        inducing_commit: "a".into(),
        fixing_commit: "b".into(),
        fixing_date: Some(date),
        witness_tests: vec![TestId::new("W::witness")],
        inducing_message: String::new(),
        fixing_message: String::new(),
        buggy_function: FunctionLocator {
            file_path: "A.java".into(),
            signature: "void f()".into(),
            line_span: LineSpan::new(1, 2).unwrap(),
        },
    }
}

fn c2_funnel() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    six_bug_store(dir.path());
    let report = dir.path().join("funnel-report.json");
    let out = regrepair([
        "validate".as_ref(),
        "--store".as_ref(),
        dir.path().as_os_str(),
        "--cutoff".as_ref(),
        "2017-06-01".as_ref(),
        "--out".as_ref(),
        report.as_os_str(),
    ]);
    ensure!(out.status.code() == Some(0), "validate exited {:?}", out.status.code());
    ensure!(stdout(&out).contains("counts: 6/1/1/1/1/2"), "printed:\n{}", stdout(&out));
    ensure!(report.is_file(), "funnel-report.json missing");

    let empty = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = regrepair([
        "validate".as_ref(),
        "--store".as_ref(),
        empty.path().as_os_str(),
        "--out".as_ref(),
        empty.path().join("r.json").as_os_str(),
    ]);
    ensure!(
        out.status.code() == Some(0) && stdout(&out).contains("counts: 0/0/0/0/0/0"),
        "empty store: {}",
        stdout(&out)
    );

    // 1274 candidates scripted to the reference stage outcomes
    let invalid: Vec<u8> = (0u8..16).filter(|p| *p != 0b1001).collect();
    let roles = SnapshotRole::ALL;
    let mut kinds = Vec::new();
    kinds.extend((0..711).map(|_| Kind::Old));
    kinds.extend((0..179).map(|i| Kind::NoCompile(roles[i % 4])));
    kinds.extend((0..223).map(|i| Kind::Invalid(invalid[i % invalid.len()])));
    kinds.extend((0..62).map(|i| if i % 2 == 0 { Kind::ExtraFailure } else { Kind::FixFails }));
    kinds.extend((0..99).map(|_| Kind::Good));
    let cutoff = NaiveDate::from_ymd_opt(2017, 6, 1).unwrap();
    let mut candidates = Vec::new();
    let mut script = BTreeMap::new();
    for (i, k) in kinds.into_iter().enumerate() {
        let id = format!("cand-{i:04}");
        let date = match k {
            Kind::Old => NaiveDate::from_ymd_opt(2012 + (i % 5) as i32, 1 + (i % 12) as u32, 3).unwrap(),
            _ => cutoff + chrono::Days::new((i % 1500) as u64),
        };
        candidates.push(instance(&id, date));
        script.insert(id, k);
    }
    let r = run_funnel(
        &candidates,
        cutoff,
        &CorpusRunner(script),
        FunnelOptions {
            timeout: Duration::from_secs(1),
            parallelism: 4,
        },
    );
    ensure!(
        r.survivors() == [1274, 563, 384, 161, 99],
        "survivors {:?}",
        r.survivors()
    );
    Ok(())
}

fn line_sets() -> impl Strategy<Value = BTreeMap<String, BTreeSet<u32>>> {
    prop::collection::btree_map(
        prop::sample::select(vec!["A.java".to_string(), "B.java".to_string(), "C.java".to_string()]),
        prop::collection::btree_set(1u32..30, 0..12),
        0..3,
    )
}

fn cov(m: &BTreeMap<String, BTreeSet<u32>>) -> CoverageMap {
    let mut c = CoverageMap::new();
    for (f, lines) in m {
        c.extend_file(f, lines.iter().copied());
    }
    c
}

/// Files of 30 lines whose new version rewrites exactly `changed` lines.
fn rewriting(changed: &BTreeMap<String, BTreeSet<u32>>) -> (FileTree, FileTree) {
    let (mut old, mut new) = (FileTree::new(), FileTree::new());
    for (f, lines) in changed {
        let o: String = (1..=30).map(|i| format!("l{i}\n")).collect();
        let n: String = (1..=30)
            .map(|i| if lines.contains(&i) { format!("m{i}\n") } else { format!("l{i}\n") })
            .collect();
        old.insert(f.clone(), o.into_bytes());
        new.insert(f.clone(), n.into_bytes());
    }
    (old, new)
}

fn c3_coverage_intersection() -> Check {
    let mut runner = TestRunner::new(Config::with_cases(1000));
    runner
        .run(&(line_sets(), line_sets(), line_sets()), |(changed, g, extra)| {
            let (old, new) = rewriting(&changed);
            let cs = compute_diff(&old, &new);
            let r = intersect_with_coverage(&cs, &cov(&g), LineSide::New);
            let mut bigger = g.clone();
            for (f, l) in &extra {
                bigger.entry(f.clone()).or_default().extend(l);
            }
            let r2 = intersect_with_coverage(&cs, &cov(&bigger), LineSide::New);
            for (f, lines) in &changed {
                let empty = BTreeSet::new();
                let expected: BTreeSet<u32> = lines.intersection(g.get(f).unwrap_or(&empty)).copied().collect();
                let got = r.get(f).cloned().unwrap_or_default();
                prop_assert_eq!(&got, &expected);
                let got2 = r2.get(f).cloned().unwrap_or_default();
                prop_assert!(got.is_subset(&got2));
            }
            for (f, _) in r.files() {
                prop_assert!(changed.get(f).is_some_and(|l| !l.is_empty()));
            }
            Ok(())
        })
        .map_err(proptest_err)
}

fn small_file() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "{", "}", "", "x = 1;"]), 0..14),
        any::<bool>(),
    )
        .prop_map(|(lines, nl)| {
            let mut s = lines.join("\n");
            if nl && !lines.is_empty() {
                s.push('\n');
            }
            s
        })
}

fn c4_diff_replay() -> Check {
    let mut runner = TestRunner::new(Config::with_cases(500));
    runner
        .run(&(small_file(), small_file(), small_file()), |(a, b, c)| {
            let old: FileTree = [("A.java".to_string(), a.into_bytes()), ("B.java".to_string(), b.clone().into_bytes())]
                .into_iter()
                .collect();
            let new: FileTree = [("B.java".to_string(), c.into_bytes()), ("C.java".to_string(), b.into_bytes())]
                .into_iter()
                .collect();
            let cs = compute_diff(&old, &new);
            let applied = cs.apply(&old).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&applied, &new);
            let s = patch_stats(&cs, None);
            prop_assert_eq!(s.patch_size, s.added + s.removed + s.modified);
            let edits: u32 = cs.files.values().map(|d| d.edits().count() as u32).sum();
            prop_assert_eq!(s.patch_size, edits);
            Ok(())
        })
        .map_err(proptest_err)
}

fn c5_metrics() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/rate_tables.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let mut n = 0;
    for rec in rdr.records() {
        let r = rec.map_err(|e| e.to_string())?;
        let p: u64 = r[2].parse().map_err(|_| "bad count")?;
        let c: u64 = r[3].parse().map_err(|_| "bad count")?;
        let s = RepairSummary::new(&r[1], p, c, 99);
        let got = [s.pr_display(), s.cr_display(), s.precision_display()];
        ensure!(got == [&r[4], &r[5], &r[6]], "{}: got {got:?}", &r[1]);
        n += 1;
    }
    ensure!(n == 23, "expected 23 rows, read {n}");
    Ok(())
}

fn golden(name: &str) -> Result<String, String> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name);
    std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
}

fn c6_prompt_goldens() -> Check {
    let ctx = |changed: bool| BugContext {
        buggy_function_source: "static boolean isInvisibleChar(int c) {\n    return c == 8203;\n}\n".into(),
        failing_tests: vec![
            FailingTest {
                test_name: "org.demo.CharUtilsTest::testSoftHyphenIsInvisible".into(),
                error_type: "org.opentest4j.AssertionFailedError".into(),
                error_message: "expected: <true> but was: <false>".into(),
            },
            FailingTest {
                test_name: "org.demo.TextLayoutTest::testWidth".into(),
                error_type: "java.lang.AssertionError".into(),
                error_message: "expected:<5> but was:<6>".into(),
            },
        ],
        bic_diff: changed.then(|| {
            "@@ -1,3 +1,3 @@\n static boolean isInvisibleChar(int c) {\n-    return c == 8203 || c == 173;\n+    return c == 8203;\n }\n".into()
        }),
        bic_commit_message: Some("Simplify invisible character check\n".into()),
        function_changed_in_bic: changed,
    };
    let prompts = [
        (initial_user_prompt(&ctx(false), PromptMode::Baseline), "prompt_baseline.txt"),
        (initial_user_prompt(&ctx(true), PromptMode::WithBic), "prompt_bic_changed.txt"),
        (initial_user_prompt(&ctx(false), PromptMode::WithBic), "prompt_bic_unchanged.txt"),
    ];
    for (p, file) in prompts {
        ensure!(p.map_err(|e| e.to_string())? == golden(file)?, "{file} differs");
    }
    ensure!(SYSTEM_PROMPT.trim_end() == golden("system.txt")?, "system prompt differs");
    let feedback = [
        (
            FeedbackCase::CompilationError("CharUtils.java:6: error: cannot find symbol\n  symbol:   method isZeroWidth(int)\n".into()),
            "feedback_compile.txt",
        ),
        (
            FeedbackCase::FunctionalError("org.demo.CharUtilsTest::testSoftHyphenIsInvisible: org.opentest4j.AssertionFailedError: expected: <true> but was: <false>".into()),
            "feedback_functional.txt",
        ),
        (FeedbackCase::NoResponseCode, "feedback_nocode.txt"),
        (FeedbackCase::Timeout, "feedback_timeout.txt"),
    ];
    for (case, file) in feedback {
        let m = build_feedback(&case).map_err(|e| e.to_string())?;
        ensure!(m.content == golden(file)?, "{file} differs");
    }
    let all = [
        golden("system.txt")?,
        golden("prompt_baseline.txt")?,
        golden("feedback_compile.txt")?,
    ]
    .join("\n");
    for s in [
        "You are an Automated Program Repair Tool",
        "Let's think step by step to fix the bug",
        "The fixed version is not compilable",
    ] {
        ensure!(all.contains(s), "missing verbatim string {s:?}");
    }
    Ok(())
}

mod loop_check {
    use super::*;
    use regrepair_core::adapter::{
        write_stored_bug, FixtureOverride, ScriptedCompile, SnapshotSpec, StoredBug,
    };
    use regrepair_core::gateway::{MockClient, MockScript};
    use regrepair_core::prompt::{Role, Strategy as Loop};
    use regrepair_core::repair::{feedback_messages, repair_bug, FinalOutcome, RepairConfig, RepairOutput};

    /// The regression fixture of the common module with pre-fixing overrides:
    /// BROKEN fails to compile, FIXED passes the witness test.
    pub fn bug(root: &Path) -> StoredBug {
        let on = |marker: &str| FixtureOverride {
            file: SRC.into(),
            contains: marker.into(),
            ..Default::default()
        };
        let mut specs: Vec<(SnapshotRole, SnapshotSpec)> = SnapshotRole::ALL
            .into_iter()
            .zip(regression().iter().map(Snap::spec))
            .collect();
        let fx = specs[2].1.fixture.as_mut().unwrap();
        fx.overrides = vec![
            FixtureOverride {
                compile: Some(ScriptedCompile::Fail {
                    fail: "Lib.java:3: error: not a statement".into(),
                }),
                ..on("BROKEN")
            },
            FixtureOverride {
                tests: BTreeMap::from([(WITNESS.to_string(), pass())]),
                ..on("FIXED")
            },
        ];
        write_stored_bug(root, &manifest("RegressionBug-9", "2022-05-05"), &specs).unwrap()
    }

    pub fn reply(marker: u8) -> String {
        match marker {
            0 => "```java\nint f(int x) {\n    return x + 1; // BROKEN\n}\n```".into(),
            1 => "```java\nint f(int x) {\n    return x - 1; // WRONG\n}\n```".into(),
            2 => "No code this time.".into(),
            _ => "```java\nint f(int x) {\n    return x + 1; // FIXED\n}\n```".into(),
        }
    }

    pub fn run(bug: &StoredBug, replies: &[u8]) -> RepairOutput {
        let script: MockScript = BTreeMap::from([(
            bug.instance.bug_id.clone(),
            replies.iter().map(|r| reply(*r)).collect(),
        )]);
        let client = MockClient::new(script);
        let ctx = BugContext {
            buggy_function_source: "int f(int x) {\n    return x;\n}".into(),
            failing_tests: vec![FailingTest {
                test_name: WITNESS.into(),
                error_type: "java.lang.AssertionError".into(),
                error_message: "boom".into(),
            }],
            bic_diff: None,
            bic_commit_message: None,
            function_changed_in_bic: false,
        };
        let cfg = RepairConfig::new(Loop::Conversational, PromptMode::Baseline);
        repair_bug(bug, &ctx, &client, &cfg)
    }

    pub fn check() -> Check {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let bug = bug(dir.path());

        let out = run(&bug, &[0, 3]);
        let fb = feedback_messages(&out.messages);
        ensure!(out.trace.calls.len() == 2 && out.trace.is_plausible(), "(a) {:?}", out.trace.final_outcome);
        ensure!(
            fb.len() == 1 && fb[0].content.starts_with("The fixed version is not compilable."),
            "(a) feedback {fb:?}"
        );

        let out = run(&bug, &[1]);
        ensure!(out.trace.calls.len() == 10, "(b) {} calls", out.trace.calls.len());
        ensure!(out.trace.final_outcome == FinalOutcome::Exhausted, "(b) not exhausted");
        let shape: Vec<(u32, u32)> = out.trace.calls.iter().map(|c| (c.attempt, c.round)).collect();
        let want: Vec<(u32, u32)> = (1..=2).flat_map(|a| (1..=5).map(move |r| (a, r))).collect();
        ensure!(shape == want, "(b) shape {shape:?}");
        let first_user = |attempt: u32| {
            out.messages
                .iter()
                .find(|m| m.attempt == attempt && m.role == Role::User)
                .map(|m| m.content.clone())
        };
        ensure!(
            first_user(1).is_some() && first_user(1) == first_user(2),
            "(b) restart prompt differs from attempt 1"
        );

        let mut runner = TestRunner::new(Config::with_cases(200));
        runner
            .run(&prop::collection::vec(0u8..4, 1..14), |replies| {
                let out = run(&bug, &replies);
                prop_assert!(out.trace.calls.len() <= 10);
                let served = |i: usize| replies[i.min(replies.len() - 1)];
                let expected = (0..10).find(|i| served(*i) == 3).map(|i| i + 1).unwrap_or(10);
                prop_assert_eq!(out.trace.calls.len(), expected);
                Ok(())
            })
            .map_err(|e| format!("(c) {e}"))
    }
}

fn demo_repair(out: &Path) -> Check {
    let f = fixtures();
    let o = regrepair([
        "repair".as_ref(),
        "--store".as_ref(),
        f.join("demo-store").as_os_str(),
        "--mock".as_ref(),
        f.join("mock-script.json").as_os_str(),
        "--strategy".as_ref(),
        "conversational".as_ref(),
        "--mode".as_ref(),
        "with-bic".as_ref(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    ensure!(
        o.status.code() == Some(0),
        "repair exited {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    Ok(())
}

fn c8_cost() -> Check {
    ensure!(
        estimate_cost(1000, 1000, &CostModel::GPT_4O) == Decimal::new(125, 4),
        "cost(1000, 1000) = {}",
        estimate_cost(1000, 1000, &CostModel::GPT_4O)
    );
    let mut runner = TestRunner::new(Config::with_cases(300));
    runner
        .run(&(0u64..10_000_000, 0u64..10_000_000, 0u64..10_000_000, 0u64..10_000_000), |(a, b, c, d)| {
            let cm = CostModel::GPT_4O;
            prop_assert_eq!(estimate_cost(a + b, c + d, &cm), estimate_cost(a, c, &cm) + estimate_cost(b, d, &cm));
            prop_assert_eq!(estimate_cost(2 * a, 2 * c, &cm), estimate_cost(a, c, &cm) * Decimal::from(2));
            Ok(())
        })
        .map_err(proptest_err)?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    demo_repair(dir.path())?;
    let text = std::fs::read_to_string(dir.path().join("trace-RegressionBug-1.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let dec = |v: &serde_json::Value| -> Decimal { v.as_str().unwrap().parse().unwrap() };
    let (in_price, out_price) = (Decimal::new(25, 4), Decimal::new(1, 2));
    let mut total = Decimal::ZERO;
    for call in v["calls"].as_array().ok_or("no calls")? {
        let p = Decimal::from(call["prompt_tokens"].as_u64().unwrap());
        let r = Decimal::from(call["reply_tokens"].as_u64().unwrap());
        total += p * in_price / Decimal::from(1000) + r * out_price / Decimal::from(1000);
    }
    ensure!(total > Decimal::ZERO, "no tokens counted");
    ensure!(dec(&v["total_cost"]) == total, "trace total {} vs summed {total}", v["total_cost"]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure!(dec(&summary["total_cost"]) == total, "summary total {}", summary["total_cost"]);
    Ok(())
}

fn c9_end_to_end() -> Check {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    demo_repair(a.path())?;
    demo_repair(b.path())?;
    let trace = "trace-RegressionBug-1.json";
    let ta = std::fs::read(a.path().join(trace)).map_err(|e| e.to_string())?;
    let tb = std::fs::read(b.path().join(trace)).map_err(|e| e.to_string())?;
    ensure!(ta == tb, "traces differ between runs");
    let ma = std::fs::read(a.path().join("messages-RegressionBug-1.jsonl")).map_err(|e| e.to_string())?;
    let mb = std::fs::read(b.path().join("messages-RegressionBug-1.jsonl")).map_err(|e| e.to_string())?;
    ensure!(ma == mb, "message logs differ between runs");

    let v: serde_json::Value = serde_json::from_slice(&ta).map_err(|e| e.to_string())?;
    ensure!(v["final"]["outcome"] == "plausible", "final outcome {}", v["final"]);
    let patch = v["final"]["patch"].as_str().ok_or("no patch")?.to_string();
    let patch_file = v["final"]["patch_file"].as_str().ok_or("no patch file")?;
    let diff = std::fs::read_to_string(a.path().join(patch_file)).map_err(|e| e.to_string())?;
    ensure!(diff.starts_with("--- a/") && diff.contains("\n@@ "), "not a unified diff:\n{diff}");

    let store = regrepair_core::adapter::BugStore::open(fixtures().join("demo-store")).map_err(|e| e.to_string())?;
    let bug = store.load("RegressionBug-1").map_err(|e| e.to_string())?;
    let ws_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = adapter::checkout(&bug, SnapshotRole::PreFixing, &ws_dir.path().join("ws")).map_err(|e| e.to_string())?;
    let candidate = PatchCandidate {
        function_source: patch,
        extraction: Extraction::FencedBlock,
        raw_reply: String::new(),
    };
    let pws = apply_patch(&ws, &bug.instance.buggy_function, &candidate).map_err(|e| e.to_string())?;
    ensure!(pws.unified_diff() == diff, "re-applied patch differs from the stored diff");
    let report = validate_patch(&pws, &bug.instance.witness_tests, true, Duration::from_secs(30))
        .map_err(|e| e.to_string())?;
    ensure!(report.verdict.is_plausible(), "verdict {:?}", report.verdict);
    Ok(())
}

fn c10_patch_stats() -> Check {
    let corpus = developer_patch_corpus();
    let mut sizes = Vec::new();
    let mut chunks = Vec::new();
    for (i, (size, n)) in corpus.iter().enumerate() {
        let (old, new) = patch_pair(*size, *n);
        let path = format!("src/Bug{i}.java");
        let cs = compute_diff(
            &[(path.clone(), old.into_bytes())].into_iter().collect(),
            &[(path, new.into_bytes())].into_iter().collect(),
        );
        let s = patch_stats(&cs, None);
        ensure!((s.patch_size, s.chunks) == (*size, *n), "bug {i}: got {}/{} want {size}/{n}", s.patch_size, s.chunks);
        sizes.push(s.patch_size);
        chunks.push(s.chunks);
    }
    ensure!(sizes.iter().sum::<u32>() == 1796, "total size {}", sizes.iter().sum::<u32>());
    let d = describe(&sizes).ok_or("empty")?;
    let got = [d.min, d.p25, d.p50, d.p75, d.p90, d.p95, d.max];
    ensure!(got == [1, 1, 4, 13, 33, 92, 256], "patch size quantiles {got:?}");
    let d = describe(&chunks).ok_or("empty")?;
    let got = [d.min, d.p25, d.p50, d.p75, d.p90, d.p95, d.max];
    ensure!(got == [1, 1, 1, 3, 10, 31, 93], "chunk quantiles {got:?}");
    ensure!(chunks.iter().filter(|c| **c == 1).count() == 51, "single-chunk patches");
    Ok(())
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, fn() -> Check, Duration);
    let criteria: [Criterion; 10] = [
        ("regression predicate", c1_regression_predicate, Duration::from_secs(1)),
        ("funnel accounting", c2_funnel, Duration::from_secs(30)),
        ("coverage intersection", c3_coverage_intersection, Duration::from_secs(10)),
        ("diff replay", c4_diff_replay, Duration::from_secs(30)),
        ("metrics reproduction", c5_metrics, Duration::from_secs(1)),
        ("prompt goldens", c6_prompt_goldens, Duration::from_secs(1)),
        ("conversational loop", loop_check::check, Duration::from_secs(30)),
        ("cost accounting", c8_cost, Duration::from_secs(1)),
        ("end-to-end hermetic repair", c9_end_to_end, Duration::from_secs(60)),
        ("patch statistics", c10_patch_stats, Duration::from_secs(5)),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panic".into())));
        let took = start.elapsed();
        let result = result.and_then(|()| {
            if took <= limit {
                Ok(())
            } else {
                Err(format!("took {took:.2?}, limit {limit:?}"))
            }
        });
        match &result {
            Ok(()) => writeln!(out, "criterion {}: PASS {name} ({took:.2?})", i + 1).unwrap(),
            Err(e) => {
                writeln!(out, "criterion {}: FAIL {name} ({took:.2?}): {e}", i + 1).unwrap();
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
