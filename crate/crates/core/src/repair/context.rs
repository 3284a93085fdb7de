use std::fs;
use std::time::Duration;

use similar::TextDiff;

use super::{locate_function, RepairError};
use crate::adapter::{self, StoredBug, TestSelection};
use crate::changes::diff_text;
use crate::model::{LineSpan, SnapshotRole, TestOutcome};
use crate::prompt::{BugContext, FailingTest};

fn read_snapshot_file(bug: &StoredBug, role: SnapshotRole, path: &str) -> Option<String> {
    fs::read(bug.snapshot_dir(role).join(path))
        .ok()
        .map(|b| String::from_utf8_lossy(&b).into_owned())
}

fn span_text(source: &str, span: LineSpan) -> String {
    source
        .lines()
        .skip(span.start as usize - 1)
        .take(span.len() as usize)
        .collect::<Vec<_>>()
        .join("\n")
}

/// The buggy function's text in the pre-fixing snapshot.
pub fn buggy_function_source(bug: &StoredBug) -> Result<String, RepairError> {
    let f = &bug.instance.buggy_function;
    let text = read_snapshot_file(bug, SnapshotRole::PreFixing, &f.file_path)
        .ok_or_else(|| RepairError::FileMissing(f.file_path.clone()))?;
    let lines = text.lines().count();
    if f.line_span.end as usize > lines {
        return Err(RepairError::SpanOutOfRange {
            file: f.file_path.clone(),
            start: f.line_span.start,
            end: f.line_span.end,
            lines,
        });
    }
    Ok(span_text(&text, f.line_span))
}

/// How the inducing commit touched the buggy function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BicInfo {
    pub function_changed: bool,
    /// Unified diff of the function between pre-inducing and inducing.
    pub diff: Option<String>,
}

/// Compares the function, located by signature, between the pre-inducing and
/// inducing snapshots. It counts as changed when any diff line of the file
/// falls inside its span on either side.
pub fn bic_info(bug: &StoredBug) -> BicInfo {
    let f = &bug.instance.buggy_function;
    let before = read_snapshot_file(bug, SnapshotRole::PreInducing, &f.file_path);
    let after = read_snapshot_file(bug, SnapshotRole::Inducing, &f.file_path);
    let unchanged = BicInfo {
        function_changed: false,
        diff: None,
    };
    let Some(after) = after else { return unchanged };
    let Some(after_span) = locate_function(&after, &f.signature) else {
        return unchanged;
    };
    let before = before.unwrap_or_default();
    let before_span = locate_function(&before, &f.signature);
    let file_diff = diff_text(&before, &after);
    let touched = file_diff.edits().any(|e| {
        e.new_line.is_some_and(|n| after_span.contains(n))
            || e.old_line
                .is_some_and(|o| before_span.is_some_and(|s| s.contains(o)))
    });
    if !touched {
        return unchanged;
    }
    let old_fn = before_span.map(|s| span_text(&before, s) + "\n").unwrap_or_default();
    let new_fn = span_text(&after, after_span) + "\n";
    let diff = TextDiff::from_lines(&old_fn, &new_fn)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{}", f.file_path), &format!("b/{}", f.file_path))
        .to_string();
    BicInfo {
        function_changed: true,
        diff: Some(diff),
    }
}

/// Assembles the prompt context from the store: function text, witness test
/// failures on a fresh pre-fixing checkout, and the inducing change.
pub fn build_context(bug: &StoredBug, timeout: Duration) -> Result<BugContext, RepairError> {
    let source = buggy_function_source(bug)?;
    let dir = tempfile::tempdir().map_err(|e| RepairError::Io(e.to_string()))?;
    let ws = adapter::checkout(bug, SnapshotRole::PreFixing, &dir.path().join("ws"))?;
    let results = adapter::run_tests(
        &ws,
        &TestSelection::Only(bug.instance.witness_tests.clone()),
        timeout,
    )?;
    let failing_tests = results
        .into_iter()
        .filter_map(|(t, o)| {
            let (error_type, error_message) = match o {
                TestOutcome::Pass => return None,
                TestOutcome::FunctionalFail { error_type, message } => (error_type, message),
                TestOutcome::Timeout => ("Timeout".to_string(), "the test ran out of time".to_string()),
                TestOutcome::Crash { message } => ("Crash".to_string(), message),
                TestOutcome::CompileFail { message } => ("CompilationError".to_string(), message),
            };
            Some(FailingTest {
                test_name: t.0,
                error_type,
                error_message,
            })
        })
        .collect();
    let bic = bic_info(bug);
    let message = bug.instance.inducing_message.trim();
    Ok(BugContext {
        buggy_function_source: source,
        failing_tests,
        bic_diff: bic.diff,
        bic_commit_message: (!message.is_empty()).then(|| message.to_string()),
        function_changed_in_bic: bic.function_changed,
    })
}
