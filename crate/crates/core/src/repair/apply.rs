use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use similar::TextDiff;

use super::{PatchCandidate, RepairError};
use crate::adapter::{self, AdapterError, TestSelection, Workspace};
use crate::model::{CompileStatus, FunctionLocator, TestId, TestOutcome};
use crate::prompt::{FeedbackCase, Verdict};

/// A workspace with one function replaced. Holds the original file bytes so
/// the change can be undone.
#[derive(Debug)]
pub struct PatchedWorkspace {
    pub workspace: Workspace,
    pub file_path: String,
    abs_path: PathBuf,
    original: Vec<u8>,
    patched: Vec<u8>,
}

fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    bytes.split_inclusive(|b| *b == b'\n').collect()
}

/// Replaces lines `start..=end` of `original` with `replacement`, keeping the
/// terminator style of the replaced block's last line.
pub fn splice(original: &[u8], start: u32, end: u32, replacement: &str) -> Option<Vec<u8>> {
    let lines = split_lines(original);
    let (s, e) = (start as usize, end as usize);
    if s == 0 || e < s || e > lines.len() {
        return None;
    }
    let mut out = Vec::with_capacity(original.len() + replacement.len());
    for l in &lines[..s - 1] {
        out.extend_from_slice(l);
    }
    let last = lines[e - 1];
    let terminator: &[u8] = if last.ends_with(b"\r\n") {
        b"\r\n"
    } else if last.ends_with(b"\n") {
        b"\n"
    } else {
        b""
    };
    let body = replacement.trim_end_matches(['\n', '\r']);
    out.extend_from_slice(body.as_bytes());
    out.extend_from_slice(terminator);
    for l in &lines[e..] {
        out.extend_from_slice(l);
    }
    Some(out)
}

fn indent_of(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Shifts `text` so its least-indented line starts with `indent`.
pub fn reindent(text: &str, indent: &str) -> String {
    let common = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| indent_of(l).len())
        .min()
        .unwrap_or(0);
    text.lines()
        .map(|l| {
            if l.trim().is_empty() {
                String::new()
            } else {
                format!("{indent}{}", &l[common..])
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Writes the candidate function over the target span in the workspace,
/// indented like the function it replaces.
pub fn apply_patch(
    ws: &Workspace,
    target: &FunctionLocator,
    patch: &PatchCandidate,
) -> Result<PatchedWorkspace, RepairError> {
    let abs_path = ws.root.join(&target.file_path);
    let original = fs::read(&abs_path).map_err(|_| RepairError::FileMissing(target.file_path.clone()))?;
    let span = target.line_span;
    let first = split_lines(&original)
        .get(span.start.saturating_sub(1) as usize)
        .map(|l| String::from_utf8_lossy(l).into_owned())
        .unwrap_or_default();
    let body = reindent(&patch.function_source, indent_of(&first));
    let patched = splice(&original, span.start, span.end, &body).ok_or_else(|| {
        RepairError::SpanOutOfRange {
            file: target.file_path.clone(),
            start: span.start,
            end: span.end,
            lines: split_lines(&original).len(),
        }
    })?;
    fs::write(&abs_path, &patched).map_err(|e| RepairError::Io(format!("{}: {e}", abs_path.display())))?;
    Ok(PatchedWorkspace {
        workspace: ws.clone(),
        file_path: target.file_path.clone(),
        abs_path,
        original,
        patched,
    })
}

impl PatchedWorkspace {
    /// Restores the original file bytes.
    pub fn rollback(self) -> Result<Workspace, RepairError> {
        fs::write(&self.abs_path, &self.original)
            .map_err(|e| RepairError::Io(format!("{}: {e}", self.abs_path.display())))?;
        Ok(self.workspace)
    }

    pub fn patched_bytes(&self) -> &[u8] {
        &self.patched
    }

    /// The change as a unified diff against the original file.
    pub fn unified_diff(&self) -> String {
        let old = String::from_utf8_lossy(&self.original);
        let new = String::from_utf8_lossy(&self.patched);
        TextDiff::from_lines(old.as_ref(), new.as_ref())
            .unified_diff()
            .context_radius(3)
            .header(&format!("a/{}", self.file_path), &format!("b/{}", self.file_path))
            .to_string()
    }
}

/// Outcome of compiling and testing a patched workspace.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub compile: CompileStatus,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub witness: BTreeMap<TestId, TestOutcome>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub suite: BTreeMap<TestId, TestOutcome>,
}

fn classify(results: &BTreeMap<TestId, TestOutcome>) -> Option<FeedbackCase> {
    if results.values().any(|o| matches!(o, TestOutcome::Timeout)) {
        return Some(FeedbackCase::Timeout);
    }
    let lines: Vec<String> = results
        .iter()
        .filter_map(|(t, o)| match o {
            TestOutcome::Pass | TestOutcome::Timeout => None,
            TestOutcome::FunctionalFail { error_type, message } => {
                Some(format!("{t}: {error_type}: {message}"))
            }
            TestOutcome::Crash { message } => Some(format!("{t}: crash: {message}")),
            TestOutcome::CompileFail { message } => Some(format!("{t}: compilation error: {message}")),
        })
        .collect();
    (!lines.is_empty()).then(|| FeedbackCase::FunctionalError(lines.join("\n")))
}

/// Compiles, runs the witness tests and, when `full_suite` is set and the
/// witness tests pass, the whole suite.
pub fn validate_patch(
    pws: &PatchedWorkspace,
    witness: &[TestId],
    full_suite: bool,
    timeout: Duration,
) -> Result<ValidationReport, AdapterError> {
    let ws = &pws.workspace;
    let compile = adapter::compile(ws)?;
    if let CompileStatus::CompileFail { message } = &compile {
        let msg = if message.trim().is_empty() {
            "compilation failed".to_string()
        } else {
            message.clone()
        };
        return Ok(ValidationReport {
            verdict: Verdict::Rejected {
                feedback: FeedbackCase::CompilationError(msg),
            },
            compile,
            witness: BTreeMap::new(),
            suite: BTreeMap::new(),
        });
    }
    let witness_results = adapter::run_tests(ws, &TestSelection::Only(witness.to_vec()), timeout)?;
    let mut report = ValidationReport {
        verdict: Verdict::Plausible,
        compile,
        witness: witness_results,
        suite: BTreeMap::new(),
    };
    if let Some(fb) = classify(&report.witness) {
        report.verdict = Verdict::Rejected { feedback: fb };
        return Ok(report);
    }
    if full_suite {
        report.suite = adapter::run_tests(ws, &TestSelection::All, timeout)?;
        if let Some(fb) = classify(&report.suite) {
            report.verdict = Verdict::Rejected { feedback: fb };
        }
    }
    Ok(report)
}
