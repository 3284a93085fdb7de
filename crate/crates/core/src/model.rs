//! Shared domain types: regression instances, snapshots, test outcomes and
//! repair-operator annotations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("incomplete outcome matrix: no outcome for {test} under {role}")]
    IncompleteMatrix { role: SnapshotRole, test: TestId },
    #[error("unparseable test output: neither pass nor failure marker found")]
    UnparseableOutput,
    #[error("invalid regression instance {bug_id}: {reason}")]
    InvalidInstance { bug_id: String, reason: String },
    #[error("invalid line span {start}..={end}")]
    InvalidSpan { start: u32, end: u32 },
    #[error("invalid repair operator tag {group}{action}")]
    InvalidTag { group: String, action: String },
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
    #[error("invalid marker pattern: {0}")]
    InvalidMarker(String),
}

/// One of the four project snapshots that make up a regression bug.
///
/// Ordering follows history: pre-inducing < inducing < pre-fixing < fixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotRole {
    PreInducing,
    Inducing,
    PreFixing,
    Fixing,
}

impl SnapshotRole {
    pub const ALL: [SnapshotRole; 4] = [
        SnapshotRole::PreInducing,
        SnapshotRole::Inducing,
        SnapshotRole::PreFixing,
        SnapshotRole::Fixing,
    ];

    /// Directory name of this snapshot inside a bug store entry.
    pub fn dir_name(self) -> &'static str {
        match self {
            SnapshotRole::PreInducing => "pre-inducing",
            SnapshotRole::Inducing => "inducing",
            SnapshotRole::PreFixing => "pre-fixing",
            SnapshotRole::Fixing => "fixing",
        }
    }
}

impl fmt::Display for SnapshotRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for SnapshotRole {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        SnapshotRole::ALL
            .into_iter()
            .find(|r| r.dir_name() == norm || r.dir_name().replace('-', "") == norm)
            .ok_or_else(|| ModelError::UnknownName {
                kind: "snapshot role",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestId(pub String);

impl TestId {
    pub fn new(id: impl Into<String>) -> Self {
        TestId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for TestId {
    fn from(s: String) -> Self {
        TestId(s)
    }
}

impl From<&str> for TestId {
    fn from(s: &str) -> Self {
        TestId(s.to_string())
    }
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Result<Self, ModelError> {
        if start == 0 || start > end {
            return Err(ModelError::InvalidSpan { start, end });
        }
        Ok(LineSpan { start, end })
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, line: u32) -> bool {
        (self.start..=self.end).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionLocator {
    pub file_path: String,
    pub signature: String,
    pub line_span: LineSpan,
}

impl FunctionLocator {
    /// The function's name: the identifier right before the first `(` of the
    /// signature, or the last identifier when there is no parameter list.
    pub fn name(&self) -> &str {
        function_name(&self.signature)
    }
}

pub(crate) fn function_name(signature: &str) -> &str {
    let head = match signature.find('(') {
        Some(i) => &signature[..i],
        None => signature,
    };
    head.trim_end()
        .rsplit(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
        .next()
        .unwrap_or("")
}

/// A regression bug: the (fixing commit, inducing commit, witness tests) tuple
/// plus the locator of the function to repair in the pre-fixing snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionInstance {
    pub bug_id: String,
    pub project_id: String,
    pub inducing_commit: String,
    pub fixing_commit: String,
    /// Author date of the fixing commit, UTC.
    pub fixing_date: Option<NaiveDate>,
    pub witness_tests: Vec<TestId>,
    pub inducing_message: String,
    pub fixing_message: String,
    pub buggy_function: FunctionLocator,
}

impl RegressionInstance {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| ModelError::InvalidInstance {
            bug_id: self.bug_id.clone(),
            reason: reason.to_string(),
        };
        if self.witness_tests.is_empty() {
            return Err(fail("witness_tests is empty"));
        }
        if self.inducing_commit == self.fixing_commit {
            return Err(fail("inducing and fixing commits are identical"));
        }
        let span = self.buggy_function.line_span;
        LineSpan::new(span.start, span.end)?;
        if self.buggy_function.file_path.is_empty() {
            return Err(fail("buggy_function.file_path is empty"));
        }
        Ok(())
    }
}

/// Outcome of one test on one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TestOutcome {
    Pass,
    FunctionalFail { error_type: String, message: String },
    CompileFail { message: String },
    Timeout,
    Crash { message: String },
}

impl TestOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, TestOutcome::Pass)
    }

    /// Failure modes that count as a regression witness: functional failure,
    /// timeout and crash. Compilation failure does not.
    pub fn is_behavioral_failure(&self) -> bool {
        matches!(
            self,
            TestOutcome::FunctionalFail { .. } | TestOutcome::Timeout | TestOutcome::Crash { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            TestOutcome::Pass => "PASS",
            TestOutcome::FunctionalFail { .. } => "FAIL",
            TestOutcome::CompileFail { .. } => "COMPILE-FAIL",
            TestOutcome::Timeout => "TIMEOUT",
            TestOutcome::Crash { .. } => "CRASH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CompileStatus {
    Ok,
    CompileFail { message: String },
}

impl CompileStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CompileStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleOutcomes {
    pub compile: CompileStatus,
    pub tests: BTreeMap<TestId, TestOutcome>,
}

/// Witness-test outcomes across the four snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub witness_tests: Vec<TestId>,
    pub roles: BTreeMap<SnapshotRole, RoleOutcomes>,
}

impl OutcomeMatrix {
    pub fn new(witness_tests: Vec<TestId>) -> Self {
        OutcomeMatrix {
            witness_tests,
            roles: BTreeMap::new(),
        }
    }

    /// Records the compile status of a role. A failed compile marks every
    /// witness test under that role as `CompileFail`.
    pub fn set_compile(&mut self, role: SnapshotRole, status: CompileStatus) {
        let entry = self.roles.entry(role).or_insert_with(|| RoleOutcomes {
            compile: CompileStatus::Ok,
            tests: BTreeMap::new(),
        });
        if let CompileStatus::CompileFail { message } = &status {
            for t in &self.witness_tests {
                entry.tests.insert(
                    t.clone(),
                    TestOutcome::CompileFail {
                        message: message.clone(),
                    },
                );
            }
        }
        entry.compile = status;
    }

    /// Records a test outcome. Ignored for roles whose compile failed.
    pub fn record(&mut self, role: SnapshotRole, test: TestId, outcome: TestOutcome) {
        let entry = self.roles.entry(role).or_insert_with(|| RoleOutcomes {
            compile: CompileStatus::Ok,
            tests: BTreeMap::new(),
        });
        if entry.compile.is_ok() {
            entry.tests.insert(test, outcome);
        }
    }

    pub fn get(&self, role: SnapshotRole, test: &TestId) -> Option<&TestOutcome> {
        self.roles.get(&role).and_then(|r| r.tests.get(test))
    }

    pub fn compile_status(&self, role: SnapshotRole) -> Option<&CompileStatus> {
        self.roles.get(&role).map(|r| &r.compile)
    }

    /// Returns the first missing (role, test) cell, if any.
    pub fn missing_cell(&self) -> Option<(SnapshotRole, TestId)> {
        for role in SnapshotRole::ALL {
            for t in &self.witness_tests {
                if self.get(role, t).is_none() {
                    return Some((role, t.clone()));
                }
            }
        }
        None
    }
}

/// The regression predicate: every witness test passes on pre-inducing and
/// fixing, and fails behaviorally (not by compilation) on inducing and
/// pre-fixing.
pub fn is_regression(matrix: &OutcomeMatrix) -> Result<bool, ModelError> {
    if let Some((role, test)) = matrix.missing_cell() {
        return Err(ModelError::IncompleteMatrix { role, test });
    }
    if matrix.witness_tests.is_empty() {
        return Ok(false);
    }
    let all = |role: SnapshotRole, pred: fn(&TestOutcome) -> bool| {
        matrix
            .witness_tests
            .iter()
            .all(|t| matrix.get(role, t).map(pred).unwrap_or(false))
    };
    Ok(all(SnapshotRole::PreInducing, TestOutcome::is_pass)
        && all(SnapshotRole::Inducing, TestOutcome::is_behavioral_failure)
        && all(SnapshotRole::PreFixing, TestOutcome::is_behavioral_failure)
        && all(SnapshotRole::Fixing, TestOutcome::is_pass))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugCategory {
    Local,
    Remote,
    Unmask,
}

impl BugCategory {
    pub const ALL: [BugCategory; 3] = [BugCategory::Local, BugCategory::Remote, BugCategory::Unmask];

    pub fn as_str(self) -> &'static str {
        match self {
            BugCategory::Local => "local",
            BugCategory::Remote => "remote",
            BugCategory::Unmask => "unmask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorGroup {
    Asgn,
    Cnd,
    Lp,
    Mc,
    Md,
    Obj,
    Exp,
    Ret,
    Var,
    Rev,
}

impl OperatorGroup {
    pub const ALL: [OperatorGroup; 10] = [
        OperatorGroup::Asgn,
        OperatorGroup::Cnd,
        OperatorGroup::Lp,
        OperatorGroup::Mc,
        OperatorGroup::Md,
        OperatorGroup::Obj,
        OperatorGroup::Exp,
        OperatorGroup::Ret,
        OperatorGroup::Var,
        OperatorGroup::Rev,
    ];

    pub fn acronym(self) -> &'static str {
        match self {
            OperatorGroup::Asgn => "asgn",
            OperatorGroup::Cnd => "cnd",
            OperatorGroup::Lp => "lp",
            OperatorGroup::Mc => "mc",
            OperatorGroup::Md => "md",
            OperatorGroup::Obj => "obj",
            OperatorGroup::Exp => "exp",
            OperatorGroup::Ret => "ret",
            OperatorGroup::Var => "var",
            OperatorGroup::Rev => "rev",
        }
    }

    pub fn admits(self, action: OperatorAction) -> bool {
        match self {
            OperatorGroup::Exp => matches!(action, OperatorAction::Add | OperatorAction::Remove),
            OperatorGroup::Rev => action == OperatorAction::NA,
            _ => action != OperatorAction::NA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum OperatorAction {
    Add,
    Remove,
    Modify,
    NA,
}

impl OperatorAction {
    pub const ALL: [OperatorAction; 4] = [
        OperatorAction::Add,
        OperatorAction::Remove,
        OperatorAction::Modify,
        OperatorAction::NA,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            OperatorAction::Add => "A",
            OperatorAction::Remove => "R",
            OperatorAction::Modify => "M",
            OperatorAction::NA => "",
        }
    }
}

impl FromStr for OperatorAction {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "add" => Ok(OperatorAction::Add),
            "r" | "remove" => Ok(OperatorAction::Remove),
            "m" | "modify" => Ok(OperatorAction::Modify),
            "na" | "n.a" | "n.a." | "n/a" | "" => Ok(OperatorAction::NA),
            _ => Err(ModelError::UnknownName {
                kind: "operator action",
                value: s.to_string(),
            }),
        }
    }
}

impl<'de> Deserialize<'de> for OperatorAction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A repair operator: group plus action, e.g. `cndA` or `rev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RepairOperatorTag {
    pub group: OperatorGroup,
    pub action: OperatorAction,
}

impl RepairOperatorTag {
    pub fn new(group: OperatorGroup, action: OperatorAction) -> Result<Self, ModelError> {
        let tag = RepairOperatorTag { group, action };
        tag.validate()?;
        Ok(tag)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.group.admits(self.action) {
            Ok(())
        } else {
            Err(ModelError::InvalidTag {
                group: self.group.acronym().to_string(),
                action: format!("{:?}", self.action),
            })
        }
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.group.acronym(), self.action.suffix())
    }

    /// Every valid (group, action) pair in table order.
    pub fn all_valid() -> Vec<RepairOperatorTag> {
        OperatorGroup::ALL
            .into_iter()
            .flat_map(|g| {
                OperatorAction::ALL
                    .into_iter()
                    .filter(move |a| g.admits(*a))
                    .map(move |a| RepairOperatorTag { group: g, action: a })
            })
            .collect()
    }
}

/// Which phase a captured process run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunPhase {
    Compile,
    Test,
}

/// Captured result of one adapter process run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRun {
    pub phase: RunPhase,
    /// `None` when the process was terminated by a signal.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl RawRun {
    pub fn combined_output(&self) -> String {
        match (self.stdout.is_empty(), self.stderr.is_empty()) {
            (_, true) => self.stdout.clone(),
            (true, false) => self.stderr.clone(),
            (false, false) => format!("{}\n{}", self.stdout, self.stderr),
        }
    }
}

pub const DEFAULT_PASS_MARKER: &str = r"(?m)^\s*(OK\b|PASS(ED)?\b|Tests run: \d+, Failures: 0, Errors: 0)";
pub const DEFAULT_FAIL_MARKER: &str = r"(?m)^\s*(?P<type>[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*(?:Error|Exception|Failure|Failed))(?::[ \t]*(?P<msg>.*))?$";

/// Compiled pass/fail patterns used to read test-runner output.
///
/// A fail marker may expose `type` and `msg` named groups; without them the
/// text after the match is split on the first `": "`.
#[derive(Debug, Clone)]
pub struct OutputMarkers {
    pass: Regex,
    fail: Regex,
}

impl OutputMarkers {
    pub fn new(pass: &str, fail: &str) -> Result<Self, ModelError> {
        if pass == fail {
            return Err(ModelError::InvalidMarker(
                "pass and fail markers must differ".into(),
            ));
        }
        let compile = |p: &str| Regex::new(p).map_err(|e| ModelError::InvalidMarker(e.to_string()));
        Ok(OutputMarkers {
            pass: compile(pass)?,
            fail: compile(fail)?,
        })
    }

    fn parse_failure(&self, output: &str) -> Option<(String, String)> {
        let caps = self.fail.captures(output)?;
        let whole = caps.get(0).expect("group 0");
        if let Some(ty) = caps.name("type") {
            let msg = caps.name("msg").map(|m| m.as_str()).unwrap_or("");
            return Some((ty.as_str().trim().to_string(), msg.trim().to_string()));
        }
        let line_end = output[whole.end()..]
            .find('\n')
            .map(|i| whole.end() + i)
            .unwrap_or(output.len());
        let rest = output[whole.end()..line_end].trim();
        match rest.split_once(": ") {
            Some((ty, msg)) if !ty.trim().is_empty() => {
                Some((ty.trim().to_string(), msg.trim().to_string()))
            }
            _ => Some(("TestFailure".to_string(), rest.to_string())),
        }
    }
}

impl Default for OutputMarkers {
    fn default() -> Self {
        OutputMarkers::new(DEFAULT_PASS_MARKER, DEFAULT_FAIL_MARKER).expect("default markers")
    }
}

/// Maps a captured adapter run to a [`TestOutcome`].
pub fn classify_outcome(
    raw: &RawRun,
    timeout_hit: bool,
    markers: &OutputMarkers,
) -> Result<TestOutcome, ModelError> {
    if timeout_hit {
        return Ok(TestOutcome::Timeout);
    }
    let output = raw.combined_output();
    if raw.phase == RunPhase::Compile {
        return Ok(if raw.exit_code == Some(0) {
            TestOutcome::Pass
        } else {
            TestOutcome::CompileFail {
                message: output.trim().to_string(),
            }
        });
    }
    if raw.exit_code.is_none() {
        return Ok(TestOutcome::Crash {
            message: output.trim().to_string(),
        });
    }
    if let Some((error_type, message)) = markers.parse_failure(&output) {
        let error_type = if error_type.is_empty() {
            "TestFailure".to_string()
        } else {
            error_type
        };
        return Ok(TestOutcome::FunctionalFail {
            error_type,
            message,
        });
    }
    if markers.pass.is_match(&output) {
        return Ok(TestOutcome::Pass);
    }
    Err(ModelError::UnparseableOutput)
}
