//! Uniform execution surface over bug snapshots: checkout, compile, test and
//! coverage collection.
//!
//! Two adapter kinds exist. A snapshot carrying a `fixture.json` is a scripted
//! fixture whose results are declared up front; anything else is driven by the
//! command templates from the bug manifest.

mod fixture;
mod process;
mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use fixture::{
    FixtureManifest, FixtureOverride, ScriptedCompile, ScriptedFailure, ScriptedTest, FIXTURE_FILE,
};
pub use store::{
    parse_commit_date, write_stored_bug, BugStore, Manifest, ManifestCommits, ManifestFunction,
    SnapshotSpec, StoredBug, MANIFEST_FILE,
};

use crate::coverage::{self, normalize_path, CoverageMap};
use crate::model::{
    classify_outcome, CompileStatus, ModelError, OutputMarkers, RunPhase, SnapshotRole, TestId,
    TestOutcome, DEFAULT_FAIL_MARKER, DEFAULT_PASS_MARKER,
};

pub const WORKSPACE_MARKER: &str = ".regrepair-workspace.json";
pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(300);

/// Files that belong to the tooling rather than the project under test.
pub const PLUMBING_FILES: [&str; 2] = [FIXTURE_FILE, WORKSPACE_MARKER];

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("bug `{0}` is not in the store")]
    UnknownBug(String),
    #[error("bug {bug_id} has no {role} snapshot")]
    MissingSnapshot { bug_id: String, role: SnapshotRole },
    #[error("destination {0} is not empty")]
    NonEmptyDestination(PathBuf),
    #[error("no adapter configured for workspace {0}")]
    AdapterMissing(PathBuf),
    #[error("unknown test `{0}`")]
    UnknownTest(TestId),
    #[error("coverage unavailable for this workspace")]
    CoverageUnavailable,
    #[error("malformed coverage report: {0}")]
    MalformedReport(String),
    #[error("malformed manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
    #[error("bad fixture: {0}")]
    BadFixture(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AdapterError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        AdapterError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

impl From<coverage::ReportError> for AdapterError {
    fn from(e: coverage::ReportError) -> Self {
        AdapterError::MalformedReport(e.to_string())
    }
}

/// Command templates for driving a real build system.
///
/// Placeholders: `{tests}`, `{timeout}` (seconds) and `{root}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub compile_command: String,
    pub test_command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_report_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_marker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_marker: Option<String>,
    /// Prints the full suite, one test id per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_tests_command: Option<String>,
}

impl AdapterSpec {
    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.compile_command.trim().is_empty() || self.test_command.trim().is_empty() {
            return Err(AdapterError::BadFixture(
                "compile_command and test_command must be non-empty".into(),
            ));
        }
        self.markers()?;
        Ok(())
    }

    pub fn markers(&self) -> Result<OutputMarkers, AdapterError> {
        Ok(OutputMarkers::new(
            self.pass_marker.as_deref().unwrap_or(DEFAULT_PASS_MARKER),
            self.fail_marker.as_deref().unwrap_or(DEFAULT_FAIL_MARKER),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    CommandTemplate,
    ScriptedFixture,
}

/// A checked-out snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub bug_id: String,
    pub role: SnapshotRole,
    pub root: PathBuf,
    pub adapter_kind: AdapterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<AdapterSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkspaceMarker {
    bug_id: String,
    role: SnapshotRole,
    adapter_kind: AdapterKind,
    #[serde(default)]
    adapter: Option<AdapterSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestSelection {
    All,
    Only(Vec<TestId>),
}

impl TestSelection {
    pub fn only<I, T>(ids: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<TestId>,
    {
        TestSelection::Only(ids.into_iter().map(Into::into).collect())
    }
}

/// Project files of a directory keyed by normalized relative path, excluding
/// tool plumbing files at the root.
pub type FileTree = BTreeMap<String, Vec<u8>>;

pub fn read_tree(root: &Path) -> Result<FileTree, AdapterError> {
    let mut tree = FileTree::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| AdapterError::Io {
            path: root.to_path_buf(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir stays under root");
        let rel = normalize_path(&rel.to_string_lossy());
        if PLUMBING_FILES.contains(&rel.as_str()) {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| AdapterError::io(entry.path(), e))?;
        tree.insert(rel, bytes);
    }
    Ok(tree)
}

/// Reads the project tree of one snapshot straight from the store.
pub fn snapshot_tree(bug: &StoredBug, role: SnapshotRole) -> Result<FileTree, AdapterError> {
    let dir = bug.snapshot_dir(role);
    if !dir.is_dir() {
        return Err(AdapterError::MissingSnapshot {
            bug_id: bug.instance.bug_id.clone(),
            role,
        });
    }
    read_tree(&dir)
}

fn copy_tree(src: &Path, dest: &Path) -> Result<(), AdapterError> {
    for entry in WalkDir::new(src).sort_by_file_name() {
        let entry = entry.map_err(|e| AdapterError::Io {
            path: src.to_path_buf(),
            message: e.to_string(),
        })?;
        let rel = entry.path().strip_prefix(src).expect("under src");
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).map_err(|e| AdapterError::io(&target, e))?;
        } else {
            fs::copy(entry.path(), &target).map_err(|e| AdapterError::io(&target, e))?;
        }
    }
    Ok(())
}

/// Materializes a snapshot into `dest`, which must be absent or empty.
pub fn checkout(bug: &StoredBug, role: SnapshotRole, dest: &Path) -> Result<Workspace, AdapterError> {
    let src = bug.snapshot_dir(role);
    if !src.is_dir() {
        return Err(AdapterError::MissingSnapshot {
            bug_id: bug.instance.bug_id.clone(),
            role,
        });
    }
    if dest.exists() {
        let mut entries = fs::read_dir(dest).map_err(|e| AdapterError::io(dest, e))?;
        if entries.next().is_some() {
            return Err(AdapterError::NonEmptyDestination(dest.to_path_buf()));
        }
    }
    fs::create_dir_all(dest).map_err(|e| AdapterError::io(dest, e))?;
    copy_tree(&src, dest)?;

    let adapter_kind = if dest.join(FIXTURE_FILE).is_file() {
        AdapterKind::ScriptedFixture
    } else {
        AdapterKind::CommandTemplate
    };
    let marker = WorkspaceMarker {
        bug_id: bug.instance.bug_id.clone(),
        role,
        adapter_kind,
        adapter: bug.manifest.adapter.clone(),
    };
    let marker_path = dest.join(WORKSPACE_MARKER);
    let json = serde_json::to_string_pretty(&marker).expect("marker serializes");
    fs::write(&marker_path, json).map_err(|e| AdapterError::io(&marker_path, e))?;

    Ok(Workspace {
        bug_id: marker.bug_id,
        role,
        root: dest.to_path_buf(),
        adapter_kind,
        adapter: marker.adapter,
    })
}

/// Re-opens a workspace created by [`checkout`].
pub fn open_workspace(root: &Path) -> Result<Workspace, AdapterError> {
    let path = root.join(WORKSPACE_MARKER);
    let text = fs::read_to_string(&path).map_err(|e| AdapterError::io(&path, e))?;
    let marker: WorkspaceMarker =
        serde_json::from_str(&text).map_err(|e| AdapterError::BadManifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
    Ok(Workspace {
        bug_id: marker.bug_id,
        role: marker.role,
        root: root.to_path_buf(),
        adapter_kind: marker.adapter_kind,
        adapter: marker.adapter,
    })
}

fn command_spec(ws: &Workspace) -> Result<&AdapterSpec, AdapterError> {
    let spec = ws
        .adapter
        .as_ref()
        .ok_or_else(|| AdapterError::AdapterMissing(ws.root.clone()))?;
    spec.validate()?;
    Ok(spec)
}

fn render_command(template: &str, root: &Path, tests: &str, timeout: Duration) -> String {
    template
        .replace("{root}", &root.to_string_lossy())
        .replace("{tests}", tests)
        .replace("{timeout}", &timeout.as_secs().to_string())
}

fn load_fixture(ws: &Workspace) -> Result<FixtureManifest, AdapterError> {
    if !ws.root.join(FIXTURE_FILE).is_file() {
        return Err(AdapterError::AdapterMissing(ws.root.clone()));
    }
    Ok(FixtureManifest::load(&ws.root)?.effective(&ws.root))
}

pub fn compile(ws: &Workspace) -> Result<CompileStatus, AdapterError> {
    match ws.adapter_kind {
        AdapterKind::ScriptedFixture => load_fixture(ws)?.compile_status(),
        AdapterKind::CommandTemplate => {
            let spec = command_spec(ws)?;
            let line = render_command(&spec.compile_command, &ws.root, "", DEFAULT_TEST_TIMEOUT);
            let done = process::run_shell(&line, &ws.root, RunPhase::Compile, None)
                .map_err(|e| AdapterError::io(&ws.root, e))?;
            if done.raw.exit_code == Some(0) {
                Ok(CompileStatus::Ok)
            } else {
                let mut message = done.raw.combined_output().trim().to_string();
                if message.is_empty() {
                    message = format!("compile command exited with {:?}", done.raw.exit_code);
                }
                Ok(CompileStatus::CompileFail { message })
            }
        }
    }
}

fn list_suite(ws: &Workspace) -> Result<Vec<TestId>, AdapterError> {
    match ws.adapter_kind {
        AdapterKind::ScriptedFixture => Ok(load_fixture(ws)?.suite()),
        AdapterKind::CommandTemplate => {
            let spec = command_spec(ws)?;
            let template = spec.list_tests_command.as_deref().ok_or_else(|| {
                AdapterError::BadFixture("adapter declares no list_tests_command".into())
            })?;
            let line = render_command(template, &ws.root, "", DEFAULT_TEST_TIMEOUT);
            let done = process::run_shell(&line, &ws.root, RunPhase::Test, None)
                .map_err(|e| AdapterError::io(&ws.root, e))?;
            Ok(done
                .raw
                .stdout
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(TestId::from)
                .collect())
        }
    }
}

/// Runs the selected tests, one outcome per test. Each test gets its own
/// wall-clock `timeout`.
pub fn run_tests(
    ws: &Workspace,
    tests: &TestSelection,
    timeout: Duration,
) -> Result<BTreeMap<TestId, TestOutcome>, AdapterError> {
    let ids = match tests {
        TestSelection::All => list_suite(ws)?,
        TestSelection::Only(ids) => ids.clone(),
    };
    let mut results = BTreeMap::new();
    if ids.is_empty() {
        return Ok(results);
    }
    match ws.adapter_kind {
        AdapterKind::ScriptedFixture => {
            let fixture = load_fixture(ws)?;
            for id in ids {
                let outcome = fixture.run_test(&id, timeout)?;
                results.insert(id, outcome);
            }
        }
        AdapterKind::CommandTemplate => {
            let spec = command_spec(ws)?;
            let markers = spec.markers()?;
            for id in ids {
                let line = render_command(&spec.test_command, &ws.root, id.as_str(), timeout);
                let done = process::run_shell(&line, &ws.root, RunPhase::Test, Some(timeout))
                    .map_err(|e| AdapterError::io(&ws.root, e))?;
                let outcome = classify_outcome(&done.raw, done.timed_out, &markers)?;
                results.insert(id, outcome);
            }
        }
    }
    Ok(results)
}

/// Collects line coverage of `tests`. Only files with at least one covered
/// line are returned.
pub fn collect_coverage(ws: &Workspace, tests: &[TestId]) -> Result<CoverageMap, AdapterError> {
    match ws.adapter_kind {
        AdapterKind::ScriptedFixture => load_fixture(ws)?.coverage_map(),
        AdapterKind::CommandTemplate => {
            let spec = command_spec(ws)?;
            let report = spec
                .coverage_report_path
                .as_deref()
                .ok_or(AdapterError::CoverageUnavailable)?;
            let joined = tests
                .iter()
                .map(TestId::as_str)
                .collect::<Vec<_>>()
                .join(";");
            if let Some(cmd) = &spec.coverage_command {
                let line = render_command(cmd, &ws.root, &joined, DEFAULT_TEST_TIMEOUT);
                process::run_shell(&line, &ws.root, RunPhase::Test, None)
                    .map_err(|e| AdapterError::io(&ws.root, e))?;
            }
            let rendered = render_command(report, &ws.root, &joined, DEFAULT_TEST_TIMEOUT);
            let path = ws.root.join(rendered);
            if !path.is_file() {
                return Err(AdapterError::CoverageUnavailable);
            }
            let text = fs::read_to_string(&path).map_err(|e| AdapterError::io(&path, e))?;
            Ok(coverage::parse_report(&text, Some(&ws.root))?)
        }
    }
}
