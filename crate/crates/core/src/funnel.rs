//! The three-step validation funnel (executability, validity, utility) with a
//! leading fixing-date filter, plus per-stage accounting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::adapter::{self, AdapterError, BugStore, StoredBug, TestSelection, Workspace};
use crate::model::{
    is_regression, CompileStatus, OutcomeMatrix, RegressionInstance, SnapshotRole, TestId,
    TestOutcome,
};

/// Executes snapshot operations for a bug. The funnel only talks to this
/// trait, so tests can substitute scripted runners and inspect call logs.
pub trait SnapshotRunner: Sync {
    fn compile(
        &self,
        bug: &RegressionInstance,
        role: SnapshotRole,
    ) -> Result<CompileStatus, AdapterError>;

    fn run_tests(
        &self,
        bug: &RegressionInstance,
        role: SnapshotRole,
        tests: &TestSelection,
        timeout: Duration,
    ) -> Result<BTreeMap<TestId, TestOutcome>, AdapterError>;

    /// Called once a bug has been fully evaluated.
    fn release(&self, _bug_id: &str) {}
}

/// Runs snapshots of a [`BugStore`] in private temporary checkouts, one per
/// (bug, role), reused across steps.
pub struct StoreRunner {
    store: BugStore,
    bugs: Mutex<HashMap<String, Arc<StoredBug>>>,
    workspaces: Mutex<HashMap<(String, SnapshotRole), Arc<(TempDir, Workspace)>>>,
}

impl StoreRunner {
    pub fn new(store: BugStore) -> Self {
        StoreRunner {
            store,
            bugs: Mutex::new(HashMap::new()),
            workspaces: Mutex::new(HashMap::new()),
        }
    }

    fn stored(&self, bug_id: &str) -> Result<Arc<StoredBug>, AdapterError> {
        if let Some(b) = self.bugs.lock().expect("bug cache").get(bug_id) {
            return Ok(b.clone());
        }
        let loaded = Arc::new(self.store.load(bug_id)?);
        self.bugs
            .lock()
            .expect("bug cache")
            .insert(bug_id.to_string(), loaded.clone());
        Ok(loaded)
    }

    fn workspace(
        &self,
        bug_id: &str,
        role: SnapshotRole,
    ) -> Result<Arc<(TempDir, Workspace)>, AdapterError> {
        let key = (bug_id.to_string(), role);
        if let Some(ws) = self.workspaces.lock().expect("ws cache").get(&key) {
            return Ok(ws.clone());
        }
        let stored = self.stored(bug_id)?;
        let dir = tempfile::tempdir().map_err(|e| AdapterError::io(std::path::Path::new("."), e))?;
        let ws = adapter::checkout(&stored, role, &dir.path().join("ws"))?;
        let entry = Arc::new((dir, ws));
        self.workspaces
            .lock()
            .expect("ws cache")
            .insert(key, entry.clone());
        Ok(entry)
    }
}

impl SnapshotRunner for StoreRunner {
    fn compile(
        &self,
        bug: &RegressionInstance,
        role: SnapshotRole,
    ) -> Result<CompileStatus, AdapterError> {
        let ws = self.workspace(&bug.bug_id, role)?;
        adapter::compile(&ws.1)
    }

    fn run_tests(
        &self,
        bug: &RegressionInstance,
        role: SnapshotRole,
        tests: &TestSelection,
        timeout: Duration,
    ) -> Result<BTreeMap<TestId, TestOutcome>, AdapterError> {
        let ws = self.workspace(&bug.bug_id, role)?;
        adapter::run_tests(&ws.1, tests, timeout)
    }

    fn release(&self, bug_id: &str) {
        self.workspaces
            .lock()
            .expect("ws cache")
            .retain(|(id, _), _| id != bug_id);
        self.bugs.lock().expect("bug cache").remove(bug_id);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunnelStage {
    RejectedDate,
    RejectedExecutability,
    RejectedValidity,
    RejectedUtility,
    Confirmed,
}

/// Full-suite results recorded by the utility step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOutcomes {
    pub pre_fixing: BTreeMap<TestId, TestOutcome>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixing: BTreeMap<TestId, TestOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelVerdict {
    pub bug_id: String,
    pub stage_reached: FunnelStage,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<OutcomeMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteOutcomes>,
}

/// Serialized as `funnel-report.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub input: usize,
    pub rejected_date: usize,
    pub rejected_executability: usize,
    pub rejected_validity: usize,
    pub rejected_utility: usize,
    pub confirmed: usize,
    pub verdicts: Vec<FunnelVerdict>,
}

impl FunnelReport {
    fn from_verdicts(verdicts: Vec<FunnelVerdict>) -> Self {
        let mut r = FunnelReport {
            input: verdicts.len(),
            ..Default::default()
        };
        for v in &verdicts {
            *match v.stage_reached {
                FunnelStage::RejectedDate => &mut r.rejected_date,
                FunnelStage::RejectedExecutability => &mut r.rejected_executability,
                FunnelStage::RejectedValidity => &mut r.rejected_validity,
                FunnelStage::RejectedUtility => &mut r.rejected_utility,
                FunnelStage::Confirmed => &mut r.confirmed,
            } += 1;
        }
        r.verdicts = verdicts;
        r
    }

    /// Candidates still alive after each stage: input, after date filter,
    /// after executability, after validity, confirmed.
    pub fn survivors(&self) -> [usize; 5] {
        let after_date = self.input - self.rejected_date;
        let after_exec = after_date - self.rejected_executability;
        let after_valid = after_exec - self.rejected_validity;
        [self.input, after_date, after_exec, after_valid, self.confirmed]
    }

    pub fn confirmed_ids(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|v| v.stage_reached == FunnelStage::Confirmed)
            .map(|v| v.bug_id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Executability {
    Ok,
    Rejected { role: SnapshotRole, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Ok(OutcomeMatrix),
    Rejected(OutcomeMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Utility {
    Ok(SuiteOutcomes),
    Rejected { detail: String, suite: SuiteOutcomes },
}

/// Step 1: all four snapshots must compile.
pub fn check_executability(
    bug: &RegressionInstance,
    runner: &dyn SnapshotRunner,
) -> Result<Executability, AdapterError> {
    for role in SnapshotRole::ALL {
        if let CompileStatus::CompileFail { message } = runner.compile(bug, role)? {
            return Ok(Executability::Rejected {
                role,
                detail: format!("{role} does not compile: {message}"),
            });
        }
    }
    Ok(Executability::Ok)
}

/// Step 2: the witness tests must show the regression pattern.
///
/// On an adapter error the partially filled matrix is returned alongside.
pub fn check_validity(
    bug: &RegressionInstance,
    runner: &dyn SnapshotRunner,
    timeout: Duration,
) -> Result<Validity, (AdapterError, OutcomeMatrix)> {
    let mut matrix = OutcomeMatrix::new(bug.witness_tests.clone());
    let selection = TestSelection::Only(bug.witness_tests.clone());
    for role in SnapshotRole::ALL {
        matrix.set_compile(role, CompileStatus::Ok);
        let results = match runner.run_tests(bug, role, &selection, timeout) {
            Ok(r) => r,
            Err(e) => return Err((e, matrix)),
        };
        for (test, outcome) in results {
            matrix.record(role, test, outcome);
        }
    }
    match is_regression(&matrix) {
        Ok(true) => Ok(Validity::Ok(matrix)),
        Ok(false) => Ok(Validity::Rejected(matrix)),
        Err(e) => Err((AdapterError::Model(e), matrix)),
    }
}

fn failing(results: &BTreeMap<TestId, TestOutcome>) -> BTreeSet<TestId> {
    results
        .iter()
        .filter(|(_, o)| !o.is_pass())
        .map(|(t, _)| t.clone())
        .collect()
}

fn list(ids: &BTreeSet<TestId>) -> String {
    ids.iter().map(TestId::as_str).collect::<Vec<_>>().join(", ")
}

/// Step 3: on pre-fixing the full suite fails exactly the witness tests, and
/// on fixing the full suite passes.
pub fn check_utility(
    bug: &RegressionInstance,
    runner: &dyn SnapshotRunner,
    timeout: Duration,
) -> Result<Utility, AdapterError> {
    let mut suite = SuiteOutcomes {
        pre_fixing: runner.run_tests(bug, SnapshotRole::PreFixing, &TestSelection::All, timeout)?,
        fixing: BTreeMap::new(),
    };
    let witness: BTreeSet<TestId> = bug.witness_tests.iter().cloned().collect();
    let pre_failing = failing(&suite.pre_fixing);
    if pre_failing != witness {
        let extra: BTreeSet<_> = pre_failing.difference(&witness).cloned().collect();
        let missing: BTreeSet<_> = witness.difference(&pre_failing).cloned().collect();
        let mut detail = String::from("pre-fixing failing set differs from witness tests");
        if !extra.is_empty() {
            detail.push_str(&format!("; also fails: {}", list(&extra)));
        }
        if !missing.is_empty() {
            detail.push_str(&format!("; does not fail: {}", list(&missing)));
        }
        return Ok(Utility::Rejected { detail, suite });
    }
    suite.fixing = runner.run_tests(bug, SnapshotRole::Fixing, &TestSelection::All, timeout)?;
    let fix_failing = failing(&suite.fixing);
    if !fix_failing.is_empty() {
        return Ok(Utility::Rejected {
            detail: format!("fixing fails: {}", list(&fix_failing)),
            suite,
        });
    }
    Ok(Utility::Ok(suite))
}

fn verdict(
    bug: &RegressionInstance,
    stage: FunnelStage,
    detail: impl Into<String>,
    matrix: Option<OutcomeMatrix>,
    suite: Option<SuiteOutcomes>,
) -> FunnelVerdict {
    FunnelVerdict {
        bug_id: bug.bug_id.clone(),
        stage_reached: stage,
        detail: detail.into(),
        matrix,
        suite,
    }
}

/// Runs the date filter and the three steps for one bug, stopping at the
/// first rejection.
pub fn evaluate(
    bug: &RegressionInstance,
    cutoff: NaiveDate,
    runner: &dyn SnapshotRunner,
    timeout: Duration,
) -> FunnelVerdict {
    match bug.fixing_date {
        None => {
            return verdict(bug, FunnelStage::RejectedDate, "fixing commit has no date", None, None)
        }
        Some(d) if d < cutoff => {
            return verdict(
                bug,
                FunnelStage::RejectedDate,
                format!("fixing commit dated {d} is before {cutoff}"),
                None,
                None,
            )
        }
        Some(_) => {}
    }
    match check_executability(bug, runner) {
        Ok(Executability::Ok) => {}
        Ok(Executability::Rejected { detail, .. }) => {
            return verdict(bug, FunnelStage::RejectedExecutability, detail, None, None)
        }
        Err(e) => {
            return verdict(
                bug,
                FunnelStage::RejectedExecutability,
                format!("error: {e}"),
                None,
                None,
            )
        }
    }
    let matrix = match check_validity(bug, runner, timeout) {
        Ok(Validity::Ok(m)) => m,
        Ok(Validity::Rejected(m)) => {
            return verdict(
                bug,
                FunnelStage::RejectedValidity,
                "witness tests do not show the regression pattern",
                Some(m),
                None,
            )
        }
        Err((e, m)) => {
            return verdict(
                bug,
                FunnelStage::RejectedValidity,
                format!("error: {e}"),
                Some(m),
                None,
            )
        }
    };
    match check_utility(bug, runner, timeout) {
        Ok(Utility::Ok(suite)) => verdict(
            bug,
            FunnelStage::Confirmed,
            "confirmed regression",
            Some(matrix),
            Some(suite),
        ),
        Ok(Utility::Rejected { detail, suite }) => verdict(
            bug,
            FunnelStage::RejectedUtility,
            detail,
            Some(matrix),
            Some(suite),
        ),
        Err(e) => verdict(
            bug,
            FunnelStage::RejectedUtility,
            format!("error: {e}"),
            Some(matrix),
            None,
        ),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FunnelOptions {
    pub timeout: Duration,
    pub parallelism: usize,
}

impl Default for FunnelOptions {
    fn default() -> Self {
        FunnelOptions {
            timeout: adapter::DEFAULT_TEST_TIMEOUT,
            parallelism: 1,
        }
    }
}

/// Evaluates every candidate; verdicts keep input order.
pub fn run_funnel(
    candidates: &[RegressionInstance],
    cutoff: NaiveDate,
    runner: &dyn SnapshotRunner,
    opts: FunnelOptions,
) -> FunnelReport {
    let workers = opts.parallelism.clamp(1, candidates.len().max(1));
    let slots: Vec<Mutex<Option<FunnelVerdict>>> =
        candidates.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(bug) = candidates.get(i) else { break };
                let v = evaluate(bug, cutoff, runner, opts.timeout);
                runner.release(&bug.bug_id);
                *slots[i].lock().expect("slot") = Some(v);
            });
        }
    });
    let verdicts = slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot").expect("every slot filled"))
        .collect();
    FunnelReport::from_verdicts(verdicts)
}
