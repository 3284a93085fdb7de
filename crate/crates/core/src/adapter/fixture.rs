//! Scripted fixtures: a `fixture.json` in the snapshot tree declares compile,
//! test and coverage results instead of running a real build.
//!
//! ```json
//! {
//!   "compile": "ok" | {"fail": "message"},
//!   "tests": {"id": "pass" | "timeout" | {"fail": {"type": "...", "msg": "..."}}
//!                      | {"crash": "message"} | {"sleep_ms": 500}},
//!   "coverage": {"src/A.java": [3, 4]},
//!   "overrides": [{"file": "src/A.java", "contains": "text",
//!                  "compile": ..., "tests": {...}, "coverage": {...}}]
//! }
//! ```
//!
//! Overrides are applied in order; each applies when the named workspace file
//! contains the given text. They let a patched workspace script different
//! results than the pristine snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::coverage::CoverageMap;
use crate::model::{CompileStatus, TestId, TestOutcome};

pub const FIXTURE_FILE: &str = "fixture.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedCompile {
    Keyword(String),
    Fail { fail: String },
}

impl Default for ScriptedCompile {
    fn default() -> Self {
        ScriptedCompile::Keyword("ok".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedFailure {
    #[serde(rename = "type")]
    pub error_type: String,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedTest {
    Keyword(String),
    Fail { fail: ScriptedFailure },
    Crash { crash: String },
    Sleep { sleep_ms: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureOverride {
    pub file: String,
    pub contains: String,
    #[serde(default)]
    pub compile: Option<ScriptedCompile>,
    #[serde(default)]
    pub tests: BTreeMap<String, ScriptedTest>,
    #[serde(default)]
    pub coverage: Option<BTreeMap<String, Vec<u32>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    #[serde(default)]
    pub compile: ScriptedCompile,
    #[serde(default)]
    pub tests: BTreeMap<String, ScriptedTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<BTreeMap<String, Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<FixtureOverride>,
}

impl FixtureManifest {
    pub fn load(root: &Path) -> Result<Self, AdapterError> {
        let path = root.join(FIXTURE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| AdapterError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AdapterError::BadManifest {
            path,
            message: e.to_string(),
        })
    }

    /// The fixture with every override that matches the current workspace
    /// contents folded in.
    pub fn effective(&self, root: &Path) -> FixtureManifest {
        let mut out = FixtureManifest {
            compile: self.compile.clone(),
            tests: self.tests.clone(),
            coverage: self.coverage.clone(),
            overrides: Vec::new(),
        };
        for ov in &self.overrides {
            let matches = fs::read_to_string(root.join(&ov.file))
                .map(|text| text.contains(&ov.contains))
                .unwrap_or(false);
            if !matches {
                continue;
            }
            if let Some(c) = &ov.compile {
                out.compile = c.clone();
            }
            for (id, t) in &ov.tests {
                out.tests.insert(id.clone(), t.clone());
            }
            if let Some(cov) = &ov.coverage {
                out.coverage = Some(cov.clone());
            }
        }
        out
    }

    pub fn compile_status(&self) -> Result<CompileStatus, AdapterError> {
        match &self.compile {
            ScriptedCompile::Keyword(k) if k.eq_ignore_ascii_case("ok") => Ok(CompileStatus::Ok),
            ScriptedCompile::Fail { fail } => Ok(CompileStatus::CompileFail {
                message: fail.clone(),
            }),
            ScriptedCompile::Keyword(k) => Err(AdapterError::BadFixture(format!(
                "unknown compile keyword `{k}`"
            ))),
        }
    }

    pub fn suite(&self) -> Vec<TestId> {
        self.tests.keys().map(|k| TestId::new(k.as_str())).collect()
    }

    pub fn run_test(&self, id: &TestId, timeout: Duration) -> Result<TestOutcome, AdapterError> {
        let script = self
            .tests
            .get(id.as_str())
            .ok_or_else(|| AdapterError::UnknownTest(id.clone()))?;
        Ok(match script {
            ScriptedTest::Keyword(k) => match k.to_ascii_lowercase().as_str() {
                "pass" => TestOutcome::Pass,
                "timeout" => TestOutcome::Timeout,
                other => {
                    return Err(AdapterError::BadFixture(format!(
                        "unknown test keyword `{other}` for {id}"
                    )))
                }
            },
            ScriptedTest::Fail { fail } => {
                if fail.error_type.trim().is_empty() {
                    return Err(AdapterError::BadFixture(format!(
                        "failure of {id} has an empty type"
                    )));
                }
                TestOutcome::FunctionalFail {
                    error_type: fail.error_type.clone(),
                    message: fail.msg.clone(),
                }
            }
            ScriptedTest::Crash { crash } => TestOutcome::Crash {
                message: crash.clone(),
            },
            ScriptedTest::Sleep { sleep_ms } => {
                let wanted = Duration::from_millis(*sleep_ms);
                thread::sleep(wanted.min(timeout));
                if wanted > timeout {
                    TestOutcome::Timeout
                } else {
                    TestOutcome::Pass
                }
            }
        })
    }

    pub fn coverage_map(&self) -> Result<CoverageMap, AdapterError> {
        let raw = self.coverage.as_ref().ok_or(AdapterError::CoverageUnavailable)?;
        let mut map = CoverageMap::new();
        for (file, lines) in raw {
            if lines.contains(&0) {
                return Err(AdapterError::MalformedReport(format!(
                    "line 0 in fixture coverage for {file}"
                )));
            }
            map.extend_file(file, lines.iter().copied());
        }
        map.prune_empty();
        Ok(map)
    }
}
