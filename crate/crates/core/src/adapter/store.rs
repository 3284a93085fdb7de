//! On-disk bug store: one directory per bug with `manifest.json` and the four
//! snapshot trees.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{AdapterError, AdapterSpec};
use crate::model::{FunctionLocator, LineSpan, RegressionInstance, SnapshotRole, TestId};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCommits {
    pub inducing: String,
    pub fixing: String,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "de_commit_date",
        serialize_with = "ser_commit_date"
    )]
    pub fixing_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFunction {
    pub file: String,
    pub signature: String,
    pub start_line: u32,
    pub end_line: u32,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub bug_id: String,
    pub project_id: String,
    pub commits: ManifestCommits,
    pub witness_tests: Vec<String>,
    pub buggy_function: ManifestFunction,
    #[serde(default)]
    pub inducing_message: String,
    #[serde(default)]
    pub fixing_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<AdapterSpec>,
}

/// Accepts `YYYY-MM-DD` or an RFC 3339 timestamp; timestamps are truncated to
/// their UTC calendar date.
pub fn parse_commit_date(s: &str) -> Result<NaiveDate, String> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.with_timezone(&Utc).date_naive())
        .map_err(|e| format!("invalid commit date `{s}`: {e}"))
}

fn de_commit_date<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    raw.map(|s| parse_commit_date(&s).map_err(serde::de::Error::custom))
        .transpose()
}

fn ser_commit_date<S: Serializer>(d: &Option<NaiveDate>, s: S) -> Result<S::Ok, S::Error> {
    match d {
        Some(d) => s.serialize_str(&d.format("%Y-%m-%d").to_string()),
        None => s.serialize_none(),
    }
}

impl Manifest {
    pub fn to_instance(&self) -> Result<RegressionInstance, AdapterError> {
        let f = &self.buggy_function;
        let span = LineSpan::new(f.start_line, f.end_line)?;
        let bug = RegressionInstance {
            bug_id: self.bug_id.clone(),
            project_id: self.project_id.clone(),
            inducing_commit: self.commits.inducing.clone(),
            fixing_commit: self.commits.fixing.clone(),
            fixing_date: self.commits.fixing_date,
            witness_tests: self.witness_tests.iter().map(|t| TestId::new(t.as_str())).collect(),
            inducing_message: self.inducing_message.clone(),
            fixing_message: self.fixing_message.clone(),
            buggy_function: FunctionLocator {
                file_path: crate::coverage::normalize_path(&f.file),
                signature: f.signature.clone(),
                line_span: span,
            },
        };
        bug.validate()?;
        Ok(bug)
    }
}

/// A bug loaded from the store.
#[derive(Debug, Clone)]
pub struct StoredBug {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub instance: RegressionInstance,
}

impl StoredBug {
    pub fn snapshot_dir(&self, role: SnapshotRole) -> PathBuf {
        self.dir.join(role.dir_name())
    }
}

#[derive(Debug, Clone)]
pub struct BugStore {
    root: PathBuf,
}

impl BugStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, AdapterError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(AdapterError::Io {
                path: root.clone(),
                message: "bug store directory does not exist".into(),
            });
        }
        Ok(BugStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Bug ids in the store, sorted.
    pub fn bug_ids(&self) -> Result<Vec<String>, AdapterError> {
        let mut ids = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| AdapterError::io(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| AdapterError::io(&self.root, e))?;
            if entry.path().join(MANIFEST_FILE).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load(&self, bug_id: &str) -> Result<StoredBug, AdapterError> {
        let dir = self.root.join(bug_id);
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(AdapterError::UnknownBug(bug_id.to_string()));
        }
        let text = fs::read_to_string(&path).map_err(|e| AdapterError::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| AdapterError::BadManifest {
                path: path.clone(),
                message: e.to_string(),
            })?;
        let instance = manifest.to_instance()?;
        Ok(StoredBug {
            dir,
            manifest,
            instance,
        })
    }

    pub fn load_all(&self) -> Result<Vec<StoredBug>, AdapterError> {
        self.bug_ids()?.iter().map(|id| self.load(id)).collect()
    }
}

/// Files and optional fixture script of one snapshot, for [`write_stored_bug`].
#[derive(Debug, Clone, Default)]
pub struct SnapshotSpec {
    pub files: Vec<(String, String)>,
    pub fixture: Option<super::FixtureManifest>,
}

/// Writes a bug entry (manifest plus snapshot trees) under `root` and loads
/// it back. Roles without a spec get no snapshot directory.
pub fn write_stored_bug(
    root: &Path,
    manifest: &Manifest,
    snapshots: &[(SnapshotRole, SnapshotSpec)],
) -> Result<StoredBug, AdapterError> {
    let dir = root.join(&manifest.bug_id);
    let put = |path: &Path, text: &str| -> Result<(), AdapterError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| AdapterError::io(parent, e))?;
        }
        fs::write(path, text).map_err(|e| AdapterError::io(path, e))
    };
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    put(&dir.join(MANIFEST_FILE), &json)?;
    for (role, spec) in snapshots {
        let snap = dir.join(role.dir_name());
        fs::create_dir_all(&snap).map_err(|e| AdapterError::io(&snap, e))?;
        for (rel, text) in &spec.files {
            put(&snap.join(rel), text)?;
        }
        if let Some(fx) = &spec.fixture {
            let json = serde_json::to_string_pretty(fx).expect("fixture serializes");
            put(&snap.join(super::FIXTURE_FILE), &json)?;
        }
    }
    BugStore::open(root)?.load(&manifest.bug_id)
}
