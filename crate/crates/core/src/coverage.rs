//! Per-file line sets and the coverage report readers (LCOV and JSON map).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("malformed coverage report at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Map from normalized workspace-relative file path to a set of 1-based line
/// numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileLines(BTreeMap<String, BTreeSet<u32>>);

/// Lines covered by a test run, per file.
pub type CoverageMap = FileLines;

impl FileLines {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, file: &str, line: u32) {
        self.0.entry(normalize_path(file)).or_default().insert(line);
    }

    pub fn extend_file<I: IntoIterator<Item = u32>>(&mut self, file: &str, lines: I) {
        self.0.entry(normalize_path(file)).or_default().extend(lines);
    }

    /// Ensures `file` is present, possibly with an empty set.
    pub fn touch(&mut self, file: &str) {
        self.0.entry(normalize_path(file)).or_default();
    }

    pub fn get(&self, file: &str) -> Option<&BTreeSet<u32>> {
        self.0.get(&normalize_path(file))
    }

    pub fn files(&self) -> impl Iterator<Item = (&String, &BTreeSet<u32>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_lines(&self) -> usize {
        self.0.values().map(BTreeSet::len).sum()
    }

    /// Drops files with no lines.
    pub fn prune_empty(&mut self) {
        self.0.retain(|_, lines| !lines.is_empty());
    }

    pub fn union_with(&mut self, other: &FileLines) {
        for (file, lines) in &other.0 {
            self.0.entry(file.clone()).or_default().extend(lines);
        }
    }

    pub fn is_subset_of(&self, other: &FileLines) -> bool {
        self.0.iter().all(|(file, lines)| {
            lines.is_empty()
                || other
                    .0
                    .get(file)
                    .map(|o| lines.is_subset(o))
                    .unwrap_or(false)
        })
    }
}

impl<S: AsRef<str>, I: IntoIterator<Item = u32>> FromIterator<(S, I)> for FileLines {
    fn from_iter<T: IntoIterator<Item = (S, I)>>(iter: T) -> Self {
        let mut out = FileLines::new();
        for (file, lines) in iter {
            out.extend_file(file.as_ref(), lines);
        }
        out
    }
}

/// Lexically normalizes a relative path: forward slashes, no `.` segments,
/// `..` folded where possible, no leading `./` or duplicate separators.
pub fn normalize_path(path: &str) -> String {
    let unified = path.replace('\\', "/");
    let absolute = unified.starts_with('/');
    let mut parts: Vec<&str> = Vec::new();
    for seg in unified.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                if matches!(parts.last(), Some(p) if *p != "..") {
                    parts.pop();
                } else if !absolute {
                    parts.push("..");
                }
            }
            s => parts.push(s),
        }
    }
    let joined = parts.join("/");
    if absolute {
        format!("/{joined}")
    } else {
        joined
    }
}

fn relativize(file: &str, root: Option<&Path>) -> String {
    let norm = normalize_path(file);
    if let Some(root) = root {
        let root = normalize_path(&root.to_string_lossy());
        if let Some(rest) = norm.strip_prefix(&root) {
            if let Some(rest) = rest.strip_prefix('/') {
                return rest.to_string();
            }
        }
    }
    norm
}

/// Parses an LCOV tracefile. A `DA:<line>,<count>` record marks `line` as
/// covered when `count > 0`. Repeated `SF:` sections for one file are unioned.
pub fn parse_lcov(text: &str, root: Option<&Path>) -> Result<CoverageMap, ReportError> {
    let mut map = CoverageMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let malformed = |reason: &str| ReportError::Malformed {
            line: idx + 1,
            reason: reason.to_string(),
        };
        if let Some(path) = line.strip_prefix("SF:") {
            current = Some(relativize(path.trim(), root));
        } else if let Some(rec) = line.strip_prefix("DA:") {
            let file = current
                .as_deref()
                .ok_or_else(|| malformed("DA record outside of an SF section"))?;
            let mut fields = rec.split(',');
            let line_no: u32 = fields
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| malformed("bad line number"))?;
            if line_no == 0 {
                return Err(malformed("line number 0"));
            }
            let count: u64 = fields
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| malformed("bad execution count"))?;
            if count > 0 {
                map.insert(file, line_no);
            }
        } else if line == "end_of_record" {
            current = None;
        }
    }
    map.prune_empty();
    Ok(map)
}

/// Parses a JSON coverage map `{"path": [line, ...]}`.
pub fn parse_json_coverage(text: &str, root: Option<&Path>) -> Result<CoverageMap, ReportError> {
    let raw: BTreeMap<String, Vec<i64>> =
        serde_json::from_str(text).map_err(|e| ReportError::Malformed {
            line: e.line(),
            reason: e.to_string(),
        })?;
    let mut map = CoverageMap::new();
    for (file, lines) in raw {
        let file = relativize(&file, root);
        for l in lines {
            if l < 1 || l > i64::from(u32::MAX) {
                return Err(ReportError::Malformed {
                    line: 0,
                    reason: format!("invalid line number {l} for {file}"),
                });
            }
            map.insert(&file, l as u32);
        }
    }
    map.prune_empty();
    Ok(map)
}

/// Detects the format by the first non-blank character (`{` means JSON).
pub fn parse_report(text: &str, root: Option<&Path>) -> Result<CoverageMap, ReportError> {
    if text.trim_start().starts_with('{') {
        parse_json_coverage(text, root)
    } else {
        parse_lcov(text, root)
    }
}
