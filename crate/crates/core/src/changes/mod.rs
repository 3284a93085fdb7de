//! Line diffs between file trees, coverage-based minimization, patch
//! statistics and repair-operator aggregation.

mod operators;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};
use thiserror::Error;

use crate::adapter::FileTree;
use crate::coverage::{CoverageMap, FileLines};

pub use operators::{
    aggregate_operators, load_annotations, OperatorAnnotation, OperatorDistribution,
};
pub use stats::{
    describe, nearest_rank, patch_stats, per_bug_csv, summary_csv, Distribution, PatchStats,
    StatsRow,
};

#[derive(Debug, Error)]
pub enum ChangeError {
    #[error("{0} is binary")]
    BinaryFile(String),
    #[error("cannot apply changes to {path}: {reason}")]
    Apply { path: String, reason: String },
    #[error("invalid operator annotation: {0}")]
    InvalidAnnotation(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("csv output failed: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Added,
    Removed,
    Modified,
}

/// One changed line. `text` is the new content for Added/Modified and the old
/// content for Removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEdit {
    pub kind: EditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_line: Option<u32>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_text: Option<String>,
}

/// A maximal run of changed lines (zero context). `old_start`/`new_start` are
/// 1-based; for a pure insertion `old_start` is the old line it precedes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub new_start: u32,
    pub edits: Vec<LineEdit>,
}

impl Hunk {
    pub fn old_len(&self) -> u32 {
        self.edits.iter().filter(|e| e.old_line.is_some()).count() as u32
    }

    pub fn new_len(&self) -> u32 {
        self.edits.iter().filter(|e| e.new_line.is_some()).count() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    Added,
    Deleted,
    Modified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub status: FileStatus,
    pub hunks: Vec<Hunk>,
    pub old_trailing_newline: bool,
    pub new_trailing_newline: bool,
}

impl FileDiff {
    pub fn edits(&self) -> impl Iterator<Item = &LineEdit> {
        self.hunks.iter().flat_map(|h| h.edits.iter())
    }
}

/// Changed lines per file path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub files: BTreeMap<String, FileDiff>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_binary: Vec<String>,
}

/// Which version's line numbers to look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSide {
    /// Removed lines, by old line number.
    Old,
    /// Added and modified lines, by new line number.
    New,
}

/// Covered changed lines per file.
pub type MinimizedChangeSet = FileLines;

struct SplitText<'a> {
    lines: Vec<&'a str>,
    trailing_newline: bool,
}

fn split(text: &str) -> SplitText<'_> {
    if text.is_empty() {
        return SplitText {
            lines: Vec::new(),
            trailing_newline: false,
        };
    }
    let trailing_newline = text.ends_with('\n');
    let body = if trailing_newline {
        &text[..text.len() - 1]
    } else {
        text
    };
    SplitText {
        lines: body.split('\n').collect(),
        trailing_newline,
    }
}

fn is_binary(bytes: &[u8]) -> bool {
    bytes.contains(&0) || std::str::from_utf8(bytes).is_err()
}

fn ln(index: usize) -> u32 {
    (index + 1) as u32
}

/// A non-equal diff op with positions recomputed from op lengths; the
/// indices reported by the diff engine are not always consistent.
struct Change {
    old: std::ops::Range<usize>,
    new: std::ops::Range<usize>,
}

fn flush(run: &mut Vec<Change>, hunks: &mut Vec<Hunk>, old: &[&str], new: &[&str]) {
    let Some(first) = run.first() else { return };
    let old_start = ln(first.old.start);
    let new_start = ln(first.new.start);
    let mut removed = Vec::new();
    let mut added = Vec::new();
    for c in run.drain(..) {
        removed.extend(c.old);
        added.extend(c.new);
    }
    let paired = removed.len().min(added.len());
    let mut edits = Vec::with_capacity(removed.len().max(added.len()));
    for i in 0..paired {
        edits.push(LineEdit {
            kind: EditKind::Modified,
            old_line: Some(ln(removed[i])),
            new_line: Some(ln(added[i])),
            text: new[added[i]].to_string(),
            old_text: Some(old[removed[i]].to_string()),
        });
    }
    for &o in &removed[paired..] {
        edits.push(LineEdit {
            kind: EditKind::Removed,
            old_line: Some(ln(o)),
            new_line: None,
            text: old[o].to_string(),
            old_text: None,
        });
    }
    for &n in &added[paired..] {
        edits.push(LineEdit {
            kind: EditKind::Added,
            old_line: None,
            new_line: Some(ln(n)),
            text: new[n].to_string(),
            old_text: None,
        });
    }
    hunks.push(Hunk {
        old_start,
        new_start,
        edits,
    });
}

fn diff_lines(old: &[&str], new: &[&str]) -> Vec<Hunk> {
    let mut hunks = Vec::new();
    let mut run = Vec::new();
    let (mut o, mut n) = (0usize, 0usize);
    for op in capture_diff_slices(Algorithm::Myers, old, new) {
        let (old_len, new_len) = match op {
            DiffOp::Equal { len, .. } => {
                flush(&mut run, &mut hunks, old, new);
                o += len;
                n += len;
                continue;
            }
            DiffOp::Delete { old_len, .. } => (old_len, 0),
            DiffOp::Insert { new_len, .. } => (0, new_len),
            DiffOp::Replace {
                old_len, new_len, ..
            } => (old_len, new_len),
        };
        run.push(Change {
            old: o..o + old_len,
            new: n..n + new_len,
        });
        o += old_len;
        n += new_len;
    }
    flush(&mut run, &mut hunks, old, new);
    debug_assert_eq!((o, n), (old.len(), new.len()));
    hunks
}

/// Diffs two text files. Lines are compared without their terminators.
pub fn diff_text(old: &str, new: &str) -> FileDiff {
    let a = split(old);
    let b = split(new);
    FileDiff {
        status: FileStatus::Modified,
        hunks: diff_lines(&a.lines, &b.lines),
        old_trailing_newline: a.trailing_newline,
        new_trailing_newline: b.trailing_newline,
    }
}

/// Line diff of every file that differs between the two trees. Binary files
/// are skipped with a warning and listed in `skipped_binary`.
pub fn compute_diff(old_tree: &FileTree, new_tree: &FileTree) -> ChangeSet {
    let mut out = ChangeSet::default();
    let paths: std::collections::BTreeSet<&String> = old_tree.keys().chain(new_tree.keys()).collect();
    for path in paths {
        let old = old_tree.get(path);
        let new = new_tree.get(path);
        if old == new {
            continue;
        }
        if old.is_some_and(|b| is_binary(b)) || new.is_some_and(|b| is_binary(b)) {
            log::warn!("skipping binary file {path}");
            out.skipped_binary.push(path.clone());
            continue;
        }
        let old_text = old.map(|b| std::str::from_utf8(b).expect("checked utf-8"));
        let new_text = new.map(|b| std::str::from_utf8(b).expect("checked utf-8"));
        let mut diff = diff_text(old_text.unwrap_or(""), new_text.unwrap_or(""));
        diff.status = match (old, new) {
            (None, _) => FileStatus::Added,
            (_, None) => FileStatus::Deleted,
            _ => FileStatus::Modified,
        };
        out.files.insert(path.clone(), diff);
    }
    out
}

fn apply_file(path: &str, old: &str, diff: &FileDiff) -> Result<String, ChangeError> {
    let fail = |reason: String| ChangeError::Apply {
        path: path.to_string(),
        reason,
    };
    let old_lines = split(old).lines;
    let mut out: Vec<&str> = Vec::new();
    let mut cursor = 0usize;
    for hunk in &diff.hunks {
        let start = hunk.old_start as usize - 1;
        if start < cursor || start > old_lines.len() {
            return Err(fail(format!("hunk at old line {} out of order", hunk.old_start)));
        }
        out.extend_from_slice(&old_lines[cursor..start]);
        let mut incoming: Vec<(u32, &str)> = hunk
            .edits
            .iter()
            .filter_map(|e| e.new_line.map(|n| (n, e.text.as_str())))
            .collect();
        incoming.sort_by_key(|(n, _)| *n);
        out.extend(incoming.into_iter().map(|(_, t)| t));
        cursor = start + hunk.old_len() as usize;
        if cursor > old_lines.len() {
            return Err(fail(format!("hunk at old line {} runs past the end", hunk.old_start)));
        }
    }
    out.extend_from_slice(&old_lines[cursor..]);
    let mut text = out.join("\n");
    if diff.new_trailing_newline && !out.is_empty() {
        text.push('\n');
    }
    Ok(text)
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Changed line numbers on one side.
    pub fn lines(&self, side: LineSide) -> FileLines {
        let mut out = FileLines::new();
        for (path, diff) in &self.files {
            out.touch(path);
            for e in diff.edits() {
                let line = match (side, e.kind) {
                    (LineSide::Old, EditKind::Removed) => e.old_line,
                    (LineSide::New, EditKind::Added | EditKind::Modified) => e.new_line,
                    _ => None,
                };
                if let Some(l) = line {
                    out.insert(path, l);
                }
            }
        }
        out
    }

    /// Replays the changes on `old_tree`. Binary files listed as skipped are
    /// left untouched.
    pub fn apply(&self, old_tree: &FileTree) -> Result<FileTree, ChangeError> {
        let mut tree = old_tree.clone();
        for (path, diff) in &self.files {
            if diff.status == FileStatus::Deleted {
                tree.remove(path);
                continue;
            }
            let old = match old_tree.get(path) {
                Some(b) => std::str::from_utf8(b)
                    .map_err(|_| ChangeError::BinaryFile(path.clone()))?
                    .to_string(),
                None => String::new(),
            };
            let new = apply_file(path, &old, diff)?;
            tree.insert(path.clone(), new.into_bytes());
        }
        Ok(tree)
    }
}

/// Changed lines on `side` that `coverage` marks as executed. Every changed
/// file appears in the result, with an empty set when nothing is covered.
pub fn intersect_with_coverage(
    changes: &ChangeSet,
    coverage: &CoverageMap,
    side: LineSide,
) -> MinimizedChangeSet {
    let mut out = FileLines::new();
    for (path, lines) in changes.lines(side).files() {
        out.touch(path);
        if let Some(covered) = coverage.get(path) {
            out.extend_file(path, lines.intersection(covered).copied());
        }
    }
    out
}

/// Both sides of a minimized change: removed lines checked against the old
/// version's coverage, added/modified lines against the new version's.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Minimized {
    pub old: MinimizedChangeSet,
    pub new: MinimizedChangeSet,
}

impl Minimized {
    pub fn line_count(&self) -> usize {
        self.old.total_lines() + self.new.total_lines()
    }
}

pub fn minimize(changes: &ChangeSet, old_coverage: &CoverageMap, new_coverage: &CoverageMap) -> Minimized {
    Minimized {
        old: intersect_with_coverage(changes, old_coverage, LineSide::Old),
        new: intersect_with_coverage(changes, new_coverage, LineSide::New),
    }
}
