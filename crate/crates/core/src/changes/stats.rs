use serde::{Deserialize, Serialize};

use super::{ChangeError, ChangeSet, EditKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchStats {
    pub added: u32,
    pub removed: u32,
    pub modified: u32,
    pub patch_size: u32,
    pub chunks: u32,
    pub files: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<u32>,
}

/// Line and scope counts for one patch. `files` counts files with at least
/// one hunk; `methods` comes from annotations when given.
pub fn patch_stats(changes: &ChangeSet, methods: Option<u32>) -> PatchStats {
    let mut s = PatchStats {
        methods,
        ..Default::default()
    };
    for diff in changes.files.values() {
        if !diff.hunks.is_empty() {
            s.files += 1;
        }
        s.chunks += diff.hunks.len() as u32;
        for e in diff.edits() {
            match e.kind {
                EditKind::Added => s.added += 1,
                EditKind::Removed => s.removed += 1,
                EditKind::Modified => s.modified += 1,
            }
        }
    }
    s.patch_size = s.added + s.removed + s.modified;
    s
}

/// Nearest-rank percentile of sorted data: the value at rank ceil(p/100 * n).
pub fn nearest_rank(sorted: &[u32], p: u32) -> Option<u32> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (u64::from(p) * n).div_ceil(100).max(1);
    Some(sorted[(rank - 1) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: u32,
    pub p25: u32,
    pub p50: u32,
    pub p75: u32,
    pub p90: u32,
    pub p95: u32,
    pub max: u32,
}

pub fn describe(values: &[u32]) -> Option<Distribution> {
    let mut v = values.to_vec();
    v.sort_unstable();
    let q = |p| nearest_rank(&v, p);
    Some(Distribution {
        min: *v.first()?,
        p25: q(25)?,
        p50: q(50)?,
        p75: q(75)?,
        p90: q(90)?,
        p95: q(95)?,
        max: *v.last()?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub bug_id: String,
    #[serde(flatten)]
    pub stats: PatchStats,
}

fn csv_err(e: impl std::fmt::Display) -> ChangeError {
    ChangeError::Csv(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ChangeError> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// One line per bug: bug_id, added, removed, modified, patch_size, chunks,
/// files, methods.
pub fn per_bug_csv(rows: &[StatsRow]) -> Result<String, ChangeError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "bug_id", "added", "removed", "modified", "patch_size", "chunks", "files", "methods",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let s = &r.stats;
        w.write_record([
            r.bug_id.clone(),
            s.added.to_string(),
            s.removed.to_string(),
            s.modified.to_string(),
            s.patch_size.to_string(),
            s.chunks.to_string(),
            s.files.to_string(),
            s.methods.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Benchmark-wide quantiles, one line per measure. The methods line is
/// present only when every row has a method count.
pub fn summary_csv(rows: &[StatsRow]) -> Result<String, ChangeError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["measure", "min", "25%", "50%", "75%", "90%", "95%", "max"])
        .map_err(csv_err)?;
    let col = |f: fn(&PatchStats) -> u32| rows.iter().map(|r| f(&r.stats)).collect::<Vec<_>>();
    let mut measures: Vec<(&str, Vec<u32>)> = vec![
        ("added_lines", col(|s| s.added)),
        ("removed_lines", col(|s| s.removed)),
        ("modified_lines", col(|s| s.modified)),
        ("patch_size", col(|s| s.patch_size)),
        ("chunks", col(|s| s.chunks)),
        ("modified_files", col(|s| s.files)),
    ];
    if let Some(methods) = rows.iter().map(|r| r.stats.methods).collect::<Option<Vec<_>>>() {
        measures.push(("modified_methods", methods));
    }
    for (name, values) in measures {
        let Some(d) = describe(&values) else { continue };
        let cells = [d.min, d.p25, d.p50, d.p75, d.p90, d.p95, d.max].map(|v| v.to_string());
        let mut record = vec![name.to_string()];
        record.extend(cells);
        w.write_record(&record).map_err(csv_err)?;
    }
    finish(w)
}
