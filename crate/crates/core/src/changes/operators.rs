use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ChangeError;
use crate::model::{BugCategory, RepairOperatorTag};

/// One entry of `operators.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorAnnotation {
    pub bug_id: String,
    pub category: BugCategory,
    pub operators: Vec<RepairOperatorTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods_modified: Option<u32>,
}

pub fn load_annotations(path: &Path) -> Result<Vec<OperatorAnnotation>, ChangeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ChangeError::InvalidAnnotation(format!("{}: {e}", path.display())))?;
    let list: Vec<OperatorAnnotation> = serde_json::from_str(&text)
        .map_err(|e| ChangeError::InvalidAnnotation(format!("{}: {e}", path.display())))?;
    for a in &list {
        for t in &a.operators {
            t.validate()?;
        }
    }
    Ok(list)
}

/// Number of patches containing each operator, overall and per category, and
/// how many patches use a given number of distinct operators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorDistribution {
    pub patches: usize,
    pub overall: BTreeMap<String, usize>,
    pub by_category: BTreeMap<BugCategory, BTreeMap<String, usize>>,
    pub operators_per_patch: BTreeMap<usize, usize>,
}

impl OperatorDistribution {
    pub fn count(&self, label: &str) -> usize {
        self.overall.get(label).copied().unwrap_or(0)
    }

    pub fn count_in(&self, category: BugCategory, label: &str) -> usize {
        self.by_category
            .get(&category)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(0)
    }

    /// Labels ordered by descending count, then by label.
    pub fn ranking(&self) -> Vec<(&str, usize)> {
        let mut v: Vec<_> = self
            .overall
            .iter()
            .filter(|(_, c)| **c > 0)
            .map(|(l, c)| (l.as_str(), *c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

fn zero_table() -> BTreeMap<String, usize> {
    RepairOperatorTag::all_valid()
        .iter()
        .map(|t| (t.label(), 0))
        .collect()
}

/// Counts are per patch: an operator listed twice for one bug counts once.
pub fn aggregate_operators(
    annotations: &[OperatorAnnotation],
) -> Result<OperatorDistribution, ChangeError> {
    let mut dist = OperatorDistribution {
        patches: annotations.len(),
        overall: zero_table(),
        by_category: BugCategory::ALL.iter().map(|c| (*c, zero_table())).collect(),
        operators_per_patch: BTreeMap::new(),
    };
    for a in annotations {
        let mut distinct = BTreeSet::new();
        for t in &a.operators {
            t.validate()?;
            distinct.insert(*t);
        }
        for t in &distinct {
            let label = t.label();
            *dist.overall.entry(label.clone()).or_default() += 1;
            *dist
                .by_category
                .entry(a.category)
                .or_default()
                .entry(label)
                .or_default() += 1;
        }
        *dist.operators_per_patch.entry(distinct.len()).or_default() += 1;
    }
    Ok(dist)
}
