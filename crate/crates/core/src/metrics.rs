//! Plausible/correct rates, precision, and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_rational::Ratio;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repair::RepairTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("annotation for {0} has no plausible trace")]
    DanglingAnnotation(String),
    #[error("dataset size must be positive")]
    EmptyDataset,
    #[error("nothing to report")]
    NoSummaries,
    #[error("cannot read annotations: {0}")]
    BadAnnotations(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessVerdict {
    Correct,
    PlausibleButIncorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessAnnotation {
    pub bug_id: String,
    pub verdict: CorrectnessVerdict,
    #[serde(default)]
    pub rationale: String,
}

pub fn load_annotations(path: &Path) -> Result<Vec<CorrectnessAnnotation>, MetricsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MetricsError::BadAnnotations(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| MetricsError::BadAnnotations(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairSummary {
    pub method_label: String,
    pub dataset_size: u64,
    pub plausible: u64,
    pub correct: u64,
    pub total_cost: Decimal,
    pub correct_bugs: BTreeSet<String>,
}

impl RepairSummary {
    pub fn new(label: impl Into<String>, plausible: u64, correct: u64, dataset_size: u64) -> Self {
        RepairSummary {
            method_label: label.into(),
            dataset_size,
            plausible,
            correct,
            total_cost: Decimal::ZERO,
            correct_bugs: BTreeSet::new(),
        }
    }

    pub fn pr(&self) -> Ratio<u64> {
        Ratio::new(self.plausible, self.dataset_size)
    }

    pub fn cr(&self) -> Ratio<u64> {
        Ratio::new(self.correct, self.dataset_size)
    }

    pub fn precision(&self) -> Option<Ratio<u64>> {
        (self.plausible > 0).then(|| Ratio::new(self.correct, self.plausible))
    }

    pub fn pr_display(&self) -> String {
        percent(self.pr())
    }

    pub fn cr_display(&self) -> String {
        percent(self.cr())
    }

    pub fn precision_display(&self) -> String {
        self.precision().map(percent).unwrap_or_else(|| "N/A".into())
    }
}

/// Percentage rounded half up to two decimals, e.g. `33.33%`; exact zero is
/// `0%`.
pub fn percent(r: Ratio<u64>) -> String {
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    if n == 0 {
        return "0%".into();
    }
    let hundredths = (n * 10_000 * 2 + d) / (2 * d);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Counts plausible traces and the annotated correct ones among them.
pub fn summarize(
    label: &str,
    traces: &[RepairTrace],
    annotations: &[CorrectnessAnnotation],
    dataset_size: u64,
) -> Result<RepairSummary, MetricsError> {
    if dataset_size == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    let plausible: BTreeSet<&str> = traces
        .iter()
        .filter(|t| t.is_plausible())
        .map(|t| t.bug_id.as_str())
        .collect();
    let mut correct = BTreeSet::new();
    for a in annotations {
        if !plausible.contains(a.bug_id.as_str()) {
            return Err(MetricsError::DanglingAnnotation(a.bug_id.clone()));
        }
        if a.verdict == CorrectnessVerdict::Correct {
            correct.insert(a.bug_id.clone());
        }
    }
    Ok(RepairSummary {
        method_label: label.to_string(),
        dataset_size,
        plausible: plausible.len() as u64,
        correct: correct.len() as u64,
        total_cost: traces.iter().map(|t| t.total_cost).sum(),
        correct_bugs: correct,
    })
}

/// Bugs fixed correctly by at least one of the summaries.
pub fn union_correct(summaries: &[RepairSummary]) -> BTreeSet<String> {
    summaries
        .iter()
        .flat_map(|s| s.correct_bugs.iter().cloned())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Correct count descending, then precision descending with N/A last, then
/// label.
pub fn sort_summaries(summaries: &mut [RepairSummary]) {
    summaries.sort_by(|a, b| {
        b.correct
            .cmp(&a.correct)
            .then_with(|| b.precision().cmp(&a.precision()))
            .then_with(|| a.method_label.cmp(&b.method_label))
    });
}

const HEADER: [&str; 7] = [
    "method",
    "plausible",
    "correct",
    "plausible_rate",
    "correct_rate",
    "precision",
    "total_cost",
];

fn row(s: &RepairSummary) -> [String; 7] {
    [
        s.method_label.clone(),
        s.plausible.to_string(),
        s.correct.to_string(),
        s.pr_display(),
        s.cr_display(),
        s.precision_display(),
        s.total_cost.normalize().to_string(),
    ]
}

pub fn render_report(summaries: &[RepairSummary], format: ReportFormat) -> Result<String, MetricsError> {
    if summaries.is_empty() {
        return Err(MetricsError::NoSummaries);
    }
    let mut sorted = summaries.to_vec();
    sort_summaries(&mut sorted);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| MetricsError::Csv(e.to_string());
            w.write_record(HEADER).map_err(err)?;
            for s in &sorted {
                w.write_record(row(s)).map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| MetricsError::Csv(e.to_string()))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", HEADER.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(HEADER.len())));
            for s in &sorted {
                let cells = row(s).map(|c| c.replace('|', "\\|"));
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            Ok(out)
        }
    }
}

/// Machine-readable companion of the CSV report.
pub fn report_json(summaries: &[RepairSummary]) -> serde_json::Value {
    let mut sorted = summaries.to_vec();
    sort_summaries(&mut sorted);
    let rows: Vec<BTreeMap<&str, serde_json::Value>> = sorted
        .iter()
        .map(|s| {
            BTreeMap::from([
                ("method", s.method_label.clone().into()),
                ("dataset_size", s.dataset_size.into()),
                ("plausible", s.plausible.into()),
                ("correct", s.correct.into()),
                ("plausible_rate", s.pr_display().into()),
                ("correct_rate", s.cr_display().into()),
                ("precision", s.precision_display().into()),
                ("total_cost", s.total_cost.normalize().to_string().into()),
                (
                    "correct_bugs",
                    s.correct_bugs.iter().cloned().collect::<Vec<_>>().into(),
                ),
            ])
        })
        .collect();
    serde_json::json!({ "summaries": rows, "union_correct": union_correct(summaries) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_rounding() {
        let s = RepairSummary::new("x", 33, 9, 99);
        assert_eq!(
            (s.pr_display(), s.cr_display(), s.precision_display()),
            ("33.33%".into(), "9.09%".into(), "27.27%".into())
        );
        let s = RepairSummary::new("x", 20, 7, 99);
        assert_eq!(s.precision_display(), "35.00%");
        let s = RepairSummary::new("x", 0, 0, 99);
        assert_eq!(
            (s.pr_display(), s.cr_display(), s.precision_display()),
            ("0%".into(), "0%".into(), "N/A".into())
        );
        assert_eq!(percent(Ratio::new(1, 8)), "12.50%");
        assert_eq!(percent(Ratio::new(1, 200_000)), "0.00%");
        assert_eq!(percent(Ratio::new(1, 1)), "100.00%");
    }

    #[test]
    fn ordering() {
        let mut v = vec![
            RepairSummary::new("b", 10, 0, 99),
            RepairSummary::new("a", 0, 0, 99),
            RepairSummary::new("c", 20, 5, 99),
            RepairSummary::new("d", 10, 5, 99),
        ];
        sort_summaries(&mut v);
        let labels: Vec<_> = v.iter().map(|s| s.method_label.as_str()).collect();
        assert_eq!(labels, ["d", "c", "b", "a"]);
    }

    #[test]
    fn render_forms() {
        let one = [RepairSummary::new("TBar", 0, 0, 99)];
        let csv = render_report(&one, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.contains("N/A"));
        let md = render_report(&one, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| TBar | 0 | 0 | 0% | 0% | N/A | 0 |"));
        assert!(render_report(&[], ReportFormat::Csv).is_err());
    }

    #[test]
    fn union() {
        let mut a = RepairSummary::new("a", 2, 2, 10);
        a.correct_bugs = ["b1".to_string(), "b2".to_string()].into();
        let mut b = RepairSummary::new("b", 2, 2, 10);
        b.correct_bugs = ["b2".to_string(), "b3".to_string()].into();
        assert_eq!(union_correct(&[a, b]).len(), 3);
    }
}
