//! Accuracy reports. A report depends only on terminal records, so it can be
//! recomputed exactly from a trace.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vidagent_core::planner::TerminationCause;
use vidagent_core::task::Task;

use crate::trace::{read_trace, terminals, Terminal, TraceError};

/// Run configuration echoed into reports and trace headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub seed: u64,
    pub temperature: f64,
    pub max_rounds: u32,
    pub skills_enabled: bool,
    pub conflict_enabled: bool,
    pub tool_backend: String,
    pub planner_backend: String,
    /// Task ids chosen when the run evaluates a sample; empty when all tasks ran.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sampled_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run: RunEcho,
    pub episodes: usize,
    /// Episodes with a gold letter; accuracy is over these.
    pub scored: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_kind: BTreeMap<String, KindStats>,
    pub random_baseline: f64,
    pub forced_answers: usize,
    pub aborted: usize,
    pub backend_unavailable: usize,
    pub failed: usize,
    pub violations: u64,
    pub conflicts_detected: usize,
    pub conflicts_resolved: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn baseline(option_counts: impl Iterator<Item = usize>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for k in option_counts {
        if k > 0 {
            sum += 1.0 / k as f64;
        }
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Expected accuracy of uniform guessing: mean of 1/(option count).
pub fn compute_random_baseline(tasks: &[Task]) -> f64 {
    baseline(tasks.iter().map(|t| t.options.len()))
}

impl Report {
    /// Builds a report from terminal records. Records are taken in task-id order
    /// so the result does not depend on completion order.
    pub fn from_terminals<'a>(run: RunEcho, records: impl IntoIterator<Item = &'a Terminal>) -> Report {
        let mut sorted: Vec<&Terminal> = records.into_iter().collect();
        sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let mut per_kind: BTreeMap<String, KindStats> = BTreeMap::new();
        let (mut scored, mut correct) = (0, 0);
        let count = |c: TerminationCause| sorted.iter().filter(|t| t.termination == Some(c)).count();
        for t in &sorted {
            if let Some(ok) = t.correct {
                scored += 1;
                let k = per_kind.entry(t.kind.clone()).or_default();
                k.total += 1;
                if ok {
                    correct += 1;
                    k.correct += 1;
                }
            }
        }
        for k in per_kind.values_mut() {
            k.accuracy = ratio(k.correct, k.total);
        }
        Report {
            run,
            episodes: sorted.len(),
            scored,
            correct,
            accuracy: ratio(correct, scored),
            per_kind,
            random_baseline: baseline(sorted.iter().map(|t| t.option_count)),
            forced_answers: count(TerminationCause::ForcedAtBudget),
            aborted: count(TerminationCause::AbortedOnRepeatedViolations),
            backend_unavailable: count(TerminationCause::BackendUnavailable),
            failed: sorted.iter().filter(|t| t.termination.is_none()).count(),
            violations: sorted.iter().map(|t| u64::from(t.violations)).sum(),
            conflicts_detected: sorted.iter().map(|t| t.conflicts_detected).sum(),
            conflicts_resolved: sorted.iter().map(|t| t.conflicts_resolved).sum(),
        }
    }

    /// Recomputes the report of a run from its trace file.
    pub fn from_trace(path: &Path) -> Result<Report, TraceError> {
        let (run, records) = read_trace(path)?;
        Ok(Report::from_terminals(run, terminals(&records)))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "accuracy {:.1}% ({}/{}), random baseline {:.1}%\n",
            100.0 * self.accuracy,
            self.correct,
            self.scored,
            100.0 * self.random_baseline
        );
        for (kind, k) in &self.per_kind {
            out.push_str(&format!("  {kind:<20} {:>6.1}% ({}/{})\n", 100.0 * k.accuracy, k.correct, k.total));
        }
        out.push_str(&format!(
            "forced {} aborted {} unavailable {} failed {} violations {} conflicts {}/{} resolved\n",
            self.forced_answers,
            self.aborted,
            self.backend_unavailable,
            self.failed,
            self.violations,
            self.conflicts_resolved,
            self.conflicts_detected
        ));
        out
    }
}
