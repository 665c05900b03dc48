use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_targets, Aggregates, EvalError, EvaluationRun, TargetReport, Targets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config_version: String,
    pub aggregates: Aggregates,
    pub targets: TargetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub name: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a`, when both sides apply.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: RunSummary,
    pub b: RunSummary,
    pub deltas: Vec<Delta>,
    pub winner: Winner,
}

impl ComparisonReport {
    pub fn delta(&self, name: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.name == name)
    }
}

fn fields(a: &Aggregates) -> [(&'static str, Option<f64>); 11] {
    let m = &a.metrics;
    [
        ("correct_rate", Some(a.correct_rate)),
        ("acceptable_rate", Some(a.acceptable_rate)),
        ("incorrect_rate", Some(a.incorrect_rate)),
        ("contradiction_count", Some(a.contradiction_count as f64)),
        ("mean_latency_ms", Some(a.mean_latency_ms)),
        ("total_cost", Some(a.total_cost)),
        ("context_precision", m.context_precision),
        ("context_recall", m.context_recall),
        ("faithfulness", m.faithfulness),
        ("answer_relevance", m.answer_relevance),
        ("prompt_agreement", m.prompt_agreement),
    ]
}

/// Side-by-side aggregates of two runs of the same test set.
///
/// The winner is the only run that passes the targets; when both or neither
/// pass, the higher correct rate, then the lower incorrect rate, then the
/// higher mean context recall decides.
pub fn compare_runs(a: &EvaluationRun, b: &EvaluationRun, targets: &Targets) -> Result<ComparisonReport, EvalError> {
    let summary = |r: &EvaluationRun| -> Result<RunSummary, EvalError> {
        Ok(RunSummary {
            run_id: r.run_id.clone(),
            config_version: r.config_version.clone(),
            aggregates: r.aggregates.clone(),
            targets: check_targets(r, targets)?,
        })
    };
    let (sa, sb) = (summary(a)?, summary(b)?);
    let deltas = fields(&sa.aggregates)
        .into_iter()
        .zip(fields(&sb.aggregates))
        .map(|((name, x), (_, y))| Delta {
            name: name.into(),
            a: x,
            b: y,
            delta: x.zip(y).map(|(x, y)| y - x),
        })
        .collect();
    let winner = match (sa.targets.pass, sb.targets.pass) {
        (true, false) => Winner::A,
        (false, true) => Winner::B,
        _ => {
            let (x, y) = (&sa.aggregates, &sb.aggregates);
            let recall = |g: &Aggregates| g.metrics.context_recall.unwrap_or(0.0);
            let order = x
                .correct_rate
                .total_cmp(&y.correct_rate)
                .then_with(|| y.incorrect_rate.total_cmp(&x.incorrect_rate))
                .then_with(|| recall(x).total_cmp(&recall(y)));
            match order {
                core::cmp::Ordering::Greater => Winner::A,
                core::cmp::Ordering::Less => Winner::B,
                core::cmp::Ordering::Equal => Winner::Tie,
            }
        }
    };
    Ok(ComparisonReport {
        a: sa,
        b: sb,
        deltas,
        winner,
    })
}
