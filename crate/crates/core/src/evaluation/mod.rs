//! Gold-annotated test sets, per-query records, run aggregates and the target gate.

mod compare;
mod metrics;

pub use compare::{compare_runs, ComparisonReport, Delta, RunSummary, Winner};

pub use metrics::{
    answer_agreement, answer_relevance, context_precision, context_recall, faithfulness, faithfulness_judged, jaccard,
    question_generation_prompt, relevance_from_similarities, GoldSet, MetricError,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),
    #[error("query {query_id:?}: {message}")]
    InvalidQuery { query_id: String, message: String },
    #[error("run has no records")]
    EmptyRun,
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestQuery {
    pub query_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<String>,
    #[serde(default)]
    pub gold_chunk_ids: Vec<String>,
    /// Verbatim passages that answer the query, resolved to chunks per
    /// chunking so one test set serves every configuration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_evidence: Vec<String>,
    #[serde(default)]
    pub must_contain: Vec<String>,
    #[serde(default)]
    pub must_not_contain: Vec<String>,
}

impl TestQuery {
    pub fn answerable(&self) -> bool {
        !self.gold_chunk_ids.is_empty() || !self.gold_evidence.is_empty()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |message: &str| EvalError::InvalidQuery {
            query_id: self.query_id.clone(),
            message: message.into(),
        };
        if self.query_id.trim().is_empty() {
            return Err(invalid("query_id is empty"));
        }
        if self.question.trim().is_empty() {
            return Err(invalid("question is empty"));
        }
        let must: Vec<String> = self.must_contain.iter().map(|s| normalize(s)).collect();
        if self.must_not_contain.iter().any(|m| must.contains(&normalize(m))) {
            return Err(invalid("must_contain and must_not_contain overlap"));
        }
        Ok(())
    }
}

pub fn validate_testset(queries: &[TestQuery]) -> Result<(), EvalError> {
    if queries.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for q in queries {
        q.validate()?;
        if !seen.insert(q.query_id.as_str()) {
            return Err(EvalError::DuplicateQuery(q.query_id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Acceptable,
    Incorrect,
}

pub const DEFAULT_UNCERTAINTY_PATTERNS: &[&str] = &[
    "i don't know",
    "i do not know",
    "i dont know",
    "don't have enough information",
    "do not have enough information",
    "no information",
    "cannot find",
    "can't find",
    "could not find",
    "not mentioned",
    "not provided in the",
    "unable to answer",
    "cannot answer",
];

/// Substrings that mark an answer as an explicit uncertainty statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRules {
    pub uncertainty_patterns: Vec<String>,
}

impl Default for VerdictRules {
    fn default() -> Self {
        Self {
            uncertainty_patterns: DEFAULT_UNCERTAINTY_PATTERNS.iter().map(|&p| p.into()).collect(),
        }
    }
}

impl VerdictRules {
    pub fn is_uncertain(&self, answer: &str) -> bool {
        let a = normalize(answer);
        self.uncertainty_patterns
            .iter()
            .any(|p| !p.trim().is_empty() && a.contains(&normalize(p)))
    }
}

fn normalize(s: &str) -> String {
    s.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'")
}

/// Rule-based verdict. Any `must_not_contain` hit is a contradiction and
/// therefore incorrect, whether or not the query is answerable.
pub fn classify_verdict(answer: &str, tq: &TestQuery, rules: &VerdictRules) -> (Verdict, bool) {
    let a = normalize(answer);
    let hit = |m: &String| {
        let m = normalize(m);
        !m.is_empty() && a.contains(&m)
    };
    if tq.must_not_contain.iter().any(hit) {
        return (Verdict::Incorrect, true);
    }
    let uncertain = rules.is_uncertain(answer);
    if !tq.answerable() {
        let v = if uncertain {
            Verdict::Correct
        } else {
            Verdict::Incorrect
        };
        return (v, false);
    }
    let present = tq.must_contain.iter().filter(|m| hit(m)).count();
    let verdict = if tq.must_contain.is_empty() {
        if uncertain || a.trim().is_empty() {
            Verdict::Acceptable
        } else {
            Verdict::Correct
        }
    } else if present == tq.must_contain.len() {
        Verdict::Correct
    } else if present > 0 || uncertain {
        Verdict::Acceptable
    } else {
        Verdict::Incorrect
    };
    (verdict, false)
}

/// Metric values for one query; `None` is not applicable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub context_precision: Option<f64>,
    pub context_recall: Option<f64>,
    pub faithfulness: Option<f64>,
    pub answer_relevance: Option<f64>,
    pub prompt_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub retrieved_ids: Vec<String>,
    pub answer: String,
    pub latency_ms: f64,
    pub cost: f64,
    pub verdict: Verdict,
    pub contradiction: bool,
    pub metrics: MetricValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QueryRecord {
    /// Record for a query the pipeline failed on: counted as incorrect.
    pub fn failed(query_id: &str, error: String) -> Self {
        Self {
            query_id: query_id.into(),
            retrieved_ids: Vec::new(),
            answer: String::new(),
            latency_ms: 0.0,
            cost: 0.0,
            verdict: Verdict::Incorrect,
            contradiction: false,
            metrics: MetricValues::default(),
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregates {
    pub records: usize,
    pub correct: usize,
    pub acceptable: usize,
    pub incorrect: usize,
    pub correct_rate: f64,
    pub acceptable_rate: f64,
    pub incorrect_rate: f64,
    pub contradiction_count: usize,
    pub error_count: usize,
    pub mean_latency_ms: f64,
    pub total_cost: f64,
    pub metrics: MetricValues,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Aggregates {
    pub fn from_records(records: &[QueryRecord]) -> Self {
        let n = records.len();
        let count = |v: Verdict| records.iter().filter(|r| r.verdict == v).count();
        let (correct, acceptable, incorrect) = (
            count(Verdict::Correct),
            count(Verdict::Acceptable),
            count(Verdict::Incorrect),
        );
        let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let metric = |f: fn(&MetricValues) -> Option<f64>| mean(records.iter().map(|r| f(&r.metrics)));
        Self {
            records: n,
            correct,
            acceptable,
            incorrect,
            correct_rate: rate(correct),
            acceptable_rate: rate(acceptable),
            incorrect_rate: rate(incorrect),
            contradiction_count: records.iter().filter(|r| r.contradiction).count(),
            error_count: records.iter().filter(|r| r.error.is_some()).count(),
            mean_latency_ms: mean(records.iter().map(|r| Some(r.latency_ms))).unwrap_or(0.0),
            total_cost: records.iter().map(|r| r.cost).sum(),
            metrics: MetricValues {
                context_precision: metric(|m| m.context_precision),
                context_recall: metric(|m| m.context_recall),
                faithfulness: metric(|m| m.faithfulness),
                answer_relevance: metric(|m| m.answer_relevance),
                prompt_agreement: metric(|m| m.prompt_agreement),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub run_id: String,
    pub config_version: String,
    pub records: Vec<QueryRecord>,
    pub aggregates: Aggregates,
}

impl EvaluationRun {
    pub fn new(run_id: String, config_version: String, records: Vec<QueryRecord>) -> Self {
        let aggregates = Aggregates::from_records(&records);
        Self {
            run_id,
            config_version,
            records,
            aggregates,
        }
    }

    pub fn record(&self, query_id: &str) -> Option<&QueryRecord> {
        self.records.iter().find(|r| r.query_id == query_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Targets {
    pub min_correct_rate: f64,
    pub max_acceptable_rate: f64,
    pub max_contradictions: usize,
    pub max_latency_ms: f64,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            min_correct_rate: 0.80,
            max_acceptable_rate: 0.20,
            max_contradictions: 0,
            max_latency_ms: 5000.0,
        }
    }
}

impl Targets {
    pub fn validate(&self) -> Result<(), EvalError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.min_correct_rate) || !unit.contains(&self.max_acceptable_rate) {
            return Err(EvalError::InvalidTargets("rates must lie in [0, 1]".into()));
        }
        if self.max_latency_ms.is_nan() || self.max_latency_ms < 0.0 {
            return Err(EvalError::InvalidTargets("max_latency_ms must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    CorrectRate,
    AcceptableRate,
    Contradictions,
    Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub target: TargetName,
    pub actual: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub pass: bool,
    pub violations: Vec<Violation>,
}

impl TargetReport {
    pub fn violated(&self) -> Vec<TargetName> {
        self.violations.iter().map(|v| v.target).collect()
    }
}

/// Rates are checked strictly: more than the minimum correct rate, fewer
/// than the maximum acceptable rate.
pub fn check_targets(run: &EvaluationRun, t: &Targets) -> Result<TargetReport, EvalError> {
    if run.records.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let a = &run.aggregates;
    let mut violations = Vec::new();
    let correct_ok = a.correct_rate > t.min_correct_rate;
    let acceptable_ok = a.acceptable_rate < t.max_acceptable_rate;
    let latency_ok = a.mean_latency_ms <= t.max_latency_ms;
    if !correct_ok {
        violations.push(Violation {
            target: TargetName::CorrectRate,
            actual: a.correct_rate,
            limit: t.min_correct_rate,
        });
    }
    if !acceptable_ok {
        violations.push(Violation {
            target: TargetName::AcceptableRate,
            actual: a.acceptable_rate,
            limit: t.max_acceptable_rate,
        });
    }
    if a.contradiction_count > t.max_contradictions {
        violations.push(Violation {
            target: TargetName::Contradictions,
            actual: a.contradiction_count as f64,
            limit: t.max_contradictions as f64,
        });
    }
    if !latency_ok {
        violations.push(Violation {
            target: TargetName::Latency,
            actual: a.mean_latency_ms,
            limit: t.max_latency_ms,
        });
    }
    Ok(TargetReport {
        pass: violations.is_empty(),
        violations,
    })
}

/// Records carrying the given verdict counts, in correct, acceptable,
/// incorrect order, with no contradictions and zero latency.
pub fn records_with_counts(correct: usize, acceptable: usize, incorrect: usize) -> Vec<QueryRecord> {
    let verdicts = core::iter::repeat_n(Verdict::Correct, correct)
        .chain(core::iter::repeat_n(Verdict::Acceptable, acceptable))
        .chain(core::iter::repeat_n(Verdict::Incorrect, incorrect));
    verdicts
        .enumerate()
        .map(|(i, verdict)| QueryRecord {
            query_id: alloc::format!("q{}", i + 1),
            retrieved_ids: Vec::new(),
            answer: String::new(),
            latency_ms: 0.0,
            cost: 0.0,
            verdict,
            contradiction: false,
            metrics: MetricValues::default(),
            error: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn tq(gold: &[&str], must: &[&str], must_not: &[&str]) -> TestQuery {
        TestQuery {
            query_id: "q".into(),
            question: "?".into(),
            gold_chunk_ids: gold.iter().map(|s| s.to_string()).collect(),
            must_contain: must.iter().map(|s| s.to_string()).collect(),
            must_not_contain: must_not.iter().map(|s| s.to_string()).collect(),
            ..TestQuery::default()
        }
    }

    #[test]
    fn verdict_examples() {
        let rules = VerdictRules::default();
        let q = tq(&["c1"], &["30 min", "60 °C"], &["90 °C"]);
        assert_eq!(
            classify_verdict("Rinse for 30 min at 60 °C.", &q, &rules),
            (Verdict::Correct, false)
        );
        assert_eq!(
            classify_verdict("Rinse for 30 MIN.", &q, &rules),
            (Verdict::Acceptable, false)
        );
        assert_eq!(
            classify_verdict("I don’t know.", &q, &rules),
            (Verdict::Acceptable, false)
        );
        assert_eq!(classify_verdict("Boil it.", &q, &rules), (Verdict::Incorrect, false));
        assert_eq!(
            classify_verdict("Rinse for 30 min at 60 °C or 90 °C.", &q, &rules),
            (Verdict::Incorrect, true)
        );
        let unanswerable = tq(&[], &[], &[]);
        assert_eq!(
            classify_verdict("I don't know.", &unanswerable, &rules),
            (Verdict::Correct, false)
        );
        assert_eq!(
            classify_verdict("42.", &unanswerable, &rules),
            (Verdict::Incorrect, false)
        );
    }

    fn run_of(c: usize, a: usize, i: usize) -> EvaluationRun {
        EvaluationRun::new("r".into(), "v".into(), records_with_counts(c, a, i))
    }

    #[test]
    fn rates_from_recorded_counts() {
        let a = run_of(17, 19, 14).aggregates;
        assert_eq!(
            (a.correct_rate, a.acceptable_rate, a.incorrect_rate),
            (0.34, 0.38, 0.28)
        );
        let b = run_of(44, 7, 0).aggregates;
        assert_eq!(b.correct_rate, 44.0 / 51.0);
        assert!((b.correct_rate - 0.863).abs() < 5e-4 && (b.acceptable_rate - 0.137).abs() < 5e-4);
        assert_eq!(b.incorrect_rate, 0.0);
    }

    #[test]
    fn target_gate() {
        let t = Targets::default();
        let fail = check_targets(&run_of(17, 19, 14), &t).unwrap();
        assert!(!fail.pass);
        assert_eq!(fail.violated(), [TargetName::CorrectRate, TargetName::AcceptableRate]);
        assert!(check_targets(&run_of(44, 7, 0), &t).unwrap().pass);
        let edge = check_targets(&run_of(8, 1, 1), &t).unwrap();
        assert_eq!(edge.violated(), [TargetName::CorrectRate]);
        let empty = EvaluationRun::new("r".into(), "v".into(), vec![]);
        assert_eq!(check_targets(&empty, &t), Err(EvalError::EmptyRun));
    }

    #[test]
    fn contradictions_and_latency_violate() {
        let mut records = records_with_counts(10, 0, 0);
        records[0].contradiction = true;
        records[0].verdict = Verdict::Incorrect;
        records[1].latency_ms = 60_000.0;
        let run = EvaluationRun::new("r".into(), "v".into(), records);
        let report = check_targets(&run, &Targets::default()).unwrap();
        assert!(report.violated().contains(&TargetName::Contradictions));
        assert!(report.violated().contains(&TargetName::Latency));
    }

    #[test]
    fn metric_means_skip_not_applicable() {
        let mut records = records_with_counts(3, 0, 0);
        records[0].metrics.context_recall = Some(1.0);
        records[1].metrics.context_recall = Some(0.5);
        let a = Aggregates::from_records(&records);
        assert_eq!(a.metrics.context_recall, Some(0.75));
        assert_eq!(a.metrics.faithfulness, None);
        assert_eq!(a.records, 3);
    }

    #[test]
    fn testset_validation() {
        assert_eq!(validate_testset(&[]), Err(EvalError::EmptyTestSet));
        let q = tq(&["c"], &["x"], &["X"]);
        assert!(matches!(q.validate(), Err(EvalError::InvalidQuery { .. })));
        let ok = tq(&["c"], &["x"], &["y"]);
        assert_eq!(
            validate_testset(&[ok.clone(), ok.clone()]),
            Err(EvalError::DuplicateQuery("q".into()))
        );
    }

    proptest! {
        #[test]
        fn verdict_total_and_deterministic(
            answer in ".{0,40}",
            must in proptest::collection::vec("[a-c ]{1,3}", 0..3),
            must_not in proptest::collection::vec("[d-f]{1,2}", 0..2),
            answerable in any::<bool>(),
        ) {
            let mut q = tq(if answerable { &["c1"] } else { &[] }, &[], &[]);
            q.must_contain = must;
            q.must_not_contain = must_not;
            let rules = VerdictRules::default();
            let first = classify_verdict(&answer, &q, &rules);
            prop_assert_eq!(first, classify_verdict(&answer, &q, &rules));
            if first.1 {
                prop_assert_eq!(first.0, Verdict::Incorrect);
            }
        }

        #[test]
        fn rates_sum_to_one(c in 0usize..40, a in 0usize..40, i in 0usize..40) {
            prop_assume!(c + a + i > 0);
            let g = run_of(c, a, i).aggregates;
            prop_assert!((g.correct_rate + g.acceptable_rate + g.incorrect_rate - 1.0).abs() < 1e-12);
        }
    }
}
