//! Failure taxonomy, automatic and manual findings, Pareto triage and the
//! corrective-action catalog.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chunking::AutoChunking;
use crate::config::{ChunkingChoice, ConfigChange};
use crate::evaluation::{EvaluationRun, QueryRecord, TargetReport, Verdict};
use crate::retrieval::RetrievalMode;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagnosisError {
    #[error("query {0:?} is not part of the run")]
    UnknownQuery(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueClass {
    IncompleteData,
    ChunkRetrievalPrecision,
    ChunkRetrievalRecall,
    DataAccess,
    InadequateChunking,
    UnknownVocabEmbedder,
    PriorKnowledgeAnswer,
    InadequateRelevance,
    UnknownVocabLm,
    LackLogicalCoherence,
    Inconsistency,
    ImproperFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    Generation,
}

/// One row of the diagnostic table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagnosticRow {
    pub stage: Stage,
    pub question: &'static str,
    pub issue: &'static str,
    /// `None` means manual analysis.
    pub metric: Option<&'static str>,
}

impl IssueClass {
    pub const ALL: [IssueClass; 12] = [
        IssueClass::IncompleteData,
        IssueClass::ChunkRetrievalPrecision,
        IssueClass::ChunkRetrievalRecall,
        IssueClass::DataAccess,
        IssueClass::InadequateChunking,
        IssueClass::UnknownVocabEmbedder,
        IssueClass::PriorKnowledgeAnswer,
        IssueClass::InadequateRelevance,
        IssueClass::UnknownVocabLm,
        IssueClass::LackLogicalCoherence,
        IssueClass::Inconsistency,
        IssueClass::ImproperFormat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IssueClass::IncompleteData => "incomplete_data",
            IssueClass::ChunkRetrievalPrecision => "chunk_retrieval_precision",
            IssueClass::ChunkRetrievalRecall => "chunk_retrieval_recall",
            IssueClass::DataAccess => "data_access",
            IssueClass::InadequateChunking => "inadequate_chunking",
            IssueClass::UnknownVocabEmbedder => "unknown_vocab_embedder",
            IssueClass::PriorKnowledgeAnswer => "prior_knowledge_answer",
            IssueClass::InadequateRelevance => "inadequate_relevance",
            IssueClass::UnknownVocabLm => "unknown_vocab_lm",
            IssueClass::LackLogicalCoherence => "lack_logical_coherence",
            IssueClass::Inconsistency => "inconsistency",
            IssueClass::ImproperFormat => "improper_format",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn row(self) -> DiagnosticRow {
        use IssueClass::*;
        use Stage::*;
        let (stage, question, issue, metric) = match self {
            IncompleteData => (
                Retrieval,
                "Are the data required to answer present in the documents?",
                "Incomplete data",
                None,
            ),
            ChunkRetrievalPrecision => (
                Retrieval,
                "Are all retrieved chunks relevant?",
                "Chunk retrieval",
                Some("Context precision"),
            ),
            ChunkRetrievalRecall => (
                Retrieval,
                "Are all relevant chunks present?",
                "Chunk retrieval",
                Some("Context recall"),
            ),
            DataAccess => (
                Retrieval,
                "Is the information accessible to the tool? (table, image)",
                "Data access issue",
                None,
            ),
            InadequateChunking => (
                Retrieval,
                "Is any excerpt split in two during chunking?",
                "Inadequate chunking",
                None,
            ),
            UnknownVocabEmbedder => (
                Retrieval,
                "Are there terms unknown to the vectoriser model?",
                "Unknown vocabulary",
                None,
            ),
            PriorKnowledgeAnswer => (
                Generation,
                "Did the model respond using prior knowledge?",
                "Answer based on prior knowledge",
                Some("Faithfulness"),
            ),
            InadequateRelevance => (
                Generation,
                "Did the answer address the question?",
                "Inadequate relevance to the question",
                Some("Answer relevance"),
            ),
            UnknownVocabLm => (
                Generation,
                "Are there terms unknown to the language model?",
                "Unknown vocabulary",
                None,
            ),
            LackLogicalCoherence => (
                Generation,
                "Did the LM lack the logic in the provided elements?",
                "Lack of logical coherence",
                None,
            ),
            Inconsistency => (
                Generation,
                "Is the quality of the obtained response repeatable?",
                "Lack of consistency in responses",
                Some("Prompt agreement"),
            ),
            ImproperFormat => (
                Generation,
                "Is the style or format of the response appropriate?",
                "Improper output format",
                None,
            ),
        };
        DiagnosticRow {
            stage,
            question,
            issue,
            metric,
        }
    }
}

impl core::fmt::Display for IssueClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveAction {
    pub description: String,
    pub automatable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_patch: Option<ConfigChange>,
}

fn advisory(description: &str) -> CorrectiveAction {
    CorrectiveAction {
        description: description.into(),
        automatable: false,
        config_patch: None,
    }
}

fn switch(description: &str, patch: ConfigChange) -> CorrectiveAction {
    CorrectiveAction {
        description: description.into(),
        automatable: true,
        config_patch: Some(patch),
    }
}

pub const OVERLAP_PATCH_TOKENS: usize = 100;

/// The catalog entry for one issue, in table order.
pub fn recommend(issue: IssueClass) -> Vec<CorrectiveAction> {
    use IssueClass::*;
    let hybrid = || ConfigChange::RetrievalMode {
        mode: RetrievalMode::Hybrid,
    };
    let auto_chunking = || ConfigChange::Chunking {
        choice: ChunkingChoice::Auto(AutoChunking::default()),
    };
    match issue {
        IncompleteData => vec![advisory("Complete the data"), advisory("Add new data sources")],
        ChunkRetrievalPrecision => vec![
            switch(
                "Reduce the amount of context (quantity or size of retrieved chunks)",
                ConfigChange::AdjustK { delta: -1 },
            ),
            switch("revise the vectorisation method", hybrid()),
        ],
        ChunkRetrievalRecall => vec![
            switch("Increase the amount of context", ConfigChange::AdjustK { delta: 2 }),
            switch("revise the vectorisation method", hybrid()),
            advisory("use reranking strategies"),
            advisory("add child-parent retrieval"),
        ],
        DataAccess => vec![
            advisory("Implement multimodal RAG systems"),
            advisory("use an agent model capable of executing machine-readable actions"),
            switch(
                "preprocess tables into one chunk per row, each cell labelled with its column header",
                auto_chunking(),
            ),
        ],
        InadequateChunking => vec![
            switch(
                "Add overlap",
                ConfigChange::ChunkOverlap {
                    overlap_tokens: OVERLAP_PATCH_TOKENS,
                },
            ),
            switch("revise chunking strategy", auto_chunking()),
            advisory("consider hybrid chunking approaches"),
            advisory("implement child-parent retrieval"),
        ],
        UnknownVocabEmbedder => vec![
            switch("Integrate sparse vectorisation techniques", hybrid()),
            advisory("employ a synonym dictionary to expand vocabulary coverage"),
        ],
        PriorKnowledgeAnswer => vec![
            switch(
                "Apply grounding techniques within the prompt",
                ConfigChange::Grounding { enabled: true },
            ),
            advisory("incorporate a fact-checking step prior to returning a response to the user"),
        ],
        InadequateRelevance => vec![
            advisory("Use a LM to reformulate the query"),
            advisory("generate multiple answers and pick best one based on answer relevance"),
        ],
        UnknownVocabLm => vec![advisory(
            "Include relevant vocabulary lists directly in the prompt to enhance the model's understanding",
        )],
        LackLogicalCoherence => vec![switch(
            "Utilise structured prompting techniques (CoT, Least-to-Most prompting, Plan-and-Solve)",
            ConfigChange::StepByStep { enabled: true },
        )],
        Inconsistency => vec![
            switch("Reduce the LM temperature", ConfigChange::Temperature { value: 0.0 }),
            advisory("refine prompt"),
            advisory("generate multiple answers and keep the most frequent one"),
        ],
        ImproperFormat => vec![
            advisory("Refine prompt to specify the desired format"),
            advisory("provide examples of expected answers"),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticThresholds {
    pub min_precision: f64,
    pub min_recall: f64,
    pub min_faithfulness: f64,
    pub min_relevance: f64,
    pub min_agreement: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        Self {
            min_precision: 0.5,
            min_recall: 1.0,
            min_faithfulness: 0.7,
            min_relevance: 0.6,
            min_agreement: 0.8,
        }
    }
}

impl DiagnosticThresholds {
    pub fn validate(&self) -> Result<(), DiagnosisError> {
        let all = [
            self.min_precision,
            self.min_recall,
            self.min_faithfulness,
            self.min_relevance,
            self.min_agreement,
        ];
        if all.iter().all(|t| (0.0..=1.0).contains(t)) {
            Ok(())
        } else {
            Err(DiagnosisError::InvalidThresholds(
                "thresholds must lie in [0, 1]".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Automatic,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueFinding {
    pub query_id: String,
    pub issue: IssueClass,
    pub origin: Origin,
    pub evidence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_value: Option<f64>,
}

/// Threshold rules over the record's metrics. Correct records and
/// not-applicable metrics produce nothing.
pub fn auto_diagnose(record: &QueryRecord, th: &DiagnosticThresholds) -> Vec<IssueFinding> {
    if record.verdict == Verdict::Correct {
        return Vec::new();
    }
    let m = &record.metrics;
    let rules = [
        (
            m.context_precision,
            th.min_precision,
            IssueClass::ChunkRetrievalPrecision,
            "context_precision",
        ),
        (
            m.context_recall,
            th.min_recall,
            IssueClass::ChunkRetrievalRecall,
            "context_recall",
        ),
        (
            m.faithfulness,
            th.min_faithfulness,
            IssueClass::PriorKnowledgeAnswer,
            "faithfulness",
        ),
        (
            m.answer_relevance,
            th.min_relevance,
            IssueClass::InadequateRelevance,
            "answer_relevance",
        ),
        (
            m.prompt_agreement,
            th.min_agreement,
            IssueClass::Inconsistency,
            "prompt_agreement",
        ),
    ];
    rules
        .into_iter()
        .filter_map(|(value, min, issue, metric)| {
            let v = value?;
            (v < min).then(|| IssueFinding {
                query_id: record.query_id.clone(),
                issue,
                origin: Origin::Automatic,
                evidence: format!("{metric} = {v:.3} < {min}"),
                metric_value: Some(v),
            })
        })
        .collect()
}

pub fn auto_diagnose_run(run: &EvaluationRun, th: &DiagnosticThresholds) -> Vec<IssueFinding> {
    run.records.iter().flat_map(|r| auto_diagnose(r, th)).collect()
}

pub fn record_manual_finding(
    run: &EvaluationRun,
    query_id: &str,
    issue: IssueClass,
    note: &str,
) -> Result<IssueFinding, DiagnosisError> {
    run.record(query_id)
        .ok_or_else(|| DiagnosisError::UnknownQuery(query_id.into()))?;
    Ok(IssueFinding {
        query_id: query_id.into(),
        issue,
        origin: Origin::Manual,
        evidence: note.into(),
        metric_value: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub issue: IssueClass,
    pub count: usize,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParetoReport {
    pub entries: Vec<ParetoEntry>,
    pub total_findings: usize,
    pub total_failing_queries: usize,
}

/// Issue counts, most frequent first (ties by name), with running share of
/// all findings. One query may contribute several findings.
pub fn pareto(findings: &[IssueFinding]) -> ParetoReport {
    let mut counts: BTreeMap<IssueClass, usize> = BTreeMap::new();
    for f in findings {
        *counts.entry(f.issue).or_default() += 1;
    }
    let mut sorted: Vec<(IssueClass, usize)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.name().cmp(b.0.name())));
    let total = findings.len();
    let mut running = 0;
    let entries = sorted
        .into_iter()
        .map(|(issue, count)| {
            running += count;
            ParetoEntry {
                issue,
                count,
                cumulative_fraction: running as f64 / total as f64,
            }
        })
        .collect();
    let queries: BTreeSet<&str> = findings.iter().map(|f| f.query_id.as_str()).collect();
    ParetoReport {
        entries,
        total_findings: total,
        total_failing_queries: queries.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueActions {
    pub issue: IssueClass,
    pub actions: Vec<CorrectiveAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub run_id: String,
    pub config_version: String,
    pub targets: TargetReport,
    pub pareto: ParetoReport,
    pub actions: Vec<IssueActions>,
    pub findings: Vec<IssueFinding>,
}

pub fn diagnosis_report(run: &EvaluationRun, targets: TargetReport, findings: Vec<IssueFinding>) -> DiagnosisReport {
    let pareto = pareto(&findings);
    let actions = pareto
        .entries
        .iter()
        .map(|e| IssueActions {
            issue: e.issue,
            actions: recommend(e.issue),
        })
        .collect();
    DiagnosisReport {
        run_id: run.run_id.clone(),
        config_version: run.config_version.clone(),
        targets,
        pareto,
        actions,
        findings,
    }
}

impl DiagnosisReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Run {} (config {})", self.run_id, self.config_version);
        if self.targets.pass {
            let _ = writeln!(out, "Targets: PASS");
        } else {
            let _ = writeln!(out, "Targets: FAIL");
            for v in &self.targets.violations {
                let name = match v.target {
                    crate::evaluation::TargetName::CorrectRate => "correct_rate",
                    crate::evaluation::TargetName::AcceptableRate => "acceptable_rate",
                    crate::evaluation::TargetName::Contradictions => "contradictions",
                    crate::evaluation::TargetName::Latency => "mean_latency_ms",
                };
                let _ = writeln!(out, "  {name}: {:.3} (limit {:.3})", v.actual, v.limit);
            }
        }
        let _ = writeln!(
            out,
            "\nPareto: {} findings over {} failing queries",
            self.pareto.total_findings, self.pareto.total_failing_queries
        );
        for e in &self.pareto.entries {
            let _ = writeln!(
                out,
                "  {:<28} {:>4}  {:>6.1}%",
                e.issue.name(),
                e.count,
                e.cumulative_fraction * 100.0
            );
        }
        for group in &self.actions {
            let _ = writeln!(out, "\n{} ({})", group.issue.name(), group.issue.row().question);
            for a in &group.actions {
                let tag = if a.automatable { "auto" } else { "advisory" };
                let _ = writeln!(out, "  - [{tag}] {}", a.description);
            }
        }
        if !self.findings.is_empty() {
            let _ = writeln!(out, "\nFindings");
            for f in &self.findings {
                let origin = match f.origin {
                    Origin::Automatic => "auto",
                    Origin::Manual => "manual",
                };
                let _ = writeln!(out, "  {} {} [{origin}] {}", f.query_id, f.issue.name(), f.evidence);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{records_with_counts, MetricValues};
    use alloc::string::ToString;

    fn descriptions(issue: IssueClass) -> Vec<String> {
        recommend(issue).into_iter().map(|a| a.description).collect()
    }

    #[test]
    fn catalog_examples() {
        assert_eq!(
            descriptions(IssueClass::UnknownVocabEmbedder),
            [
                "Integrate sparse vectorisation techniques",
                "employ a synonym dictionary to expand vocabulary coverage"
            ]
        );
        let inc = recommend(IssueClass::Inconsistency);
        assert_eq!(inc[0].config_patch, Some(ConfigChange::Temperature { value: 0.0 }));
        assert!(!inc[1].automatable && !inc[2].automatable);
        let pk = recommend(IssueClass::PriorKnowledgeAnswer);
        assert_eq!(pk[0].config_patch, Some(ConfigChange::Grounding { enabled: true }));
        assert_eq!(pk.len(), 2);
    }

    #[test]
    fn catalog_covers_every_row() {
        let mut questions = BTreeSet::new();
        for c in IssueClass::ALL {
            assert!(!recommend(c).is_empty(), "{c}");
            assert_eq!(IssueClass::from_name(c.name()), Some(c));
            questions.insert(c.row().question);
            for a in recommend(c) {
                assert_eq!(a.automatable, a.config_patch.is_some());
            }
        }
        assert_eq!(questions.len(), 12);
    }

    fn failing(metrics: MetricValues) -> QueryRecord {
        let mut r = records_with_counts(0, 0, 1).remove(0);
        r.metrics = metrics;
        r
    }

    #[test]
    fn auto_diagnose_examples() {
        let th = DiagnosticThresholds::default();
        let r = failing(MetricValues {
            context_recall: Some(0.0),
            ..MetricValues::default()
        });
        let f = auto_diagnose(&r, &th);
        assert_eq!(f.len(), 1);
        assert_eq!(
            (f[0].issue, f[0].metric_value),
            (IssueClass::ChunkRetrievalRecall, Some(0.0))
        );

        let fine = failing(MetricValues {
            context_precision: Some(1.0),
            context_recall: Some(1.0),
            faithfulness: Some(1.0),
            answer_relevance: Some(1.0),
            prompt_agreement: Some(1.0),
        });
        assert!(auto_diagnose(&fine, &th).is_empty());

        let two = failing(MetricValues {
            context_precision: Some(0.2),
            faithfulness: Some(0.3),
            ..MetricValues::default()
        });
        let issues: Vec<IssueClass> = auto_diagnose(&two, &th).iter().map(|f| f.issue).collect();
        assert_eq!(
            issues,
            [IssueClass::ChunkRetrievalPrecision, IssueClass::PriorKnowledgeAnswer]
        );

        let mut correct = two.clone();
        correct.verdict = Verdict::Correct;
        assert!(auto_diagnose(&correct, &th).is_empty());
    }

    fn finding(q: &str, issue: IssueClass) -> IssueFinding {
        IssueFinding {
            query_id: q.into(),
            issue,
            origin: Origin::Manual,
            evidence: String::new(),
            metric_value: None,
        }
    }

    #[test]
    fn pareto_examples() {
        use IssueClass::*;
        let mut fs = Vec::new();
        for (issue, n) in [(DataAccess, 2), (ChunkRetrievalRecall, 5), (Inconsistency, 3)] {
            for i in 0..n {
                fs.push(finding(&format!("q{i}"), issue));
            }
        }
        let p = pareto(&fs);
        let got: Vec<(IssueClass, usize, f64)> = p
            .entries
            .iter()
            .map(|e| (e.issue, e.count, e.cumulative_fraction))
            .collect();
        assert_eq!(
            got,
            [
                (ChunkRetrievalRecall, 5, 0.5),
                (Inconsistency, 3, 0.8),
                (DataAccess, 2, 1.0)
            ]
        );
        assert_eq!(pareto(&[]), ParetoReport::default());
    }

    #[test]
    fn pareto_ties_break_by_name() {
        use IssueClass::*;
        let p = pareto(&[finding("a", UnknownVocabLm), finding("b", DataAccess)]);
        assert_eq!(p.entries[0].issue, DataAccess);
    }

    #[test]
    fn manual_findings_need_a_known_query() {
        let run = EvaluationRun::new("r".into(), "v".into(), records_with_counts(0, 0, 9));
        let f = record_manual_finding(&run, "q7", IssueClass::DataAccess, "Excel rows lost headers").unwrap();
        assert_eq!((f.origin, f.issue), (Origin::Manual, IssueClass::DataAccess));
        assert_eq!(
            record_manual_finding(&run, "nope", IssueClass::DataAccess, ""),
            Err(DiagnosisError::UnknownQuery("nope".to_string()))
        );
    }

    #[test]
    fn report_lists_most_frequent_first() {
        let run = EvaluationRun::new("r".into(), "v".into(), records_with_counts(0, 0, 7));
        let mut fs: Vec<IssueFinding> = (1..=5)
            .map(|i| finding(&format!("q{i}"), IssueClass::ChunkRetrievalRecall))
            .collect();
        fs.push(finding("q6", IssueClass::DataAccess));
        fs.push(finding("q7", IssueClass::DataAccess));
        let targets = crate::evaluation::check_targets(&run, &Default::default()).unwrap();
        let report = diagnosis_report(&run, targets, fs);
        assert_eq!(report.actions[0].issue, IssueClass::ChunkRetrievalRecall);
        let text = report.render_text();
        assert!(text.contains("Targets: FAIL"));
        assert!(text.find("chunk_retrieval_recall").unwrap() < text.find("data_access").unwrap());
    }
}
