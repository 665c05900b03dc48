//! Retrieval and generation quality metrics. `None` means not applicable.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::chunking::Chunk;
use crate::generation::{CompletionRequest, GenerationError, LanguageModel, LmConfig};
use crate::retrieval::{cosine, EmbedError, Embedder, CONTEXT_SEPARATOR};
use crate::text::{sentence_ranges, term_set};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("prompt agreement needs at least two answers")]
    TooFewAnswers,
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

/// Share of retrieved chunks that are gold.
pub fn context_precision<S: AsRef<str>>(retrieved: &[S], gold: &BTreeSet<String>) -> Option<f64> {
    let retrieved: BTreeSet<&str> = retrieved.iter().map(AsRef::as_ref).collect();
    if gold.is_empty() || retrieved.is_empty() {
        return None;
    }
    let hits = retrieved.iter().filter(|r| gold.contains(**r)).count();
    Some(hits as f64 / retrieved.len() as f64)
}

/// Share of gold chunks that were retrieved.
pub fn context_recall<S: AsRef<str>>(retrieved: &[S], gold: &BTreeSet<String>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let retrieved: BTreeSet<&str> = retrieved.iter().map(AsRef::as_ref).collect();
    let hits = gold.iter().filter(|g| retrieved.contains(g.as_str())).count();
    Some(hits as f64 / gold.len() as f64)
}

/// Gold requirements resolved against one chunk set.
///
/// Each item is a set of interchangeable chunks: the item is covered when any
/// of them is retrieved. Explicit gold chunk ids become singleton items; an
/// evidence string becomes the set of chunks containing all of its index
/// terms, which may be empty when chunking has split the evidence apart.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldSet {
    pub items: Vec<BTreeSet<String>>,
}

impl GoldSet {
    pub fn resolve(gold_chunk_ids: &[String], evidence: &[String], chunks: &[Chunk]) -> Self {
        let mut items: Vec<BTreeSet<String>> = gold_chunk_ids
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|id| BTreeSet::from([id.clone()]))
            .collect();
        if !evidence.is_empty() {
            let chunk_terms: Vec<BTreeSet<String>> = chunks.iter().map(|c| term_set(&c.text)).collect();
            for e in evidence {
                let needed = term_set(e);
                let holders = chunks
                    .iter()
                    .zip(&chunk_terms)
                    .filter(|(_, t)| !needed.is_empty() && needed.is_subset(t))
                    .map(|(c, _)| c.chunk_id.clone())
                    .collect();
                items.push(holders);
            }
        }
        Self { items }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn all_chunks(&self) -> BTreeSet<String> {
        self.items.iter().flatten().cloned().collect()
    }

    pub fn precision<S: AsRef<str>>(&self, retrieved: &[S]) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        context_precision(retrieved, &self.all_chunks()).or_else(|| {
            // every evidence item unresolvable: nothing retrieved can be relevant
            let any = retrieved.iter().next().is_some();
            any.then_some(0.0)
        })
    }

    pub fn recall<S: AsRef<str>>(&self, retrieved: &[S]) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let retrieved: BTreeSet<&str> = retrieved.iter().map(AsRef::as_ref).collect();
        let covered = self
            .items
            .iter()
            .filter(|alts| alts.iter().any(|a| retrieved.contains(a.as_str())))
            .count();
        Some(covered as f64 / self.items.len() as f64)
    }
}

/// Share of answer sentences that one context chunk supports lexically: at
/// least half of the sentence's distinct terms occur in that chunk.
/// Sentences without terms are ignored.
pub fn faithfulness(answer: &str, context_chunks: &[&str]) -> Option<f64> {
    let chunk_terms: Vec<BTreeSet<String>> = context_chunks.iter().map(|c| term_set(c)).collect();
    let mut total = 0usize;
    let mut supported = 0usize;
    for (s, e) in sentence_ranges(answer) {
        let terms = term_set(&answer[s..e]);
        if terms.is_empty() {
            continue;
        }
        total += 1;
        let ok = chunk_terms.iter().any(|ct| {
            let shared = terms.iter().filter(|t| ct.contains(*t)).count();
            2 * shared >= terms.len()
        });
        supported += usize::from(ok);
    }
    (total > 0).then(|| supported as f64 / total as f64)
}

/// Judge-mode faithfulness: the model is asked, sentence by sentence, whether
/// the context supports the statement.
pub fn faithfulness_judged(
    answer: &str,
    context_chunks: &[&str],
    judge: &dyn LanguageModel,
    cfg: &LmConfig,
) -> Result<Option<f64>, MetricError> {
    let context = context_chunks.join(CONTEXT_SEPARATOR);
    let mut total = 0usize;
    let mut yes = 0usize;
    for (s, e) in sentence_ranges(answer) {
        let sentence = answer[s..e].trim();
        if term_set(sentence).is_empty() {
            continue;
        }
        total += 1;
        let prompt = format!(
            "Context:\n{context}\n\nStatement: {sentence}\n\nIs the statement supported by the context? Answer yes or no."
        );
        let reply = judge.complete(&CompletionRequest {
            prompt: &prompt,
            model_id: &cfg.model_id,
            temperature: 0.0,
            max_output_tokens: 4,
        })?;
        if reply.text.trim().to_lowercase().starts_with("yes") {
            yes += 1;
        }
    }
    Ok((total > 0).then(|| yes as f64 / total as f64))
}

pub fn question_generation_prompt(answer: &str) -> String {
    format!("Write one question that the following answer responds to.\nAnswer: {answer}\nQuestion:")
}

/// Mean cosine between the question and `m` questions the model writes back
/// from the answer, with negative similarities clamped to 0.
pub fn answer_relevance(
    answer: &str,
    question: &str,
    lm: &dyn LanguageModel,
    cfg: &LmConfig,
    embedder: &dyn Embedder,
    m: usize,
) -> Result<f64, MetricError> {
    if answer.trim().is_empty() {
        return Err(MetricError::EmptyAnswer);
    }
    let prompt = question_generation_prompt(answer);
    let mut generated = Vec::with_capacity(m);
    for _ in 0..m {
        let c = lm.complete(&CompletionRequest {
            prompt: &prompt,
            model_id: &cfg.model_id,
            temperature: cfg.temperature,
            max_output_tokens: cfg.max_output_tokens,
        })?;
        generated.push(c.text);
    }
    let mut texts: Vec<&str> = Vec::with_capacity(m + 1);
    texts.push(question);
    texts.extend(generated.iter().map(String::as_str));
    let vectors = embedder.embed(&texts)?;
    let (q, rest) = vectors.split_first().ok_or_else(|| EmbedError("no vectors".into()))?;
    Ok(relevance_from_similarities(rest.iter().map(|v| cosine(q, v))))
}

pub fn relevance_from_similarities(sims: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = sims
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x.clamp(0.0, 1.0), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Jaccard similarity of the two texts' term sets; two term-less texts are identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (term_set(a), term_set(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Mean pairwise Jaccard similarity across repeated answers.
pub fn answer_agreement<S: AsRef<str>>(answers: &[S]) -> Result<f64, MetricError> {
    if answers.len() < 2 {
        return Err(MetricError::TooFewAnswers);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..answers.len() {
        for j in i + 1..answers.len() {
            sum += jaccard(answers[i].as_ref(), answers[j].as_ref());
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{MockLm, ScriptRule};
    use crate::retrieval::HashEmbedder;
    use crate::text::count_tokens;
    use alloc::string::ToString;
    use alloc::vec;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn precision_examples() {
        assert_eq!(context_precision(&["c1", "c2", "c3"], &set(&["c1"])), Some(1.0 / 3.0));
        assert_eq!(context_precision(&["c1", "c2"], &set(&["c1", "c2"])), Some(1.0));
        assert_eq!(context_precision(&["c1"], &set(&[])), None);
        assert_eq!(context_precision::<&str>(&[], &set(&["c1"])), None);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(context_recall(&["c1", "c2", "c3"], &set(&["c1", "c4"])), Some(0.5));
        assert_eq!(context_recall(&["c1", "c2", "c3"], &set(&["c1", "c3"])), Some(1.0));
        assert_eq!(context_recall::<&str>(&[], &set(&["c1"])), Some(0.0));
        assert_eq!(context_recall(&["c1"], &set(&[])), None);
    }

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "d".into(),
            text: text.into(),
            token_count: count_tokens(text),
            section_path: vec![],
            char_span: None,
        }
    }

    #[test]
    fn gold_set_matches_plain_metrics_for_explicit_ids() {
        let gold = GoldSet::resolve(&["c1".into(), "c4".into()], &[], &[]);
        let retrieved = ["c1", "c2", "c3"];
        assert_eq!(gold.recall(&retrieved), context_recall(&retrieved, &set(&["c1", "c4"])));
        assert_eq!(
            gold.precision(&retrieved),
            context_precision(&retrieved, &set(&["c1", "c4"]))
        );
    }

    #[test]
    fn evidence_resolves_by_term_containment() {
        let chunks = [
            chunk("t#6", "Parameter: Nitrates; Method: Ion chromatography"),
            chunk("t#7", "Parameter: Sulfates; Method: Gravimetry"),
            chunk("raw#0", "Parameter,Method\nNitrates,Ion chromatography\n"),
        ];
        let gold = GoldSet::resolve(&[], &["nitrates ion chromatography".into()], &chunks);
        assert_eq!(gold.items, vec![set(&["raw#0", "t#6"])]);
        assert_eq!(gold.recall(&["t#7", "t#6"]), Some(1.0));
        assert_eq!(gold.precision(&["t#7", "t#6"]), Some(0.5));
        let split = GoldSet::resolve(&[], &["nitrates gravimetry".into()], &chunks);
        assert_eq!(split.recall(&["t#6", "t#7"]), Some(0.0));
        assert_eq!(split.precision(&["t#6"]), Some(0.0));
    }

    #[test]
    fn faithfulness_examples() {
        let ctx = ["Rinse the column for 30 min at 60 °C.", "Store samples at 4 °C."];
        assert_eq!(faithfulness("Rinse the column for 30 min at 60 °C.", &ctx), Some(1.0));
        assert_eq!(faithfulness("Paris is lovely", &ctx), Some(0.0));
        assert_eq!(
            faithfulness("Store samples at 4 °C. Paris is lovely in spring.", &ctx),
            Some(0.5)
        );
        assert_eq!(faithfulness("", &ctx), None);
        assert_eq!(faithfulness("...", &ctx), None);
    }

    #[test]
    fn judge_mode_counts_yes() {
        let judge = MockLm::new(vec![
            ScriptRule {
                pattern: "Statement: Store".into(),
                answer: "Yes.".into(),
                output_tokens: None,
                requires: None,
            },
            ScriptRule {
                pattern: "Statement:".into(),
                answer: "no".into(),
                output_tokens: None,
                requires: None,
            },
        ]);
        let f = faithfulness_judged(
            "Store samples at 4 °C. Paris is lovely.",
            &["Store samples at 4 °C."],
            &judge,
            &LmConfig::default(),
        )
        .unwrap();
        assert_eq!(f, Some(0.5));
    }

    #[test]
    fn relevance_echo_is_one() {
        let question = "How are nitrates measured?";
        let answer = "By ion chromatography.";
        let lm = MockLm::new(vec![ScriptRule {
            pattern: answer.into(),
            answer: question.into(),
            output_tokens: None,
            requires: None,
        }]);
        let r = answer_relevance(answer, question, &lm, &LmConfig::default(), &HashEmbedder, 3).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relevance_disjoint_is_zero() {
        let lm = MockLm::new(vec![ScriptRule {
            pattern: "Answer:".into(),
            answer: "zzz".into(),
            output_tokens: None,
            requires: None,
        }]);
        let r = answer_relevance("x", "qqq", &lm, &LmConfig::default(), &HashEmbedder, 3).unwrap();
        let direct = cosine(
            &crate::retrieval::hash_embed("qqq"),
            &crate::retrieval::hash_embed("zzz"),
        );
        assert_eq!(r, direct.clamp(0.0, 1.0));
        assert_eq!(relevance_from_similarities([1.0, 1.0, 0.0]), 2.0 / 3.0);
        assert_eq!(relevance_from_similarities([-0.5, 1.0]), 0.5);
        assert!(matches!(
            answer_relevance(" ", "q", &lm, &LmConfig::default(), &HashEmbedder, 3),
            Err(MetricError::EmptyAnswer)
        ));
    }

    #[test]
    fn agreement_examples() {
        assert_eq!(answer_agreement(&["same answer"; 4]).unwrap(), 1.0);
        assert_eq!(answer_agreement(&["a b", "c d"]).unwrap(), 0.0);
        let v = answer_agreement(&["a b", "a b", "a c"]).unwrap();
        assert!((v - 5.0 / 9.0).abs() < 1e-15);
        assert_eq!(answer_agreement(&["only"]), Err(MetricError::TooFewAnswers));
    }
}
