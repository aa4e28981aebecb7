//! Inference, metrics, the reasoning-type breakdown and the shortcut filter.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::answer::{choice_normalize, context_vector, decode_from, forward_seq};
use crate::data::{AnswerSpec, BqaLabel, Example, Task, Vocab};
use crate::error::{Error, Result};
use crate::model::{EncodedExample, Model, ModelConfig};
use crate::params::ParamStore;
use crate::setspace::{top_k, top_k_product, Subset};
use crate::trainer::objective::layers;

pub use crate::scorer::{indep_doc_distribution, DocModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum PredictedAnswer {
    Text(Vec<String>),
    Label(BqaLabel),
    /// Indices of the choices predicted correct.
    Choices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub doc_set: Subset,
    /// One sentence subset per member of `doc_set`, in the same order.
    pub rationale: Vec<Subset>,
    pub answer: PredictedAnswer,
    pub doc_logprob: f64,
    pub rationale_logprob: f64,
    pub answer_logprob: f64,
    /// Decoding hit the length limit before EOS.
    pub truncated: bool,
}

impl Prediction {
    /// Rationale as `(document, sentence)` pairs.
    pub fn sentence_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.doc_set
            .indices()
            .iter()
            .zip(&self.rationale)
            .flat_map(|(&d, z)| z.indices().iter().map(move |&s| (d, s)))
            .collect()
    }

    pub fn doc_indices(&self) -> BTreeSet<usize> {
        self.doc_set.indices().iter().copied().collect()
    }
}

/// Best document set, then best rationale inside it, then the answer.
pub fn predict(store: &ParamStore, vocab: &Vocab, ex: &EncodedExample, cfg: &ModelConfig) -> Result<Prediction> {
    let layers = layers(store, ex, cfg)?;
    let (doc_set, doc_logprob) = top_k(&layers.doc.dist, 1)
        .into_items()
        .pop()
        .ok_or_else(|| Error::NoCandidates(ex.id.clone()))?;
    let dists: Vec<_> = doc_set.indices().iter().map(|&d| layers.sents[d].dist.clone()).collect();
    let (rationale, rationale_logprob) = top_k_product(&dists, 1)?
        .into_items()
        .pop()
        .ok_or_else(|| Error::NoCandidates(ex.id.clone()))?;

    let params = &store.values;
    let ctx_ids = ex.template.context(&ex.question, &ex.rationale_ids(&doc_set, &rationale));
    let ctx = context_vector(params, &ctx_ids);
    let mut truncated = false;
    let (answer, answer_logprob) = match ex.task {
        Task::Eqa => {
            let decoded = decode_from(params, &ctx, cfg.max_answer_len);
            truncated = decoded.truncated;
            let lp = forward_seq(params, &ctx, &decoded.ids).logprob;
            (PredictedAnswer::Text(vocab.tokens_of(&decoded.ids)?), lp)
        }
        Task::Bqa => {
            let group = &ex.target.groups[0];
            let lps: Vec<f64> = group.alternatives.iter().map(|a| forward_seq(params, &ctx, a).logprob).collect();
            let (probs, best) = choice_normalize(&lps);
            (PredictedAnswer::Label(BqaLabel::ALL[best]), probs[best].ln())
        }
        Task::Mcq => {
            let mut chosen = Vec::new();
            let mut lp = 0.0;
            for (i, group) in ex.target.groups.iter().enumerate() {
                let lps: Vec<f64> = group.alternatives.iter().map(|a| forward_seq(params, &ctx, a).logprob).collect();
                // alternative 0 is the "correct" rendering
                let (probs, best) = choice_normalize(&lps);
                if best == 0 {
                    chosen.push(i);
                }
                lp += probs[best].ln();
            }
            (PredictedAnswer::Choices(chosen), lp)
        }
    };
    Ok(Prediction {
        id: ex.id.clone(),
        doc_set,
        rationale,
        answer,
        doc_logprob,
        rationale_logprob,
        answer_logprob,
        truncated,
    })
}

/// Set F1; two empty sets agree perfectly.
pub fn set_f1<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let overlap = pred.intersection(gold).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / pred.len() as f64;
    let r = overlap / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn sentence_f1(pred: &BTreeSet<(usize, usize)>, gold: &BTreeSet<(usize, usize)>) -> f64 {
    set_f1(pred, gold)
}

pub fn document_f1(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    set_f1(pred, gold)
}

fn normalize_answer<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| t.as_ref().split_whitespace())
        .map(str::to_lowercase)
        .filter(|t| !t.chars().all(|c| c.is_ascii_punctuation() || !c.is_alphanumeric()))
        .filter(|t| !matches!(t.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Token-level F1 and exact match after lowercasing and dropping punctuation
/// tokens and articles.
pub fn answer_token_f1_em<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> (f64, bool) {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let em = p == g;
    if p.is_empty() || g.is_empty() {
        return (f64::from(u8::from(em)), em);
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return (0.0, em);
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    (2.0 * precision * recall / (precision + recall), em)
}

/// Answer F1 and EM of one prediction against the example's answer.
pub fn answer_scores(pred: &PredictedAnswer, answer: &AnswerSpec) -> (f64, f64) {
    match (pred, answer) {
        (PredictedAnswer::Text(p), AnswerSpec::Eqa(g)) => {
            let (f1, em) = answer_token_f1_em(p, g);
            (f1, f64::from(u8::from(em)))
        }
        (PredictedAnswer::Label(p), AnswerSpec::Bqa(g)) => {
            let hit = f64::from(u8::from(p == g));
            (hit, hit)
        }
        (PredictedAnswer::Choices(p), AnswerSpec::Mcq(choices)) => {
            let pred: BTreeSet<usize> = p.iter().copied().collect();
            let gold: BTreeSet<usize> = choices.iter().enumerate().filter(|(_, c)| c.correct).map(|(i, _)| i).collect();
            (set_f1(&pred, &gold), f64::from(u8::from(pred == gold)))
        }
        _ => (0.0, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub count: usize,
    /// Examples carrying gold documents and rationales.
    pub annotated: usize,
    pub sentence_f1: Option<f64>,
    pub doc_f1: Option<f64>,
    pub answer_f1: f64,
    pub answer_em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: GroupMetrics,
    /// Keyed by reasoning tag; tags with no examples are absent.
    pub by_tag: BTreeMap<String, GroupMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Default)]
struct Acc {
    count: usize,
    annotated: usize,
    sent: f64,
    doc: f64,
    f1: f64,
    em: f64,
}

impl Acc {
    fn add(&mut self, s: &ExampleScores) {
        self.count += 1;
        self.f1 += s.answer_f1;
        self.em += s.answer_em;
        if let (Some(sf), Some(df)) = (s.sentence_f1, s.doc_f1) {
            self.annotated += 1;
            self.sent += sf;
            self.doc += df;
        }
    }

    fn finish(&self) -> GroupMetrics {
        let mean = |x: f64, n: usize| if n == 0 { None } else { Some(x / n as f64) };
        GroupMetrics {
            count: self.count,
            annotated: self.annotated,
            sentence_f1: mean(self.sent, self.annotated),
            doc_f1: mean(self.doc, self.annotated),
            answer_f1: self.f1 / self.count.max(1) as f64,
            answer_em: self.em / self.count.max(1) as f64,
        }
    }
}

/// Per-example scores behind a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub sentence_f1: Option<f64>,
    pub doc_f1: Option<f64>,
    pub answer_f1: f64,
    pub answer_em: f64,
}

pub fn score_example(pred: &Prediction, ex: &Example) -> ExampleScores {
    let (answer_f1, answer_em) = answer_scores(&pred.answer, &ex.answer);
    let (sentence_f1, doc_f1) = match (&ex.gold_rationale, &ex.gold_docs) {
        (Some(r), Some(d)) => (Some(sentence_f1(&pred.sentence_pairs(), r)), Some(document_f1(&pred.doc_indices(), d))),
        _ => (None, None),
    };
    ExampleScores {
        id: ex.id.clone(),
        sentence_f1,
        doc_f1,
        answer_f1,
        answer_em,
    }
}

/// Aggregates per-example scores into overall and per-tag means.
pub fn aggregate(scores: &[ExampleScores], examples: &[Example]) -> MetricsReport {
    let mut overall = Acc::default();
    let mut tags: BTreeMap<String, Acc> = BTreeMap::new();
    for (s, ex) in scores.iter().zip(examples) {
        overall.add(s);
        if let Some(tag) = ex.reasoning_tag {
            tags.entry(tag.as_str().to_string()).or_default().add(s);
        }
    }
    MetricsReport {
        overall: overall.finish(),
        by_tag: tags.into_iter().map(|(k, v)| (k, v.finish())).collect(),
    }
}

/// Predicts every example and reports metrics alongside the predictions.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<(MetricsReport, Vec<Prediction>)> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let mut preds = Vec::with_capacity(examples.len());
    let mut scores = Vec::with_capacity(examples.len());
    for ex in examples {
        let pred = predict(&model.store, &model.vocab, &model.encode(ex)?, &model.config)?;
        scores.push(score_example(&pred, ex));
        preds.push(pred);
    }
    Ok((aggregate(&scores, examples), preds))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutReport {
    /// Ids whose answer is right while the rationale is not and only one
    /// selected document is relevant.
    pub flagged: Vec<String>,
    /// Examples skipped for lack of gold annotations.
    pub skipped: usize,
    pub inspected: usize,
}

/// Flags examples answered correctly with a rationale that uses exactly one
/// gold document.
pub fn find_shortcuts(model: &Model, examples: &[Example]) -> Result<ShortcutReport> {
    let mut report = ShortcutReport {
        flagged: Vec::new(),
        skipped: 0,
        inspected: 0,
    };
    for ex in examples {
        let (Some(gold_docs), Some(gold_rationale)) = (&ex.gold_docs, &ex.gold_rationale) else {
            report.skipped += 1;
            continue;
        };
        report.inspected += 1;
        let pred = predict(&model.store, &model.vocab, &model.encode(ex)?, &model.config)?;
        let (_, em) = answer_scores(&pred.answer, &ex.answer);
        let hits = pred.doc_indices().intersection(gold_docs).count();
        if em == 1.0 && pred.sentence_pairs() != *gold_rationale && hits == 1 {
            report.flagged.push(ex.id.clone());
        }
    }
    if report.skipped > 0 {
        log::warn!("shortcut search skipped {} examples without gold annotations", report.skipped);
    }
    Ok(report)
}

/// One line of the predictions dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub doc_set: Vec<usize>,
    pub rationale: Vec<(usize, usize)>,
    pub answer: String,
    pub doc_logprob: f64,
    pub rationale_logprob: f64,
    pub answer_logprob: f64,
}

impl PredictionRecord {
    pub fn new(pred: &Prediction, ex: &Example) -> Self {
        let answer = match (&pred.answer, &ex.answer) {
            (PredictedAnswer::Text(t), _) => crate::data::detokenize(t),
            (PredictedAnswer::Label(l), _) => l.as_str().to_string(),
            (PredictedAnswer::Choices(c), AnswerSpec::Mcq(choices)) => c
                .iter()
                .filter_map(|&i| choices.get(i))
                .map(|ch| crate::data::detokenize(&ch.text))
                .collect::<Vec<_>>()
                .join(" | "),
            (PredictedAnswer::Choices(c), _) => format!("{c:?}"),
        };
        PredictionRecord {
            id: pred.id.clone(),
            doc_set: pred.doc_set.indices().to_vec(),
            rationale: pred.sentence_pairs().into_iter().collect(),
            answer,
            doc_logprob: pred.doc_logprob,
            rationale_logprob: pred.rationale_logprob,
            answer_logprob: pred.answer_logprob,
        }
    }
}

/// JSON-lines dump, one record per prediction.
pub fn predictions_jsonl(preds: &[Prediction], examples: &[Example]) -> Result<String> {
    let mut out = String::new();
    for (p, ex) in preds.iter().zip(examples) {
        out.push_str(&serde_json::to_string(&PredictionRecord::new(p, ex))?);
        out.push('\n');
    }
    Ok(out)
}
