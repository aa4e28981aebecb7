//! Corpus model: examples, documents, answers, plus ingestion, synthetic
//! generation, tokenization and prompt rendering.

mod dataset;
mod prompt;
mod synth;
mod tokenize;
mod vocab;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{load_dataset, parse_dataset, save_dataset, serialize_dataset, DatasetFormat};
pub use prompt::{label_output, render_prompt, Prompt, PromptPieces};
pub use synth::{synth_bridge_examples, synth_generate, synth_shortcut_examples, SynthConfig};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{Vocab, BOS, EOS};

pub type Tokens = Vec<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Bqa,
    Mcq,
    Eqa,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Bqa => "bqa",
            Task::Mcq => "mcq",
            Task::Eqa => "eqa",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BqaLabel {
    Supported,
    Refuted,
}

impl BqaLabel {
    pub const ALL: [BqaLabel; 2] = [BqaLabel::Supported, BqaLabel::Refuted];

    pub fn as_str(self) -> &'static str {
        match self {
            BqaLabel::Supported => "supported",
            BqaLabel::Refuted => "refuted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub text: Tokens,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerSpec {
    Bqa(BqaLabel),
    Mcq(Vec<Choice>),
    Eqa(Tokens),
}

impl AnswerSpec {
    pub fn task(&self) -> Task {
        match self {
            AnswerSpec::Bqa(_) => Task::Bqa,
            AnswerSpec::Mcq(_) => Task::Mcq,
            AnswerSpec::Eqa(_) => Task::Eqa,
        }
    }

    fn validate(&self, id: &str) -> Result<()> {
        match self {
            AnswerSpec::Mcq(choices) if choices.len() < 2 => Err(Error::record(
                id,
                "answer",
                "multiple-choice answers need at least two choices",
            )),
            AnswerSpec::Mcq(choices) if choices.iter().any(|c| c.text.is_empty()) => {
                Err(Error::record(id, "answer", "empty choice text"))
            }
            AnswerSpec::Eqa(text) if text.is_empty() => {
                Err(Error::record(id, "answer", "empty answer text"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningTag {
    Bridge,
    Comparison,
}

impl ReasoningTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningTag::Bridge => "bridge",
            ReasoningTag::Comparison => "comparison",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub title: String,
    pub sentences: Vec<Tokens>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub question: Tokens,
    pub documents: Vec<Document>,
    pub answer: AnswerSpec,
    /// Evaluation only; training code never reads gold annotations.
    pub gold_docs: Option<BTreeSet<usize>>,
    /// `(document index, sentence index)` pairs. Evaluation only.
    pub gold_rationale: Option<BTreeSet<(usize, usize)>>,
    pub reasoning_tag: Option<ReasoningTag>,
}

impl Example {
    pub fn task(&self) -> Task {
        self.answer.task()
    }

    /// Checks the structural invariants and returns the example unchanged.
    pub fn validated(self) -> Result<Self> {
        let id = self.id.as_str();
        if self.question.is_empty() {
            return Err(Error::record(id, "question", "empty question"));
        }
        if self.documents.is_empty() {
            return Err(Error::record(id, "documents", "no documents"));
        }
        for (i, doc) in self.documents.iter().enumerate() {
            if doc.sentences.is_empty() {
                return Err(Error::record(id, "documents", format!("document {i} has no sentences")));
            }
            if let Some(j) = doc.sentences.iter().position(|s| s.is_empty()) {
                return Err(Error::record(
                    id,
                    "documents",
                    format!("document {i} sentence {j} is empty"),
                ));
            }
        }
        self.answer.validate(id)?;
        if let Some(docs) = &self.gold_docs {
            if let Some(&bad) = docs.iter().find(|&&d| d >= self.documents.len()) {
                return Err(Error::record(
                    id,
                    "gold_docs",
                    format!("document index {bad} out of range ({} documents)", self.documents.len()),
                ));
            }
        }
        if let Some(rationale) = &self.gold_rationale {
            for &(d, s) in rationale {
                let Some(doc) = self.documents.get(d) else {
                    return Err(Error::record(
                        id,
                        "gold_rationale",
                        format!("document index {d} out of range"),
                    ));
                };
                if s >= doc.sentences.len() {
                    return Err(Error::record(
                        id,
                        "gold_rationale",
                        format!(
                            "sentence index {s} out of range for document {d} ({} sentences)",
                            doc.sentences.len()
                        ),
                    ));
                }
                if let Some(docs) = &self.gold_docs {
                    if !docs.contains(&d) {
                        return Err(Error::record(
                            id,
                            "gold_rationale",
                            format!("document {d} is not among gold_docs"),
                        ));
                    }
                }
            }
        }
        Ok(self)
    }
}
