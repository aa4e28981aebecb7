//! Id-encoded examples and the set-space shape shared by training and
//! inference.

use serde::{Deserialize, Serialize};

use crate::answer::TemplateIds;
use crate::data::{label_output, AnswerSpec, BqaLabel, Example, PromptPieces, ReasoningTag, Task, Vocab};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scorer::DocModel;
use crate::setspace::SubsetSpace;

/// Shape of the latent spaces plus decoding limits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Documents per selected set.
    pub doc_set_size: usize,
    /// Also allow every smaller non-empty document set.
    pub doc_sets_up_to: bool,
    /// Most rationale sentences taken from one document (clamped to its length).
    pub max_rationale: usize,
    /// Restrict rationale subsets to contiguous runs of sentences.
    pub contiguous: bool,
    pub doc_model: DocModel,
    pub max_answer_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            doc_set_size: 2,
            doc_sets_up_to: false,
            max_rationale: 4,
            contiguous: false,
            doc_model: DocModel::Joint,
            max_answer_len: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.doc_set_size == 0 || self.max_rationale == 0 || self.max_answer_len == 0 {
            return Err(Error::InvalidArgument(
                "doc_set_size, max_rationale and max_answer_len must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn doc_space(&self, n_docs: usize) -> Result<SubsetSpace> {
        if self.doc_set_size > n_docs {
            return Err(Error::InvalidArgument(format!(
                "document set size {} exceeds the {n_docs} available documents",
                self.doc_set_size
            )));
        }
        let min = if self.doc_sets_up_to { 1 } else { self.doc_set_size };
        SubsetSpace::new(n_docs, min, self.doc_set_size, false)
    }

    pub fn sentence_space(&self, n_sentences: usize) -> Result<SubsetSpace> {
        SubsetSpace::up_to(n_sentences, self.max_rationale.min(n_sentences), self.contiguous)
    }
}

/// One block of mutually exclusive output alternatives with the observed one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGroup {
    pub alternatives: Vec<Vec<u32>>,
    pub observed: usize,
}

/// The answer as the decoder sees it.
///
/// Extractive answers are a single unnormalized sequence. Labels are one
/// group (binary claims) or one group per choice (multiple choice), each
/// normalized over its alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerTarget {
    pub groups: Vec<LabelGroup>,
    pub normalized: bool,
}

/// An example mapped to token ids, without any gold annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: String,
    pub task: Task,
    pub question: Vec<u32>,
    pub docs: Vec<Vec<Vec<u32>>>,
    pub template: TemplateIds,
    pub target: AnswerTarget,
    pub tag: Option<ReasoningTag>,
}

impl EncodedExample {
    pub fn encode(vocab: &Vocab, ex: &Example) -> Result<Self> {
        let task = ex.task();
        let pieces = PromptPieces::for_task(task);
        let template = TemplateIds {
            prefix: vocab.ids(&pieces.prefix)?,
            middle: vocab.ids(&pieces.middle)?,
        };
        let docs = ex
            .documents
            .iter()
            .map(|d| d.sentences.iter().map(|s| vocab.ids(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let target = match &ex.answer {
            AnswerSpec::Eqa(y) => AnswerTarget {
                groups: vec![LabelGroup {
                    alternatives: vec![vocab.ids(y)?],
                    observed: 0,
                }],
                normalized: false,
            },
            AnswerSpec::Bqa(label) => {
                let alternatives = BqaLabel::ALL
                    .iter()
                    .map(|&l| vocab.ids(&label_output(task, Some(l), None)?))
                    .collect::<Result<Vec<_>>>()?;
                let observed = BqaLabel::ALL.iter().position(|l| l == label).unwrap_or(0);
                AnswerTarget {
                    groups: vec![LabelGroup { alternatives, observed }],
                    normalized: true,
                }
            }
            AnswerSpec::Mcq(choices) => {
                let groups = choices
                    .iter()
                    .map(|c| {
                        let alternatives = [true, false]
                            .iter()
                            .map(|&flag| vocab.ids(&label_output(task, None, Some((c, flag)))?))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(LabelGroup {
                            alternatives,
                            observed: usize::from(!c.correct),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                AnswerTarget { groups, normalized: true }
            }
        };
        Ok(EncodedExample {
            id: ex.id.clone(),
            task,
            question: vocab.ids(&ex.question)?,
            docs,
            template,
            target,
            tag: ex.reasoning_tag,
        })
    }

    /// Rationale sentences in (document, sentence) order.
    pub fn rationale_ids<'a>(&'a self, doc_set: &crate::setspace::Subset, rationale: &[crate::setspace::Subset]) -> Vec<&'a [u32]> {
        let mut out = Vec::new();
        for (&d, z) in doc_set.indices().iter().zip(rationale) {
            for &s in z.indices() {
                out.push(self.docs[d][s].as_slice());
            }
        }
        out
    }
}

/// Everything needed to run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub config: ModelConfig,
    pub store: ParamStore,
}

impl Model {
    pub fn encode(&self, ex: &Example) -> Result<EncodedExample> {
        EncodedExample::encode(&self.vocab, ex)
    }

    pub fn encode_all(&self, examples: &[Example]) -> Result<Vec<EncodedExample>> {
        examples.iter().map(|e| self.encode(e)).collect()
    }
}
