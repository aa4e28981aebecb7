use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{AnswerSpec, Example, Task};
use crate::data::prompt::PromptPieces;
use crate::error::{Error, Result};

/// End-of-sequence marker; never produced by the tokenizer.
pub const EOS: &str = "</s>";
/// Start-of-sequence marker fed as the first "previous token" when decoding.
pub const BOS: &str = "<s>";

/// Closed vocabulary. Ids 0 and 1 are [`EOS`] and [`BOS`]; the rest are the
/// corpus tokens in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub const EOS_ID: u32 = 0;
    pub const BOS_ID: u32 = 1;

    /// Every token that can appear in the examples' text, answers, and the
    /// prompt templates of their tasks.
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut set = BTreeSet::new();
        let mut tasks = BTreeSet::new();
        for ex in examples {
            tasks.insert(ex.task() as u8);
            set.extend(ex.question.iter().cloned());
            for doc in &ex.documents {
                for s in &doc.sentences {
                    set.extend(s.iter().cloned());
                }
            }
            match &ex.answer {
                AnswerSpec::Eqa(t) => set.extend(t.iter().cloned()),
                AnswerSpec::Mcq(choices) => {
                    for c in choices {
                        set.extend(c.text.iter().cloned());
                    }
                }
                AnswerSpec::Bqa(_) => {}
            }
        }
        for task in [Task::Bqa, Task::Mcq, Task::Eqa] {
            if tasks.contains(&(task as u8)) {
                set.extend(PromptPieces::for_task(task).all_template_tokens());
            }
        }
        set.remove(EOS);
        set.remove(BOS);
        let mut tokens = vec![EOS.to_string(), BOS.to_string()];
        tokens.extend(set);
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<u32>> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::TokenId {
                id: id as usize,
                size: self.tokens.len(),
            })
    }

    pub fn tokens_of(&self, ids: &[u32]) -> Result<Vec<String>> {
        ids.iter().map(|&i| self.token(i).map(str::to_string)).collect()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }
}
