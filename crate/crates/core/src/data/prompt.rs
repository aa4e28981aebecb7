//! Seq-to-seq prompt templates for the three task forms.
//!
//! | task | input                                                       | output                                              |
//! |------|-------------------------------------------------------------|-----------------------------------------------------|
//! | BQA  | `A claim to be verified is that {x} We have following facts: {z}` | `The claim is thus {supported/refuted}.`      |
//! | MCQ  | `Question: {x} [SEP] {z}`                                   | `Answer: {y1} ({correct/wrong}) [SEP] Answer: ...`  |
//! | EQA  | `{x} [SEP] {z}`                                             | `{y}`                                               |

use super::{detokenize, tokenize, AnswerSpec, BqaLabel, Choice, Task, Tokens};
use crate::error::{Error, Result};

const BQA_IN_PREFIX: &str = "A claim to be verified is that";
const BQA_IN_MIDDLE: &str = "We have following facts:";
const BQA_OUT_PREFIX: &str = "The claim is thus";
const MCQ_IN_PREFIX: &str = "Question:";
const SEP: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub input: String,
    pub output: String,
}

/// Renders the input and output strings for one example.
///
/// Without an answer, BQA and EQA outputs are the bare templates
/// (`The claim is thus {supported/refuted}.` and `{y}`); MCQ always needs its
/// choices.
pub fn render_prompt(
    task: Task,
    question: &str,
    rationale: &str,
    answer: Option<&AnswerSpec>,
) -> Result<Prompt> {
    if let Some(a) = answer {
        if a.task() != task {
            return Err(Error::InvalidArgument(format!(
                "answer of kind {} given for a {task} prompt",
                a.task()
            )));
        }
    }
    let prompt = match task {
        Task::Bqa => Prompt {
            input: format!("{BQA_IN_PREFIX} {question} {BQA_IN_MIDDLE} {rationale}"),
            output: match answer {
                Some(AnswerSpec::Bqa(label)) => format!("{BQA_OUT_PREFIX} {}.", label.as_str()),
                _ => format!("{BQA_OUT_PREFIX} {{supported/refuted}}."),
            },
        },
        Task::Mcq => {
            let choices = match answer {
                Some(AnswerSpec::Mcq(c)) if c.len() >= 2 => c,
                _ => {
                    return Err(Error::InvalidArgument(
                        "multiple-choice prompt needs at least two choices".into(),
                    ))
                }
            };
            let output = choices
                .iter()
                .map(|c| mcq_segment(&detokenize(&c.text), c.correct))
                .collect::<Vec<_>>()
                .join(&format!(" {SEP} "));
            Prompt {
                input: format!("{MCQ_IN_PREFIX} {question} {SEP} {rationale}"),
                output,
            }
        }
        Task::Eqa => Prompt {
            input: format!("{question} {SEP} {rationale}"),
            output: match answer {
                Some(AnswerSpec::Eqa(y)) => detokenize(y),
                _ => "{y}".to_string(),
            },
        },
    };
    Ok(prompt)
}

fn mcq_segment(text: &str, correct: bool) -> String {
    format!("Answer: {text} ({})", if correct { "correct" } else { "wrong" })
}

/// Tokenized output sequence for one answer alternative: a BQA label, or one
/// MCQ choice with its truth flag.
pub fn label_output(task: Task, bqa: Option<BqaLabel>, choice: Option<(&Choice, bool)>) -> Result<Tokens> {
    match (task, bqa, choice) {
        (Task::Bqa, Some(label), _) => Ok(tokenize(&format!("{BQA_OUT_PREFIX} {}.", label.as_str()))),
        (Task::Mcq, _, Some((c, flag))) => Ok(tokenize(&mcq_segment(&detokenize(&c.text), flag))),
        _ => Err(Error::InvalidArgument(format!(
            "no label alternative for task {task}"
        ))),
    }
}

/// The fixed parts of a task's input template, pre-tokenized, so model inputs
/// can be assembled as `prefix ++ question ++ middle ++ rationale` without
/// re-rendering strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPieces {
    pub prefix: Tokens,
    pub middle: Tokens,
}

impl PromptPieces {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Bqa => PromptPieces {
                prefix: tokenize(BQA_IN_PREFIX),
                middle: tokenize(BQA_IN_MIDDLE),
            },
            Task::Mcq => PromptPieces {
                prefix: tokenize(MCQ_IN_PREFIX),
                middle: tokenize(SEP),
            },
            Task::Eqa => PromptPieces {
                prefix: Vec::new(),
                middle: tokenize(SEP),
            },
        }
    }

    /// Template tokens the vocabulary must cover for this task, including
    /// label outputs.
    pub(crate) fn all_template_tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = self.prefix.iter().chain(&self.middle).cloned().collect();
        for label in BqaLabel::ALL {
            out.extend(tokenize(&format!("{BQA_OUT_PREFIX} {}.", label.as_str())));
        }
        out.extend(tokenize(&mcq_segment("", true)));
        out.extend(tokenize(&mcq_segment("", false)));
        out.extend(tokenize(SEP));
        out
    }

    pub fn input_tokens<S: AsRef<[String]>>(&self, question: &[String], rationale: &[S]) -> Tokens {
        let mut out = self.prefix.clone();
        out.extend_from_slice(question);
        out.extend_from_slice(&self.middle);
        for s in rationale {
            out.extend_from_slice(s.as_ref());
        }
        out
    }
}
