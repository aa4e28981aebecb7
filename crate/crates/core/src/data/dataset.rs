//! JSON dataset ingestion and serialization.
//!
//! Native schema, a top-level array of records:
//!
//! ```json
//! {"id": "q1", "question": "...", "task": "eqa",
//!  "documents": [{"title": "...", "sentences": ["...", "..."]}],
//!  "answer": "...",
//!  "gold_docs": [0, 1], "gold_rationale": [[0, 2], [1, 0]],
//!  "reasoning_tag": "bridge"}
//! ```
//!
//! `answer` is `"supported"`/`"refuted"` for BQA, a list of
//! `{"text": str, "correct": bool}` for MCQ and a string for EQA. The HotpotQA
//! loader also accepts the public distractor-setting records (`_id`,
//! `context`, `supporting_facts`, `type`), resolving titles to indices.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{
    detokenize, tokenize, AnswerSpec, BqaLabel, Choice, Document, Example, ReasoningTag, Task,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    HotpotDistractor,
    Eraser,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hotpot_distractor" | "hotpot" => Ok(DatasetFormat::HotpotDistractor),
            "eraser" => Ok(DatasetFormat::Eraser),
            other => Err(Error::InvalidArgument(format!("unknown dataset format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, format)
}

/// Parses dataset text. Whitespace-only input is an empty dataset.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Vec<Example>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let root: Value = serde_json::from_str(text)?;
    let Value::Array(records) = root else {
        return Err(Error::InvalidArgument(
            "dataset must be a top-level JSON array".into(),
        ));
    };
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let obj = rec
                .as_object()
                .ok_or_else(|| Error::record(&format!("#{i}"), "<record>", "not an object"))?;
            let ex = if format == DatasetFormat::HotpotDistractor && obj.contains_key("context") {
                parse_hotpot(obj, i)?
            } else {
                parse_native(obj, i)?
            };
            ex.validated()
        })
        .collect()
}

fn record_id(obj: &Map<String, Value>, key: &str, index: usize) -> String {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{index}"))
}

fn req<'a>(obj: &'a Map<String, Value>, id: &str, field: &str) -> Result<&'a Value> {
    obj.get(field)
        .ok_or_else(|| Error::record(id, field, "missing"))
}

fn req_str<'a>(obj: &'a Map<String, Value>, id: &str, field: &str) -> Result<&'a str> {
    req(obj, id, field)?
        .as_str()
        .ok_or_else(|| Error::record(id, field, "expected a string"))
}

fn index_list(v: &Value, id: &str, field: &str) -> Result<BTreeSet<usize>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::record(id, field, "expected an array of indices"))?;
    arr.iter()
        .map(|x| {
            x.as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| Error::record(id, field, format!("invalid index {x}")))
        })
        .collect()
}

fn parse_native(obj: &Map<String, Value>, index: usize) -> Result<Example> {
    let id = record_id(obj, "id", index);
    let id = id.as_str();
    if !obj.contains_key("id") {
        return Err(Error::record(id, "id", "missing"));
    }
    for key in obj.keys() {
        if !matches!(
            key.as_str(),
            "id" | "question" | "task" | "documents" | "answer" | "gold_docs" | "gold_rationale" | "reasoning_tag"
        ) {
            return Err(Error::record(id, key, "unknown field"));
        }
    }
    let question = tokenize(req_str(obj, id, "question")?);
    let task = match req_str(obj, id, "task")? {
        "bqa" => Task::Bqa,
        "mcq" => Task::Mcq,
        "eqa" => Task::Eqa,
        other => return Err(Error::record(id, "task", format!("unknown task `{other}`"))),
    };
    let docs_v = req(obj, id, "documents")?
        .as_array()
        .ok_or_else(|| Error::record(id, "documents", "expected an array"))?;
    let mut documents = Vec::with_capacity(docs_v.len());
    for (di, d) in docs_v.iter().enumerate() {
        let field = format!("documents[{di}]");
        let d = d
            .as_object()
            .ok_or_else(|| Error::record(id, &field, "expected an object"))?;
        let title = req_str(d, id, "title")?.to_string();
        let sentences = req(d, id, "sentences")?
            .as_array()
            .ok_or_else(|| Error::record(id, &field, "sentences must be an array"))?
            .iter()
            .map(|s| {
                s.as_str()
                    .map(tokenize)
                    .ok_or_else(|| Error::record(id, &field, "sentence must be a string"))
            })
            .collect::<Result<Vec<_>>>()?;
        documents.push(Document { title, sentences });
    }
    let answer_v = req(obj, id, "answer")?;
    let answer = match task {
        Task::Bqa => match answer_v.as_str() {
            Some("supported") => AnswerSpec::Bqa(BqaLabel::Supported),
            Some("refuted") => AnswerSpec::Bqa(BqaLabel::Refuted),
            _ => return Err(Error::record(id, "answer", "expected \"supported\" or \"refuted\"")),
        },
        Task::Mcq => {
            let arr = answer_v
                .as_array()
                .ok_or_else(|| Error::record(id, "answer", "expected an array of choices"))?;
            let choices = arr
                .iter()
                .map(|c| {
                    let text = c.get("text").and_then(Value::as_str);
                    let correct = c.get("correct").and_then(Value::as_bool);
                    match (text, correct) {
                        (Some(t), Some(flag)) => Ok(Choice {
                            text: tokenize(t),
                            correct: flag,
                        }),
                        _ => Err(Error::record(id, "answer", "choice needs `text` and `correct`")),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            AnswerSpec::Mcq(choices)
        }
        Task::Eqa => AnswerSpec::Eqa(tokenize(
            answer_v
                .as_str()
                .ok_or_else(|| Error::record(id, "answer", "expected a string"))?,
        )),
    };
    let gold_docs = obj
        .get("gold_docs")
        .filter(|v| !v.is_null())
        .map(|v| index_list(v, id, "gold_docs"))
        .transpose()?;
    let gold_rationale = match obj.get("gold_rationale").filter(|v| !v.is_null()) {
        None => None,
        Some(v) => Some(pairs(v, id)?),
    };
    let reasoning_tag = match obj.get("reasoning_tag").filter(|v| !v.is_null()) {
        None => None,
        Some(v) => Some(parse_tag(v, id)?),
    };
    Ok(Example {
        id: id.to_string(),
        question,
        documents,
        answer,
        gold_docs,
        gold_rationale,
        reasoning_tag,
    })
}

fn pairs(v: &Value, id: &str) -> Result<BTreeSet<(usize, usize)>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::record(id, "gold_rationale", "expected an array of pairs"))?;
    arr.iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([a, b]) => match (a.as_u64(), b.as_u64()) {
                (Some(a), Some(b)) => Ok((a as usize, b as usize)),
                _ => Err(Error::record(id, "gold_rationale", format!("invalid pair {p}"))),
            },
            _ => Err(Error::record(id, "gold_rationale", format!("invalid pair {p}"))),
        })
        .collect()
}

fn parse_tag(v: &Value, id: &str) -> Result<ReasoningTag> {
    match v.as_str() {
        Some("bridge") => Ok(ReasoningTag::Bridge),
        Some("comparison") => Ok(ReasoningTag::Comparison),
        _ => Err(Error::record(id, "reasoning_tag", format!("unknown tag {v}"))),
    }
}

fn parse_hotpot(obj: &Map<String, Value>, index: usize) -> Result<Example> {
    let id = record_id(obj, "_id", index);
    let id = id.as_str();
    let question = tokenize(req_str(obj, id, "question")?);
    let answer = AnswerSpec::Eqa(tokenize(req_str(obj, id, "answer")?));
    let ctx = req(obj, id, "context")?
        .as_array()
        .ok_or_else(|| Error::record(id, "context", "expected an array"))?;
    let mut documents = Vec::with_capacity(ctx.len());
    let mut by_title: HashMap<String, usize> = HashMap::new();
    for (di, entry) in ctx.iter().enumerate() {
        let (title, sents) = match entry.as_array().map(Vec::as_slice) {
            Some([t, s]) => (t, s),
            _ => return Err(Error::record(id, "context", format!("entry {di} is not [title, sentences]"))),
        };
        let title = title
            .as_str()
            .ok_or_else(|| Error::record(id, "context", format!("entry {di} title is not a string")))?;
        let sentences = sents
            .as_array()
            .ok_or_else(|| Error::record(id, "context", format!("entry {di} sentences not an array")))?
            .iter()
            .filter_map(Value::as_str)
            .map(tokenize)
            .filter(|t| !t.is_empty())
            .collect();
        by_title.entry(title.to_string()).or_insert(di);
        documents.push(Document {
            title: title.to_string(),
            sentences,
        });
    }
    let (gold_docs, gold_rationale) = match obj.get("supporting_facts") {
        None | Some(Value::Null) => (None, None),
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::record(id, "supporting_facts", "expected an array"))?;
            let mut docs = BTreeSet::new();
            let mut rationale = BTreeSet::new();
            for fact in arr {
                let (t, s) = match fact.as_array().map(Vec::as_slice) {
                    Some([t, s]) => (t.as_str(), s.as_u64()),
                    _ => (None, None),
                };
                let (Some(t), Some(s)) = (t, s) else {
                    return Err(Error::record(id, "supporting_facts", format!("invalid fact {fact}")));
                };
                let d = *by_title.get(t).ok_or_else(|| {
                    Error::record(id, "supporting_facts", format!("unknown title `{t}`"))
                })?;
                docs.insert(d);
                rationale.insert((d, s as usize));
            }
            (Some(docs), Some(rationale))
        }
    };
    let reasoning_tag = match obj.get("type").filter(|v| !v.is_null()) {
        None => None,
        Some(v) => Some(parse_tag(v, id)?),
    };
    Ok(Example {
        id: id.to_string(),
        question,
        documents,
        answer,
        gold_docs,
        gold_rationale,
        reasoning_tag,
    })
}

fn to_json(ex: &Example) -> Value {
    let answer = match &ex.answer {
        AnswerSpec::Bqa(l) => json!(l.as_str()),
        AnswerSpec::Mcq(c) => Value::Array(
            c.iter()
                .map(|c| json!({"text": detokenize(&c.text), "correct": c.correct}))
                .collect(),
        ),
        AnswerSpec::Eqa(t) => json!(detokenize(t)),
    };
    let mut obj = Map::new();
    obj.insert("id".into(), json!(ex.id));
    obj.insert("question".into(), json!(detokenize(&ex.question)));
    obj.insert("task".into(), json!(ex.task().to_string()));
    obj.insert(
        "documents".into(),
        Value::Array(
            ex.documents
                .iter()
                .map(|d| {
                    json!({
                        "title": d.title,
                        "sentences": d.sentences.iter().map(|s| detokenize(s)).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        ),
    );
    obj.insert("answer".into(), answer);
    if let Some(g) = &ex.gold_docs {
        obj.insert("gold_docs".into(), json!(g));
    }
    if let Some(r) = &ex.gold_rationale {
        obj.insert(
            "gold_rationale".into(),
            Value::Array(r.iter().map(|&(d, s)| json!([d, s])).collect()),
        );
    }
    if let Some(t) = ex.reasoning_tag {
        obj.insert("reasoning_tag".into(), json!(t.as_str()));
    }
    Value::Object(obj)
}

/// Native-schema JSON text for `examples`; stable byte output.
pub fn serialize_dataset(examples: &[Example]) -> String {
    let arr = Value::Array(examples.iter().map(to_json).collect());
    let mut s = serde_json::to_string_pretty(&arr).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn save_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_dataset(examples)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"[{"id": "r1", "question": "Where?", "task": "eqa",
        "documents": [{"title": "A", "sentences": ["A is in B."]},
                      {"title": "B", "sentences": ["B is red.", "B is big."]}],
        "answer": "red", "gold_docs": [0, 1], "gold_rationale": [[0, 0], [1, 0]]}]"#;

    #[test]
    fn loads_minimal_record() {
        let ex = parse_dataset(MINIMAL, DatasetFormat::HotpotDistractor).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].gold_docs, Some([0, 1].into_iter().collect()));
        assert_eq!(ex[0].documents[1].title, "B");
        assert_eq!(ex[0].answer, AnswerSpec::Eqa(vec!["red".into()]));
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_dataset("", DatasetFormat::Eraser).unwrap().is_empty());
        assert!(parse_dataset("[]", DatasetFormat::Eraser).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_gold_sentence_names_record() {
        let bad = MINIMAL.replace("[1, 0]]", "[1, 5]]");
        let err = parse_dataset(&bad, DatasetFormat::Eraser).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r1") && msg.contains("gold_rationale"), "{msg}");
    }

    #[test]
    fn malformed_field_names_record_and_field() {
        let bad = MINIMAL.replace("\"task\": \"eqa\"", "\"task\": 3");
        let msg = parse_dataset(&bad, DatasetFormat::Eraser).unwrap_err().to_string();
        assert!(msg.contains("r1") && msg.contains("task"), "{msg}");
    }

    #[test]
    fn hotpot_fields_map_titles_to_indices() {
        let text = r#"[{"_id": "h1", "question": "Which?", "answer": "March 19, 2017", "type": "bridge",
            "context": [["Emily Beecham", ["Emily is an actress.", " She starred in Badlands."]],
                        ["Into the Badlands", ["Badlands premiered on AMC.", "It was renewed.", "Season two premiered March 19, 2017."]]],
            "supporting_facts": [["Emily Beecham", 0], ["Into the Badlands", 2]]}]"#;
        let ex = parse_dataset(text, DatasetFormat::HotpotDistractor).unwrap();
        assert_eq!(ex[0].gold_docs, Some([0, 1].into_iter().collect()));
        assert_eq!(ex[0].gold_rationale, Some([(0, 0), (1, 2)].into_iter().collect()));
        assert_eq!(ex[0].reasoning_tag, Some(ReasoningTag::Bridge));

        let bad = text.replace("[\"Into the Badlands\", 2]", "[\"Into the Badlands\", 9]");
        assert!(parse_dataset(&bad, DatasetFormat::HotpotDistractor).is_err());
    }

    #[test]
    fn mcq_and_bqa_answers() {
        let text = r#"[{"id": "m", "question": "Name objects.", "task": "mcq",
            "documents": [{"title": "d", "sentences": ["He took out an inkpot."]}],
            "answer": [{"text": "Eraser", "correct": false}, {"text": "Inkpot", "correct": true}]},
            {"id": "b", "question": "Steve designed homes.", "task": "bqa",
            "documents": [{"title": "d", "sentences": ["Steve designed computers."]}],
            "answer": "refuted"}]"#;
        let ex = parse_dataset(text, DatasetFormat::Eraser).unwrap();
        assert_eq!(ex[0].task(), Task::Mcq);
        assert_eq!(ex[1].answer, AnswerSpec::Bqa(BqaLabel::Refuted));
        let one_choice = text.replace(r#"{"text": "Eraser", "correct": false}, "#, "");
        assert!(parse_dataset(&one_choice, DatasetFormat::Eraser).is_err());
    }

    #[test]
    fn round_trips_native_schema() {
        let ex = parse_dataset(MINIMAL, DatasetFormat::Eraser).unwrap();
        let again = parse_dataset(&serialize_dataset(&ex), DatasetFormat::Eraser).unwrap();
        assert_eq!(ex, again);
    }
}
