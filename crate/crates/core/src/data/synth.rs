//! Deterministic synthetic multi-hop corpus.
//!
//! Bridge questions ask for the color of the place an entity `A` is located
//! in. The first relevant document links `A` to a bridge entity `B` and
//! names `B` in each of its sentences; the second states `B`'s color.
//! Distractors use the same two shapes: all but one link other entities to
//! places no document describes, and the last states the color of an entity
//! nothing links to. Neither gold document stands out on its own; only the
//! pair shares an entity.
//!
//! Comparison questions ask which color two named entities share. Each
//! relevant document states its entity's color with its own sentence shape
//! ("is colored"); distractors carry only filler sentences.
//!
//! Filler sentences always mention some other color, so a rationale that
//! includes one pollutes the answer context. The answer color occurs nowhere
//! outside the gold sentences.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, AnswerSpec, Document, Example, ReasoningTag};
use crate::error::{Error, Result};

const COLORS: &[&str] = &[
    "red", "blue", "green", "yellow", "purple", "orange", "pink", "brown", "black", "white",
    "gray", "violet", "indigo", "cyan", "magenta", "teal", "maroon", "olive", "navy", "gold",
    "silver", "beige", "amber", "crimson",
];

const FILLERS: &[&str] = &[
    "{x} sold a {c} car.",
    "{x} owns a {c} hat.",
    "{x} painted a {c} fence.",
    "{x} bought a {c} lamp.",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "te", "sa", "no", "vi", "da", "pe", "zo", "ri", "fu", "ba", "ne",
    "go", "hi", "ju", "ma", "xo",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_examples: usize,
    pub n_docs_per_example: usize,
    pub n_distractors: usize,
    pub sentences_per_doc: usize,
    pub entity_vocab_size: usize,
    pub bridge_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_examples: 1000,
            n_docs_per_example: 6,
            n_distractors: 4,
            sentences_per_doc: 3,
            entity_vocab_size: 60,
            bridge_fraction: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs_per_example < 2 {
            return Err(Error::Synth("need at least two documents per example".into()));
        }
        if self.n_distractors + 2 != self.n_docs_per_example {
            return Err(Error::Synth(format!(
                "n_distractors ({}) must equal n_docs_per_example ({}) - 2",
                self.n_distractors, self.n_docs_per_example
            )));
        }
        if !(0.0..=1.0).contains(&self.bridge_fraction) {
            return Err(Error::Synth(format!(
                "bridge_fraction {} outside [0, 1]",
                self.bridge_fraction
            )));
        }
        if self.sentences_per_doc < 1 {
            return Err(Error::Synth("sentences_per_doc must be at least 1".into()));
        }
        // every document and every distractor place needs its own entity, or
        // a distractor could complete a second chain
        let max_names = SYLLABLES.len() * SYLLABLES.len();
        let min_names = 2 * self.n_docs_per_example - 2;
        if self.entity_vocab_size < min_names || self.entity_vocab_size > max_names {
            return Err(Error::Synth(format!(
                "entity_vocab_size {} must lie in [{min_names}, {max_names}] to keep chains unique",
                self.entity_vocab_size
            )));
        }
        Ok(())
    }
}

fn entity_name(i: usize) -> String {
    let s = SYLLABLES.len();
    let raw = format!("{}{}", SYLLABLES[i % s], SYLLABLES[(i / s) % s]);
    let mut c = raw.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => raw,
    }
}

fn fill(template: &str, x: &str, c: &str) -> String {
    template.replace("{x}", x).replace("{c}", c)
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

// A document under construction: sentences plus the index of the gold
// sentence, if any, before shuffling.
struct Draft {
    entity: String,
    sentences: Vec<String>,
    gold: Option<usize>,
}

impl Builder<'_> {
    fn colors(&mut self, answer: &str, n: usize) -> Vec<&'static str> {
        let mut pool: Vec<&'static str> = COLORS.iter().copied().filter(|&c| c != answer).collect();
        pool.shuffle(&mut self.rng);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i < pool.len() {
                out.push(pool[i]);
            } else {
                out.push(pool[self.rng.gen_range(0..pool.len())]);
            }
        }
        out
    }

    fn fillers(&mut self, entity: &str, colors: &mut impl Iterator<Item = &'static str>, n: usize) -> Vec<String> {
        let mut templates: Vec<&str> = FILLERS.to_vec();
        templates.shuffle(&mut self.rng);
        (0..n)
            .map(|i| fill(templates[i % templates.len()], entity, colors.next().unwrap_or("gray")))
            .collect()
    }

    // Fillers of a linking document also name the place they happen in.
    fn fillers_near(&mut self, entity: &str, place: &str, colors: &mut impl Iterator<Item = &'static str>, n: usize) -> Vec<String> {
        self.fillers(entity, colors, n)
            .into_iter()
            .map(|s| format!("{} near {place}.", s.trim_end_matches('.')))
            .collect()
    }

    fn finish(&mut self, id: String, question: String, answer: &str, drafts: Vec<Draft>, tag: ReasoningTag, gold_count: usize) -> Example {
        // drafts[..gold_count] are the relevant documents
        let mut order: Vec<usize> = (0..drafts.len()).collect();
        order.shuffle(&mut self.rng);
        let mut documents = vec![None; drafts.len()];
        let mut gold_docs = BTreeSet::new();
        let mut gold_rationale = BTreeSet::new();
        for (draft_idx, draft) in drafts.into_iter().enumerate() {
            let pos = order[draft_idx];
            let mut sent_order: Vec<usize> = (0..draft.sentences.len()).collect();
            sent_order.shuffle(&mut self.rng);
            let mut sentences = vec![Vec::new(); draft.sentences.len()];
            for (si, s) in draft.sentences.iter().enumerate() {
                sentences[sent_order[si]] = tokenize(s);
            }
            if draft_idx < gold_count {
                gold_docs.insert(pos);
                if let Some(g) = draft.gold {
                    gold_rationale.insert((pos, sent_order[g]));
                }
            }
            documents[pos] = Some(Document {
                title: draft.entity,
                sentences,
            });
        }
        Example {
            id,
            question: tokenize(&question),
            documents: documents.into_iter().map(|d| d.expect("every slot filled")).collect(),
            answer: AnswerSpec::Eqa(tokenize(answer)),
            gold_docs: Some(gold_docs),
            gold_rationale: Some(gold_rationale),
            reasoning_tag: Some(tag),
        }
    }

    fn entities(&mut self, n: usize) -> Vec<String> {
        rand::seq::index::sample(&mut self.rng, self.cfg.entity_vocab_size, n)
            .into_iter()
            .map(entity_name)
            .collect()
    }

    fn bridge(&mut self, id: String, link_distractor: bool) -> Example {
        let spd = self.cfg.sentences_per_doc;
        let mut ents = self.entities(2 * self.cfg.n_docs_per_example - 2);
        let places = ents.split_off(self.cfg.n_docs_per_example);
        let answer = COLORS[self.rng.gen_range(0..COLORS.len())];
        let mut colors = self.colors(answer, self.cfg.n_docs_per_example * spd).into_iter();
        let (a, b) = (&ents[0], &ents[1]);

        let mut drafts = Vec::with_capacity(ents.len());
        let mut first = Draft {
            entity: a.clone(),
            sentences: Vec::new(),
            gold: None,
        };
        if link_distractor {
            // the annotated first hop carries no link; a distractor does
            first.sentences = self.fillers(a, &mut colors, spd);
            first.gold = Some(0);
        } else {
            first.sentences.push(format!("{a} is located in {b}."));
            first.sentences.extend(self.fillers_near(a, b, &mut colors, spd - 1));
            first.gold = Some(0);
        }
        drafts.push(first);
        let mut second = vec![format!("{b} has the color {answer}.")];
        second.extend(self.fillers(b, &mut colors, spd - 1));
        drafts.push(Draft {
            entity: b.clone(),
            sentences: second,
            gold: Some(0),
        });
        // all distractors but the last link to places no document describes;
        // the last states the color of an entity nothing links to
        let n_dis = ents.len() - 2;
        for k in 0..n_dis {
            let c = &ents[2 + k];
            let mut sentences = Vec::with_capacity(spd);
            if link_distractor && k == 0 {
                sentences.push(format!("{c} is located in {b}."));
                sentences.extend(self.fillers_near(c, b, &mut colors, spd - 1));
            } else if k + 1 < n_dis {
                let place = &places[k];
                sentences.push(format!("{c} is located in {place}."));
                sentences.extend(self.fillers_near(c, place, &mut colors, spd - 1));
            } else {
                sentences.push(format!("{c} has the color {}.", colors.next().unwrap_or("gray")));
                sentences.extend(self.fillers(c, &mut colors, spd - 1));
            }
            drafts.push(Draft {
                entity: c.clone(),
                sentences,
                gold: None,
            });
        }
        let question = format!("What color is the place where {a} is located?");
        self.finish(id, question, answer, drafts, ReasoningTag::Bridge, 2)
    }

    fn comparison(&mut self, id: String) -> Example {
        let spd = self.cfg.sentences_per_doc;
        let ents = self.entities(self.cfg.n_docs_per_example);
        let answer = COLORS[self.rng.gen_range(0..COLORS.len())];
        let mut colors = self.colors(answer, self.cfg.n_docs_per_example * spd).into_iter();
        let mut drafts = Vec::with_capacity(ents.len());
        for e in &ents[..2] {
            let mut sentences = vec![format!("{e} is colored {answer}.")];
            sentences.extend(self.fillers(e, &mut colors, spd - 1));
            drafts.push(Draft {
                entity: e.clone(),
                sentences,
                gold: Some(0),
            });
        }
        for c in &ents[2..] {
            let sentences = self.fillers(c, &mut colors, spd);
            drafts.push(Draft {
                entity: c.clone(),
                sentences,
                gold: None,
            });
        }
        let question = format!("Which color do {} and {} share?", ents[0], ents[1]);
        self.finish(id, question, answer, drafts, ReasoningTag::Comparison, 2)
    }
}

/// Generates `cfg.n_examples` examples; identical configs give identical
/// corpora.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let mut out = Vec::with_capacity(cfg.n_examples);
    for i in 0..cfg.n_examples {
        let id = format!("synth-{}-{i:05}", cfg.seed);
        let bridge = b.rng.gen::<f64>() < cfg.bridge_fraction;
        out.push(if bridge { b.bridge(id, false) } else { b.comparison(id) });
    }
    Ok(out)
}

/// Bridge examples whose annotated first-hop document is redundant: the
/// answer sits in one gold document, and the link to it is stated by a
/// non-gold document instead. A model that answers these correctly does so
/// from a single gold document.
pub fn synth_shortcut_examples(cfg: &SynthConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    if cfg.n_docs_per_example < 3 {
        return Err(Error::Synth("shortcut examples need at least three documents".into()));
    }
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    Ok((0..cfg.n_examples)
        .map(|i| b.bridge(format!("shortcut-{}-{i:05}", cfg.seed), true))
        .collect())
}

/// Bridge-only examples without planted shortcuts; the clean counterpart of
/// [`synth_shortcut_examples`] for the same config.
pub fn synth_bridge_examples(cfg: &SynthConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    Ok((0..cfg.n_examples)
        .map(|i| b.bridge(format!("bridge-{}-{i:05}", cfg.seed), false))
        .collect())
}
