#![allow(dead_code)]

use std::collections::BTreeSet;

use latentqa::data::{AnswerSpec, BqaLabel, Choice, Document, Example, Vocab};
use latentqa::model::{EncodedExample, ModelConfig};
use latentqa::params::{init_params, EncoderConfig, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 10] = ["red", "blue", "lake", "city", "old", "river", "north", "stone", "green", "hill"];

fn sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.gen_range(1..=3);
    (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
}

/// A random extractive example with the given document and sentence counts.
pub fn random_example(seed: u64, n_docs: usize, max_sents: usize, answer: AnswerSpec) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let documents = (0..n_docs)
        .map(|i| Document {
            title: format!("doc{i}"),
            sentences: (0..rng.gen_range(1..=max_sents)).map(|_| sentence(&mut rng)).collect(),
        })
        .collect();
    Example {
        id: format!("rand-{seed}"),
        question: sentence(&mut rng),
        documents,
        answer,
        gold_docs: Some(BTreeSet::from([0])),
        gold_rationale: Some(BTreeSet::from([(0, 0)])),
        reasoning_tag: None,
    }
}

pub fn eqa(tokens: &[&str]) -> AnswerSpec {
    AnswerSpec::Eqa(tokens.iter().map(|s| s.to_string()).collect())
}

pub fn bqa(label: BqaLabel) -> AnswerSpec {
    AnswerSpec::Bqa(label)
}

pub fn mcq() -> AnswerSpec {
    AnswerSpec::Mcq(vec![
        Choice { text: vec!["lake".into()], correct: true },
        Choice { text: vec!["hill".into()], correct: false },
        Choice { text: vec!["city".into()], correct: true },
    ])
}

pub fn tiny_encoder(seed: u64) -> EncoderConfig {
    EncoderConfig {
        embedding_dim: 4,
        mlp_hidden: 3,
        decoder_hidden: 4,
        slice_len: 1,
        init_scale: 0.5,
        seed,
    }
}

/// Vocabulary, parameters and encodings for a handful of examples.
pub fn setup(examples: &[Example], enc: &EncoderConfig) -> (Vocab, ParamStore, Vec<EncodedExample>) {
    let vocab = Vocab::build(examples);
    let store = init_params(enc, vocab.len()).unwrap();
    let encoded = examples.iter().map(|e| EncodedExample::encode(&vocab, e).unwrap()).collect();
    (vocab, store, encoded)
}

/// Document space of every non-empty set up to `size`.
pub fn space_up_to(size: usize) -> ModelConfig {
    ModelConfig {
        doc_set_size: size,
        doc_sets_up_to: true,
        ..ModelConfig::default()
    }
}
