mod common;

use std::collections::BTreeSet;

use common::*;
use latentqa::data::{BqaLabel, Document, Example, ReasoningTag, Vocab};
use latentqa::eval::{
    aggregate, evaluate, find_shortcuts, predict, score_example, ExampleScores, PredictedAnswer, Prediction,
};
use latentqa::model::{Model, ModelConfig};
use latentqa::params::{init_params, EncoderConfig};
use latentqa::scorer::doc_set_distribution;
use latentqa::setspace::{Subset, SubsetSpace};
use latentqa::trainer::{joint_parts, Checkpoint};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn doc(title: &str, sentences: &[&str]) -> Document {
    Document {
        title: title.into(),
        sentences: sentences.iter().map(|s| toks(s)).collect(),
    }
}

/// Gold documents 0 and 2, gold sentences (0, 0) and (2, 1); only gold
/// sentences carry the token `key`.
fn keyed_example(id: &str, answer: &str) -> Example {
    Example {
        id: id.into(),
        question: toks("which color"),
        documents: vec![
            doc("p", &["key red", "plain words"]),
            doc("q", &["other words", "more words"]),
            doc("r", &["plain stuff", "key fact"]),
        ],
        answer: eqa(&[answer]),
        gold_docs: Some(BTreeSet::from([0, 2])),
        gold_rationale: Some(BTreeSet::from([(0, 0), (2, 1)])),
        reasoning_tag: Some(ReasoningTag::Bridge),
    }
}

fn zero_model(examples: &[Example], n: usize) -> Model {
    let vocab = Vocab::build(examples);
    let enc = EncoderConfig {
        embedding_dim: n,
        mlp_hidden: 2,
        decoder_hidden: 2,
        slice_len: 4,
        init_scale: 0.0,
        seed: 0,
    };
    Model {
        store: init_params(&enc, vocab.len()).unwrap(),
        vocab,
        config: ModelConfig::default(),
    }
}

/// Selection prefers documents and sentences containing `key`; the decoder
/// emits `red` then stops.
fn rigged_model(examples: &[Example]) -> Model {
    let n = 4;
    let mut m = zero_model(examples, n);
    let id = |t: &str| m.vocab.id(t).unwrap() as usize;
    let (key, red, eos) = (id("key"), id("red"), Vocab::EOS_ID as usize);
    let p = &mut m.store.values;
    p.token_embeddings.row_mut(key)[0] = 1.0;
    p.mlp_w1.row_mut(0)[0] = 1.0;
    p.mlp_w1.row_mut(0)[n] = 1.0;
    p.mlp_w2.data[0] = 5.0;
    p.sentence_score.data[0] = 5.0;
    for r in 0..p.decoder_embeddings.shape[0] {
        p.decoder_embeddings.row_mut(r)[0] = 1.0;
    }
    p.decoder_embeddings.row_mut(red)[1] = 1.0;
    p.decoder_w.row_mut(0)[0] = 1.0;
    p.decoder_w.row_mut(1)[n + 1] = 5.0;
    p.decoder_u.row_mut(red)[0] = 10.0;
    p.decoder_u.row_mut(red)[1] = -20.0;
    p.decoder_u.row_mut(eos)[1] = 20.0;
    m
}

fn gold_prediction(ex: &Example) -> Prediction {
    let docs: Vec<usize> = ex.gold_docs.clone().unwrap().into_iter().collect();
    let rationale = docs
        .iter()
        .map(|&d| {
            let sents = ex.gold_rationale.as_ref().unwrap().iter().filter(|(g, _)| *g == d).map(|&(_, s)| s).collect();
            Subset::new(sents).unwrap()
        })
        .collect();
    let latentqa::data::AnswerSpec::Eqa(answer) = &ex.answer else { panic!("extractive only") };
    Prediction {
        id: ex.id.clone(),
        doc_set: Subset::new(docs).unwrap(),
        rationale,
        answer: PredictedAnswer::Text(answer.clone()),
        doc_logprob: 0.0,
        rationale_logprob: 0.0,
        answer_logprob: 0.0,
        truncated: false,
    }
}

#[test]
fn rigged_parameters_recover_the_gold_prediction() {
    let ex = keyed_example("k", "red");
    let m = rigged_model(std::slice::from_ref(&ex));
    let pred = predict(&m.store, &m.vocab, &m.encode(&ex).unwrap(), &m.config).unwrap();
    assert_eq!(pred.doc_indices(), ex.gold_docs.clone().unwrap());
    assert_eq!(pred.sentence_pairs(), ex.gold_rationale.clone().unwrap());
    assert_eq!(pred.answer, PredictedAnswer::Text(toks("red")));
    assert!(!pred.truncated);
    let (report, _) = evaluate(&m, std::slice::from_ref(&ex)).unwrap();
    assert_eq!(report.overall.sentence_f1, Some(1.0));
    assert_eq!(report.overall.doc_f1, Some(1.0));
    assert_eq!(report.overall.answer_em, 1.0);
}

#[test]
fn uniform_model_breaks_ties_toward_the_smallest_sets() {
    let ex = keyed_example("u", "red");
    let m = zero_model(std::slice::from_ref(&ex), 3);
    let pred = predict(&m.store, &m.vocab, &m.encode(&ex).unwrap(), &m.config).unwrap();
    assert_eq!(pred.doc_set.indices(), &[0, 1]);
    assert_eq!(pred.rationale, vec![Subset::singleton(0), Subset::singleton(0)]);
    // every token ties, so greedy decoding emits EOS (id 0) at once
    assert_eq!(pred.answer, PredictedAnswer::Text(vec![]));
}

#[test]
fn stage_logprobs_match_the_joint_factors() {
    for seed in 0..5 {
        let ex = random_example(seed, 3, 3, eqa(&["red"]));
        let (vocab, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(seed));
        let cfg = ModelConfig::default();
        let pred = predict(&store, &vocab, &enc[0], &cfg).unwrap();
        let (doc, rat, _) = joint_parts(&store, &enc[0], &cfg, &pred.doc_set, &pred.rationale).unwrap();
        assert!((pred.doc_logprob - doc).abs() < 1e-12);
        assert!((pred.rationale_logprob - rat).abs() < 1e-12);
        assert!(pred.answer_logprob.is_finite() && pred.answer_logprob <= 0.0);
        assert_eq!(pred, predict(&store, &vocab, &enc[0], &cfg).unwrap());
    }
}

#[test]
fn predicted_documents_are_the_brute_force_argmax() {
    for seed in 0..20 {
        let ex = random_example(100 + seed, 4, 2, bqa(BqaLabel::Supported));
        let (vocab, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(seed));
        let cfg = ModelConfig::default();
        let pred = predict(&store, &vocab, &enc[0], &cfg).unwrap();
        let dist = doc_set_distribution(
            &store.values,
            &enc[0].question,
            &enc[0].docs,
            SubsetSpace::exactly(4, 2).unwrap(),
            store.config.slice_len,
        )
        .unwrap();
        let lps = dist.log_probs();
        let best = (0..lps.len()).fold(0, |b, i| if lps[i] > lps[b] { i } else { b });
        assert_eq!(pred.doc_set, dist.subsets()[best]);
    }
}

fn tagged(id: &str, tag: Option<ReasoningTag>) -> Example {
    Example {
        reasoning_tag: tag,
        ..keyed_example(id, "red")
    }
}

fn scores(id: &str, s: f64, d: f64, f: f64, e: f64) -> ExampleScores {
    ExampleScores {
        id: id.into(),
        sentence_f1: Some(s),
        doc_f1: Some(d),
        answer_f1: f,
        answer_em: e,
    }
}

#[test]
fn gold_equal_predictions_score_one_everywhere() {
    let examples = [tagged("a", Some(ReasoningTag::Bridge)), tagged("b", Some(ReasoningTag::Comparison))];
    let s: Vec<_> = examples.iter().map(|e| score_example(&gold_prediction(e), e)).collect();
    let report = aggregate(&s, &examples);
    for g in std::iter::once(&report.overall).chain(report.by_tag.values()) {
        assert_eq!((g.sentence_f1, g.doc_f1, g.answer_f1, g.answer_em), (Some(1.0), Some(1.0), 1.0, 1.0));
    }
}

#[test]
fn overall_is_the_count_weighted_mean_of_tags() {
    let examples = [
        tagged("a", Some(ReasoningTag::Bridge)),
        tagged("b", Some(ReasoningTag::Bridge)),
        tagged("c", Some(ReasoningTag::Bridge)),
        tagged("d", Some(ReasoningTag::Comparison)),
    ];
    let s = [
        scores("a", 0.2, 0.5, 1.0, 1.0),
        scores("b", 0.4, 0.5, 0.0, 0.0),
        scores("c", 0.9, 1.0, 0.5, 0.0),
        scores("d", 0.1, 0.0, 1.0, 1.0),
    ];
    let r = aggregate(&s, &examples);
    let b = &r.by_tag["bridge"];
    let c = &r.by_tag["comparison"];
    assert_eq!((b.count, c.count, r.overall.count), (3, 1, 4));
    let weighted = |x: f64, y: f64| (3.0 * x + y) / 4.0;
    assert!((r.overall.sentence_f1.unwrap() - weighted(b.sentence_f1.unwrap(), c.sentence_f1.unwrap())).abs() < 1e-12);
    assert!((r.overall.doc_f1.unwrap() - weighted(b.doc_f1.unwrap(), c.doc_f1.unwrap())).abs() < 1e-12);
    assert!((r.overall.answer_f1 - weighted(b.answer_f1, c.answer_f1)).abs() < 1e-12);
    assert!((r.overall.answer_em - weighted(b.answer_em, c.answer_em)).abs() < 1e-12);

    // order of examples does not matter
    let rev_s: Vec<_> = s.iter().rev().cloned().collect();
    let rev_e: Vec<_> = examples.iter().rev().cloned().collect();
    let r2 = aggregate(&rev_s, &rev_e);
    assert_eq!(r2.by_tag, r.by_tag);
    assert!((r2.overall.sentence_f1.unwrap() - r.overall.sentence_f1.unwrap()).abs() < 1e-12);
}

#[test]
fn empty_tags_are_omitted_and_untagged_count_only_overall() {
    let examples = [tagged("a", Some(ReasoningTag::Bridge)), tagged("b", None)];
    let s = [scores("a", 1.0, 1.0, 1.0, 1.0), scores("b", 0.0, 0.0, 0.0, 0.0)];
    let r = aggregate(&s, &examples);
    assert_eq!(r.by_tag.keys().collect::<Vec<_>>(), ["bridge"]);
    assert_eq!(r.overall.count, 2);
    assert_eq!(r.overall.sentence_f1, Some(0.5));
    assert!(!r.to_json().unwrap().contains("comparison"));
}

#[test]
fn shortcut_filter_cases() {
    // the rigged model always picks documents {0, 2}, sentences (0,0), (2,1), answer "red"
    let one_gold_doc = Example {
        gold_docs: Some(BTreeSet::from([0, 1])),
        gold_rationale: Some(BTreeSet::from([(0, 0), (1, 0)])),
        ..keyed_example("one-gold", "red")
    };
    let fully_correct = keyed_example("correct", "red");
    let wrong_answer = Example {
        answer: eqa(&["blue"]),
        ..one_gold_doc.clone()
    };
    let wrong_answer = Example { id: "wrong".into(), ..wrong_answer };
    let unannotated = Example {
        id: "bare".into(),
        gold_docs: None,
        gold_rationale: None,
        ..keyed_example("bare", "red")
    };
    let examples = [one_gold_doc, fully_correct, wrong_answer, unannotated];
    let m = rigged_model(&examples);
    let report = find_shortcuts(&m, &examples).unwrap();
    assert_eq!(report.flagged, ["one-gold"]);
    assert_eq!((report.inspected, report.skipped), (3, 1));
}

#[test]
fn checkpoint_round_trip_is_bit_exact_and_predicts_identically() {
    let examples: Vec<_> = (0..4).map(|s| random_example(200 + s, 3, 3, eqa(&["lake"]))).collect();
    let (vocab, store, _) = setup(&examples, &tiny_encoder(3));
    let model = Model {
        vocab,
        config: ModelConfig::default(),
        store,
    };
    let ckpt = Checkpoint::capture(&model, 12, 3, None, "abc".into());
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    for ((_, a), (_, b)) in back.params.arrays().into_iter().zip(ckpt.params.arrays()) {
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let (r1, p1) = evaluate(&ckpt.to_model().unwrap(), &examples).unwrap();
    let (r2, p2) = evaluate(&back.to_model().unwrap(), &examples).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let ex = random_example(1, 2, 2, eqa(&["lake"]));
    let (vocab, store, _) = setup(std::slice::from_ref(&ex), &tiny_encoder(1));
    let model = Model {
        vocab,
        config: ModelConfig::default(),
        store,
    };
    let bytes = Checkpoint::capture(&model, 1, 1, None, String::new()).to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
    let mut magic = bytes;
    magic[0] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(latentqa::Error::Checkpoint(_))));
}
