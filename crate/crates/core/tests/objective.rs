mod common;

use common::*;
use latentqa::data::BqaLabel;
use latentqa::model::ModelConfig;
use latentqa::trainer::{approx_marginal_ll, compute_gradients, exact_marginal_ll, gradient_check, joint_logprob, joint_parts, Budget, EXACT_CAP};
use latentqa::setspace::Subset;

const COVER: Budget = Budget { k_doc: 1_000, k_sent: 1_000 };

#[test]
fn covering_budget_matches_exact_marginal() {
    for seed in 0..50u64 {
        let n_docs = 1 + (seed % 3) as usize;
        let ex = random_example(seed, n_docs, 4, eqa(&["red"]));
        let (_, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(seed));
        let cfg = space_up_to(n_docs.min(2));
        let approx = approx_marginal_ll(&store, &enc[0], &cfg, COVER).unwrap();
        let exact = exact_marginal_ll(&store, &enc[0], &cfg, EXACT_CAP).unwrap();
        assert!((approx - exact).abs() < 1e-9, "seed {seed}: {approx} vs {exact}");
    }
}

#[test]
fn approximation_is_monotone_and_bounded() {
    for seed in 0..20u64 {
        let ex = random_example(100 + seed, 3, 4, eqa(&["blue", "lake"]));
        let (_, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(seed));
        let cfg = ModelConfig { doc_set_size: 2, ..ModelConfig::default() };
        let exact = exact_marginal_ll(&store, &enc[0], &cfg, EXACT_CAP).unwrap();
        let mut prev_doc = f64::NEG_INFINITY;
        for k_doc in 1..=3 {
            let mut prev = f64::NEG_INFINITY;
            for k_sent in 1..=20 {
                let v = approx_marginal_ll(&store, &enc[0], &cfg, Budget { k_doc, k_sent }).unwrap();
                assert!(v >= prev - 1e-12);
                assert!(v <= exact + 1e-12);
                prev = v;
            }
            assert!(prev >= prev_doc - 1e-12);
            prev_doc = prev;
        }
    }
}

#[test]
fn degenerate_space_equals_joint() {
    let mut ex = random_example(3, 1, 1, eqa(&["red"]));
    ex.gold_rationale = None;
    let (_, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(3));
    let cfg = ModelConfig { doc_set_size: 1, ..ModelConfig::default() };
    let only = Subset::singleton(0);
    let joint = joint_logprob(&store, &enc[0], &cfg, &only, &[only.clone()]).unwrap();
    let exact = exact_marginal_ll(&store, &enc[0], &cfg, EXACT_CAP).unwrap();
    assert!((joint - exact).abs() < 1e-12);
    let (d, z, y) = joint_parts(&store, &enc[0], &cfg, &only, &[only.clone()]).unwrap();
    assert_eq!(d, 0.0);
    assert_eq!(z, 0.0);
    assert_eq!(joint, d + z + y);
}

#[test]
fn exact_refuses_large_spaces() {
    let ex = random_example(4, 3, 4, eqa(&["red"]));
    let (_, store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(4));
    let cfg = ModelConfig { doc_set_size: 2, ..ModelConfig::default() };
    assert!(matches!(
        exact_marginal_ll(&store, &enc[0], &cfg, 3),
        Err(latentqa::Error::CapExceeded { .. })
    ));
}

#[test]
fn gradients_match_central_differences_for_every_task() {
    for (i, answer) in [eqa(&["red", "lake"]), bqa(BqaLabel::Refuted), mcq()].into_iter().enumerate() {
        let ex = random_example(40 + i as u64, 2, 2, answer);
        let ex2 = random_example(60 + i as u64, 2, 2, ex.answer.clone());
        let (_, store, enc) = setup(&[ex, ex2], &tiny_encoder(9));
        let report = gradient_check(&store, &enc, &space_up_to(2), COVER, 1e-4).unwrap();
        for a in &report.arrays {
            assert!(a.max_rel_error < 1e-4, "task {i}: {} rel error {}", a.name, a.max_rel_error);
        }
        assert!(report.arrays.iter().all(|a| a.max_abs_gradient > 0.0));
    }
}

#[test]
fn doubling_the_batch_keeps_the_mean_gradient() {
    let exs: Vec<_> = (0..3).map(|s| random_example(s, 3, 3, eqa(&["hill"]))).collect();
    let (_, mut store, enc) = setup(&exs, &tiny_encoder(5));
    let cfg = ModelConfig::default();
    let budget = Budget { k_doc: 2, k_sent: 3 };
    let single = compute_gradients(&mut store, &enc, &cfg, budget).unwrap();
    let g1 = store.grads.clone();
    let doubled: Vec<_> = enc.iter().chain(&enc).cloned().collect();
    let double = compute_gradients(&mut store, &doubled, &cfg, budget).unwrap();
    assert!((single - double).abs() < 1e-12);
    for ((_, a), (_, b)) in g1.arrays().into_iter().zip(store.grads.arrays()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn symmetric_candidates_give_zero_sentence_gradient() {
    // one document whose two sentences are identical: every candidate scores alike
    let mut ex = random_example(8, 1, 1, eqa(&["red"]));
    let s = ex.documents[0].sentences[0].clone();
    ex.documents[0].sentences = vec![s.clone(), s];
    let (_, mut store, enc) = setup(std::slice::from_ref(&ex), &tiny_encoder(8));
    let cfg = ModelConfig { doc_set_size: 1, max_rationale: 1, ..ModelConfig::default() };
    compute_gradients(&mut store, &enc, &cfg, COVER).unwrap();
    assert!(store.grads.sentence_score.data.iter().all(|g| g.abs() < 1e-15));
}

#[test]
fn small_step_does_not_decrease_the_objective() {
    for seed in 0..10u64 {
        let exs: Vec<_> = (0..2).map(|s| random_example(seed * 10 + s, 3, 3, eqa(&["stone"]))).collect();
        let (_, mut store, enc) = setup(&exs, &tiny_encoder(seed));
        let cfg = ModelConfig::default();
        let budget = Budget { k_doc: 3, k_sent: 9 };
        let before = compute_gradients(&mut store, &enc, &cfg, budget).unwrap();
        let grads = store.grads.clone();
        store.values.add_scaled(-1e-6, &grads);
        let after = compute_gradients(&mut store, &enc, &cfg, budget).unwrap();
        // objective is the negated mean log-likelihood
        assert!(after <= before + 1e-15, "seed {seed}: {before} -> {after}");
    }
}
