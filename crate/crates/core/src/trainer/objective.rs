//! The joint model `p(d|x) · Π p(z_i|d_i,x) · p(y|z,x)`, its top-k marginal
//! likelihood, the exact oracle and reverse-mode gradients.

use crate::answer::{backward_seq, context_backward, context_vector, forward_seq, SeqTrace};
use crate::error::{Error, Result};
use crate::model::{EncodedExample, ModelConfig};
use crate::params::{ParamStore, Params};
use crate::scorer::{mean_rows, DocLayer, SentenceLayer};
use crate::setspace::{enumerate_subsets, log_sum_exp, top_k, top_k_product, Subset};

/// Default ceiling on the configurations [`exact_marginal_ll`] will visit.
pub const EXACT_CAP: u128 = 10_000;

/// Candidate budgets of the top-k approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub k_doc: usize,
    pub k_sent: usize,
}

pub(crate) struct AnswerTrace {
    ctx_ids: Vec<u32>,
    seqs: Vec<Vec<SeqTrace>>,
    pub logprob: f64,
}

pub(crate) fn answer_forward(params: &Params, ex: &EncodedExample, rationale: &[&[u32]]) -> AnswerTrace {
    let ctx_ids = ex.template.context(&ex.question, rationale);
    let ctx = context_vector(params, &ctx_ids);
    let mut logprob = 0.0;
    let seqs = ex
        .target
        .groups
        .iter()
        .map(|g| {
            let traces: Vec<SeqTrace> = g.alternatives.iter().map(|a| forward_seq(params, &ctx, a)).collect();
            logprob += traces[g.observed].logprob;
            if ex.target.normalized {
                let lps: Vec<f64> = traces.iter().map(|t| t.logprob).collect();
                logprob -= log_sum_exp(&lps);
            }
            traces
        })
        .collect();
    AnswerTrace {
        ctx_ids,
        seqs,
        logprob,
    }
}

pub(crate) fn answer_backward(params: &Params, grads: &mut Params, ex: &EncodedExample, trace: &AnswerTrace, w: f64) {
    let mut dctx = vec![0.0; params.decoder_embeddings.cols()];
    for (g, traces) in ex.target.groups.iter().zip(&trace.seqs) {
        let z = if ex.target.normalized {
            log_sum_exp(&traces.iter().map(|t| t.logprob).collect::<Vec<_>>())
        } else {
            f64::NEG_INFINITY
        };
        for (a, t) in traces.iter().enumerate() {
            let mut coef = if a == g.observed { 1.0 } else { 0.0 };
            if ex.target.normalized {
                coef -= (t.logprob - z).exp();
            }
            if coef == 0.0 {
                continue;
            }
            let d = backward_seq(params, grads, t, w * coef);
            dctx.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
        }
    }
    context_backward(grads, &trace.ctx_ids, &dctx);
}

/// Per-document sentence layers and the document layer for one example.
pub(crate) struct Layers {
    pub doc: DocLayer,
    pub sents: Vec<SentenceLayer>,
}

pub(crate) fn layers(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig) -> Result<Layers> {
    let params = &store.values;
    let space = cfg.doc_space(ex.docs.len())?;
    let doc = DocLayer::forward(params, &ex.question, &ex.docs, space, store.config.slice_len, cfg.doc_model)?;
    let q = mean_rows(&params.token_embeddings, &ex.question);
    let sents = ex
        .docs
        .iter()
        .map(|d| SentenceLayer::forward(params, &q, d, cfg.sentence_space(d.len())?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Layers { doc, sents })
}

fn check_structure(ex: &EncodedExample, layers: &Layers, doc_set: &Subset, rationale: &[Subset]) -> Result<usize> {
    let pos = layers
        .doc
        .dist
        .position(doc_set)
        .ok_or_else(|| Error::InvalidArgument(format!("document set {doc_set} is not valid for {}", ex.id)))?;
    if rationale.len() != doc_set.len() {
        return Err(Error::InvalidArgument(format!(
            "rationale covers {} documents, set has {}",
            rationale.len(),
            doc_set.len()
        )));
    }
    for (&d, z) in doc_set.indices().iter().zip(rationale) {
        if layers.sents[d].dist.position(z).is_none() {
            return Err(Error::InvalidArgument(format!(
                "sentence subset {z} is not valid for document {d} of {}",
                ex.id
            )));
        }
    }
    Ok(pos)
}

/// `log p(d|x) + Σ log p(z_i|d_i,x) + log p(y|z,x)`.
pub fn joint_logprob(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig, doc_set: &Subset, rationale: &[Subset]) -> Result<f64> {
    let parts = joint_parts(store, ex, cfg, doc_set, rationale)?;
    Ok(parts.0 + parts.1 + parts.2)
}

/// The three component log-probs of [`joint_logprob`], in model order.
pub fn joint_parts(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig, doc_set: &Subset, rationale: &[Subset]) -> Result<(f64, f64, f64)> {
    let layers = layers(store, ex, cfg)?;
    let pos = check_structure(ex, &layers, doc_set, rationale)?;
    let doc_lp = layers.doc.dist.log_probs()[pos];
    let sent_lp: f64 = doc_set
        .indices()
        .iter()
        .zip(rationale)
        .map(|(&d, z)| layers.sents[d].dist.log_prob(z).unwrap_or(f64::NEG_INFINITY))
        .sum();
    let answer_lp = answer_forward(&store.values, ex, &ex.rationale_ids(doc_set, rationale)).logprob;
    Ok((doc_lp, sent_lp, answer_lp))
}

struct Candidate {
    doc_pos: usize,
    doc_set: Subset,
    sent_pos: Vec<usize>,
    joint: f64,
    answer: AnswerTrace,
}

struct Forward {
    layers: Layers,
    cands: Vec<Candidate>,
    value: f64,
}

fn forward(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig, budget: Budget) -> Result<Forward> {
    if budget.k_doc == 0 || budget.k_sent == 0 {
        return Err(Error::InvalidArgument("k_doc and k_sent must be at least 1".into()));
    }
    let layers = layers(store, ex, cfg)?;
    let mut cands = Vec::new();
    for (doc_set, doc_lp) in top_k(&layers.doc.dist, budget.k_doc).into_items() {
        let doc_pos = layers.doc.dist.position(&doc_set).expect("top-k member");
        let dists: Vec<_> = doc_set.indices().iter().map(|&d| layers.sents[d].dist.clone()).collect();
        for (rationale, sent_lp) in top_k_product(&dists, budget.k_sent)?.into_items() {
            let sent_pos = doc_set
                .indices()
                .iter()
                .zip(&rationale)
                .map(|(&d, z)| layers.sents[d].dist.position(z).expect("product member"))
                .collect();
            let answer = answer_forward(&store.values, ex, &ex.rationale_ids(&doc_set, &rationale));
            cands.push(Candidate {
                doc_pos,
                joint: doc_lp + sent_lp + answer.logprob,
                doc_set: doc_set.clone(),
                sent_pos,
                answer,
            });
        }
    }
    if cands.is_empty() {
        return Err(Error::NoCandidates(ex.id.clone()));
    }
    let joints: Vec<f64> = cands.iter().map(|c| c.joint).collect();
    let value = log_sum_exp(&joints);
    Ok(Forward { layers, cands, value })
}

/// `log Σ_{d ∈ S^k_doc} Σ_{z ∈ S_d^k_sent} p(y, z, d | x)`.
pub fn approx_marginal_ll(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig, budget: Budget) -> Result<f64> {
    Ok(forward(store, ex, cfg, budget)?.value)
}

/// `log Σ p(y, z, d | x)` over every valid `(d, z)`, refusing more than `cap`
/// configurations.
pub fn exact_marginal_ll(store: &ParamStore, ex: &EncodedExample, cfg: &ModelConfig, cap: u128) -> Result<f64> {
    let layers = layers(store, ex, cfg)?;
    let sets = layers.doc.dist.subsets();
    let count: u128 = sets
        .iter()
        .map(|s| s.indices().iter().map(|&d| layers.sents[d].dist.len() as u128).product::<u128>())
        .sum();
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut terms = Vec::with_capacity(count as usize);
    for (doc_set, &doc_lp) in sets.iter().zip(layers.doc.dist.log_probs()) {
        let per_doc: Vec<Vec<Subset>> = doc_set
            .indices()
            .iter()
            .map(|&d| enumerate_subsets(layers.sents[d].dist.space()))
            .collect();
        let mut idx = vec![0usize; per_doc.len()];
        'tuples: loop {
            let rationale: Vec<Subset> = idx.iter().zip(&per_doc).map(|(&i, s)| s[i].clone()).collect();
            let sent_lp: f64 = doc_set
                .indices()
                .iter()
                .zip(&rationale)
                .map(|(&d, z)| layers.sents[d].dist.log_prob(z).expect("enumerated subset"))
                .sum();
            let answer_lp = answer_forward(&store.values, ex, &ex.rationale_ids(doc_set, &rationale)).logprob;
            terms.push(doc_lp + sent_lp + answer_lp);
            for axis in (0..idx.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < per_doc[axis].len() {
                    continue 'tuples;
                }
                idx[axis] = 0;
            }
            break;
        }
    }
    if terms.is_empty() {
        return Err(Error::NoCandidates(ex.id.clone()));
    }
    Ok(log_sum_exp(&terms))
}

/// Adds `scale · ∂ approx_marginal_ll / ∂θ` into `grads`; returns the value.
fn accumulate(store: &ParamStore, grads: &mut Params, ex: &EncodedExample, cfg: &ModelConfig, budget: Budget, scale: f64) -> Result<f64> {
    let params = &store.values;
    let fw = forward(store, ex, cfg, budget)?;
    if !fw.value.is_finite() {
        return Err(Error::NonFinite(format!("marginal likelihood of {}", ex.id)));
    }
    let weights: Vec<f64> = fw.cands.iter().map(|c| (c.joint - fw.value).exp()).collect();

    // document sets: Σ_c w_c [d_c = s] − p(s)
    let doc_dist = &fw.layers.doc.dist;
    let mut ddoc: Vec<f64> = doc_dist.log_probs().iter().map(|lp| -lp.exp() * scale).collect();
    for (c, &w) in fw.cands.iter().zip(&weights) {
        ddoc[c.doc_pos] += w * scale;
    }
    fw.layers.doc.backward(params, grads, &ex.question, &ex.docs, store.config.slice_len, &ddoc);

    // sentence subsets per document: Σ_{c: i ∈ d_c} w_c ([z_ci = s] − p_i(s))
    let mut dsent: Vec<Option<Vec<f64>>> = vec![None; ex.docs.len()];
    for (c, &w) in fw.cands.iter().zip(&weights) {
        for (&d, &pos) in c.doc_set.indices().iter().zip(&c.sent_pos) {
            let layer = &fw.layers.sents[d];
            let g = dsent[d].get_or_insert_with(|| vec![0.0; layer.dist.len()]);
            for (gi, lp) in g.iter_mut().zip(layer.dist.log_probs()) {
                *gi -= w * scale * lp.exp();
            }
            g[pos] += w * scale;
        }
    }
    for (d, g) in dsent.iter().enumerate() {
        if let Some(g) = g {
            fw.layers.sents[d].backward(params, grads, &ex.question, &ex.docs[d], g);
        }
    }

    for (c, &w) in fw.cands.iter().zip(&weights) {
        answer_backward(params, grads, ex, &c.answer, w * scale);
    }
    Ok(fw.value)
}

/// Fills `store.grads` with the gradient of `−(1/|batch|) Σ
/// approx_marginal_ll` and returns that objective.
///
/// Candidate sets are held fixed; gradients flow through the probabilities
/// of the enumerated candidates only.
pub fn compute_gradients(store: &mut ParamStore, batch: &[EncodedExample], cfg: &ModelConfig, budget: Budget) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = std::mem::replace(&mut store.grads, Params::zeros(&store.config, 0));
    grads.fill(0.0);
    let scale = -1.0 / batch.len() as f64;
    let mut objective = 0.0;
    let mut result = Ok(());
    for ex in batch {
        match accumulate(store, &mut grads, ex, cfg, budget, scale) {
            Ok(v) => objective += scale * v,
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    store.grads = grads;
    result?;
    if let Some(name) = store.grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    Ok(objective)
}
